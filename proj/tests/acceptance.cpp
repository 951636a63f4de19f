// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "dx/adapter/bfloat16.hpp"
#include "dx/adapter/cross_entropy.hpp"
#include "dx/adapter/lora.hpp"
#include "dx/adapter/nf4.hpp"
#include "dx/commands.hpp"
#include "dx/metrics.hpp"
#include "dx/prompt.hpp"
#include "dx/split.hpp"
#include "dx/store.hpp"
#include "dx/vote.hpp"
#include "support/oracles.hpp"

using namespace dx;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string title;
  double time_limit_s;  // <= 0: no limit
  std::function<Outcome()> check;
};

const fs::path kSource = DX_SOURCE_DIR;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1 -------------------------------------------------------------------------
Outcome parameter_counts() {
  std::string detail;
  bool pass = true;
  for (const char* file : {"llama3-8b.json", "mistral-7b.json"}) {
    std::ostringstream out;
    const auto count = cli::cmd_param_count({kSource / "data/arch" / file, 64, 16.0}, out);
    const bool printed = out.str().find("167772160") != std::string::npos;
    pass = pass && count.lora_params == 167772160ull && printed;
    detail += fmt::format("{}={} ", file, count.lora_params);
  }
  return {pass, detail + "(expected 167772160)"};
}

// 2 -------------------------------------------------------------------------
Outcome metric_identity() {
  const double direct = f1_from(0.941, 0.877);
  // Same identity through evaluate(): 877 hits, 55 spurious, 123 missed give
  // P = 0.94099 and R = 0.877 at three decimals.
  const std::size_t tp = 877, fp = 55, fn = 123;
  std::vector<EvalPair> pairs(100);
  PathologyId next = 1;
  for (std::size_t i = 0; i < tp; ++i) {
    auto& p = pairs[i % pairs.size()];
    p.gold.labels.insert(next);
    p.predicted.labels.insert(next++);
  }
  for (std::size_t i = 0; i < fp; ++i) pairs[i % pairs.size()].predicted.labels.insert(next++);
  for (std::size_t i = 0; i < fn; ++i) pairs[i % pairs.size()].gold.labels.insert(next++);
  const auto r = evaluate(pairs).overall;
  const bool pass = std::abs(direct - 0.908) <= 0.0005 && std::abs(r.f1_micro - 0.908) <= 0.0005 &&
                    std::abs(r.precision - 0.941) < 0.0005 && std::abs(r.recall - 0.877) < 0.0005;
  return {pass, fmt::format("f1_from={:.6f}, evaluate: P={:.6f} R={:.6f} F1={:.6f}", direct, r.precision,
                            r.recall, r.f1_micro)};
}

// 3 -------------------------------------------------------------------------
Outcome metrics_oracle() {
  std::mt19937_64 rng(20240601);
  std::size_t instances = 0, mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = 1 + int(rng() % 20);
    const std::size_t reports = 1 + rng() % 50;
    std::vector<EvalPair> pairs;
    for (std::size_t i = 0; i < reports; ++i) {
      EvalPair p;
      p.report_id = "r" + std::to_string(i);
      p.modality = static_cast<Modality>(rng() % 5);
      const auto density = 2 + rng() % 6;
      for (int k = 1; k <= classes; ++k) {
        if (rng() % density == 0) p.gold.labels.insert(k);
        if (rng() % density == 0) p.predicted.labels.insert(k);
      }
      while (rng() % 5 == 0) p.predicted.oov_names.push_back("unlisted " + std::to_string(rng() % 4));
      std::sort(p.predicted.oov_names.begin(), p.predicted.oov_names.end());
      pairs.push_back(std::move(p));
    }
    for (const bool oov_fp : {true, false}) {
      ++instances;
      const auto got = evaluate(pairs, {.count_oov_as_fp = oov_fp});
      const auto want = testing::brute_force_metrics(pairs, classes, oov_fp);
      auto same = [&](const MetricsSummary& g, const testing::OracleMetrics& w) {
        return g.tp == w.tp && g.fp == w.fp && g.fn == w.fn && g.precision == w.precision &&
               g.recall == w.recall && g.f1_micro == w.f1_micro && g.f1_macro == w.f1_macro &&
               g.hallucination_rate == w.hallucination;
      };
      bool ok = same(got.overall, want);
      std::map<Modality, std::vector<EvalPair>> groups;
      for (const auto& p : pairs) groups[p.modality].push_back(p);
      for (const auto& [m, group] : groups) {
        ok = ok && got.per_modality.count(m) &&
             same(got.per_modality.at(m), testing::brute_force_metrics(group, classes, oov_fp));
      }
      ok = ok && got.per_modality.size() == groups.size();
      mismatches += !ok;
    }
  }
  return {mismatches == 0 && instances >= 1000,
          fmt::format("{} instances (overall and per modality), {} mismatches", instances, mismatches)};
}

// 4 -------------------------------------------------------------------------
Outcome gradient_check() {
  using adapter::Matrix;
  using adapter::TokenBatch;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 2.0);
  const double h = 1e-4;
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const std::size_t t_len = 1 + rng() % 8, vocab = 2 + rng() % 15;
    TokenBatch batch{Matrix(t_len, vocab), {}, {}};
    for (auto& x : batch.logits.data()) x = nd(rng);
    for (std::size_t t = 0; t < t_len; ++t) {
      batch.target_ids.push_back(int(rng() % vocab));
      batch.loss_mask.push_back(rng() % 3 != 0);
    }
    batch.loss_mask[rng() % t_len] = true;
    const auto grad = adapter::cross_entropy_grad(batch);
    double diff2 = 0, an2 = 0, fd2 = 0;
    for (std::size_t i = 0; i < batch.logits.size(); ++i) {
      auto up = batch, down = batch;
      up.logits.data()[i] += h;
      down.logits.data()[i] -= h;
      const double fd = (adapter::masked_cross_entropy(up) - adapter::masked_cross_entropy(down)) / (2 * h);
      const double an = grad.data()[i];
      diff2 += (fd - an) * (fd - an);
      an2 += an * an;
      fd2 += fd * fd;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(std::max(an2, fd2)), 1e-300));
  }
  return {worst <= 1e-5, fmt::format("100 batches, worst relative error |fd - grad| / max(|fd|, |grad|) = {:.3g}", worst)};
}

// 5 -------------------------------------------------------------------------
Outcome quantization_bounds() {
  std::mt19937_64 rng(5150);
  std::normal_distribution<double> nd;
  const double gap = adapter::max_codebook_gap();
  std::size_t violations = 0, blocks_with_violation = 0, unrounded_violations = 0, fixed_point_failures = 0;
  double worst_excess = 0.0;
  for (int b = 0; b < 10000; ++b) {
    std::vector<double> w(64);
    for (auto& x : w) x = nd(rng);
    const auto q = adapter::nf4_quantize(w);
    const auto d = adapter::nf4_dequantize(q);
    const double bound = q.absmax[0] * gap / 2;
    bool block_bad = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double err = std::abs(d[i] - w[i]);
      if (err > bound) {
        ++violations;
        block_bad = true;
        worst_excess = std::max(worst_excess, err / bound - 1.0);
      }
      if (std::abs(q.codebook[q.codes[i]] * q.absmax[0] - w[i]) > bound * (1 + 1e-12)) ++unrounded_violations;
    }
    blocks_with_violation += block_bad;
    const auto q2 = adapter::nf4_quantize(d);
    if (q2.codes != q.codes || adapter::nf4_dequantize(q2) != d) ++fixed_point_failures;
  }
  const bool pass = violations == 0 && fixed_point_failures == 0;
  return {pass, fmt::format("bf16 output: {} of 640000 elements ({} blocks) exceed absmax*gap/2, worst by {:.2f}% of the "
                            "bound; before bf16 rounding: {} exceed; fixed-point failures: {}",
                            violations, blocks_with_violation, 100 * worst_excess, unrounded_violations,
                            fixed_point_failures)};
}

// 6 -------------------------------------------------------------------------
Outcome lora_algebra() {
  using adapter::Matrix;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> nd;
  auto random = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (auto& x : m.data()) x = nd(rng);
    return m;
  };
  adapter::LoraConfig config;
  config.rank = 2;
  config.alpha = 16;
  config.target_modules = {{"w", 8, 8}};
  std::size_t outside = 0, zero_mismatch = 0;
  double worst_ulps = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto base = adapter::nf4_quantize(random(8, 8).data(), {8, 8}, 64);
    const adapter::LoraAdapter ad{random(2, 8), random(8, 2)};
    const auto merged = adapter::merge(base, ad, config);

    Eigen::MatrixXd a(2, 8), b(8, 2), w(8, 8);
    const auto deq = adapter::nf4_dequantize(base);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) w(i, j) = deq[i * 8 + j];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 8; ++j) a(i, j) = ad.a(i, j), b(j, i) = ad.b(j, i);
    const Eigen::MatrixXd oracle = w + (config.alpha / double(config.rank)) * b * a;
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        const double x = oracle(i, j);
        // half a bfloat16 ulp at the oracle's magnitude
        const double half_ulp = x == 0.0 ? 0.0 : std::ldexp(1.0, std::ilogb(x) - 8);
        const double err = std::abs(merged(i, j) - x);
        if (err > half_ulp * (1 + 1e-9)) ++outside;
        if (half_ulp > 0) worst_ulps = std::max(worst_ulps, err / (2 * half_ulp));
      }
    }
    const auto zero = adapter::merge(base, adapter::LoraAdapter::initialized(8, 8, 2, t), config);
    if (zero.data() != deq) ++zero_mismatch;
  }
  return {outside == 0 && zero_mismatch == 0,
          fmt::format("100 random 8x8 rank-2 cases: {} entries beyond half a bf16 ulp (worst {:.3f} ulp); "
                      "zero-adapter bit mismatches: {}",
                      outside, worst_ulps, zero_mismatch)};
}

// 7 -------------------------------------------------------------------------
Outcome stratification_quality() {
  const auto corpus = testing::zipf_corpus(1000, 20, 1234);
  const SplitSpec spec{kDefaultSplitRatios, 1234, StratificationOrder::kFirstOrder};
  const auto strat = split_quality(iterative_stratify(corpus, spec), corpus, spec);
  double random_mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SplitSpec rs = spec;
    rs.seed = seed;
    random_mean += split_quality(random_split(corpus, rs), corpus, rs).mean_deviation / 10.0;
  }
  double worst_supported = 0.0;
  std::size_t supported = 0;
  for (const auto& [label, dev] : strat.per_label) {
    if (dev.support < 20) continue;
    ++supported;
    worst_supported = std::max(worst_supported, dev.max_deviation);
  }
  const auto big = testing::zipf_corpus(31056, 20, 31056);
  const auto sizes = iterative_stratify(big, SplitSpec{}).part_sizes();
  const bool sizes_ok = std::abs(double(sizes[0]) - 18538.0) <= 1.0 && std::abs(double(sizes[1]) - 12518.0) <= 1.0;
  const bool pass = strat.mean_deviation <= random_mean && worst_supported <= 0.05 && supported > 0 && sizes_ok;
  return {pass, fmt::format("mean deviation {:.4f} vs random {:.4f}; max over {} labels with support>=20: {:.4f}; "
                            "31056 reports -> {}/{}",
                            strat.mean_deviation, random_mean, supported, worst_supported, sizes[0], sizes[1])};
}

// 8 -------------------------------------------------------------------------
Outcome pipeline_determinism() {
  const auto root = fs::temp_directory_path() / ("dx_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const auto corpus = root / "reports.jsonl";
  write_text_file(corpus, serialize_reports(testing::synthetic_reports(50, 8)));
  const fs::path vocab = kSource / "data/vocabulary.tsv";

  auto run_once = [&](const fs::path& dir) {
    std::ostringstream log;
    cli::LabelOptions lo{.corpus = corpus, .vocab = vocab, .out_dir = dir, .seed = 2024,
                         .flip_probability = 0.25, .oov_probability = 0.1};
    const auto labeled = cli::cmd_label(lo, log);
    cli::cmd_vote({labeled.runs_path, vocab, dir / "revoted.jsonl", VoteMode::kSetLevel}, log);
    cli::cmd_split({labeled.labels_path, dir / "split", SplitSpec{kDefaultSplitRatios, 99, StratificationOrder::kFirstOrder}},
                   log);
    cli::cmd_emit_finetune({corpus, labeled.labels_path, vocab, dir / "train.jsonl", dir / "split/assignment.jsonl", 0},
                           log);
    cli::cmd_emit_finetune({corpus, labeled.labels_path, vocab, dir / "valid.jsonl", dir / "split/assignment.jsonl", 1},
                           log);
    std::map<std::string, std::string> digests;
    for (const char* f : {"runs.jsonl", "labels.jsonl", "revoted.jsonl", "split/assignment.jsonl",
                          "split/quality.json", "train.jsonl", "valid.jsonl"}) {
      digests[f] = sha256_file(dir / f);
    }
    auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    manifest.erase("created_at");
    digests["manifest (without created_at)"] = sha256_hex(manifest.dump());
    return digests;
  };
  const auto a = run_once(root / "a");
  const auto b = run_once(root / "b");
  std::size_t differing = 0;
  for (const auto& [name, digest] : a) differing += b.at(name) != digest;

  // Every completion parses back to the voted label set of its report.
  const auto vocabulary = load_vocabulary(vocab);
  std::map<std::string, LabelSet> labels;
  for (auto& s : read_label_sets(root / "a/labels.jsonl")) labels.emplace(s.report_id, std::move(s));
  const auto reports = ingest_reports(corpus);
  std::map<std::string, std::string> prompt_to_id;
  for (const auto& r : reports) prompt_to_id[render(finetune_template(), r.impression, vocabulary)] += r.report_id + ";";
  std::size_t pairs = 0, round_trip_failures = 0;
  for (const char* f : {"train.jsonl", "valid.jsonl"}) {
    for (const auto& p : parse_finetune_pairs(read_text_file(root / "a" / f))) {
      ++pairs;
      const auto parsed = parse_student_list(p.completion, vocabulary);
      // Reports sharing an impression share a prompt; any of them may be the source.
      bool matched = false;
      std::istringstream ids(prompt_to_id.at(p.prompt));
      for (std::string id; std::getline(ids, id, ';');) matched = matched || labels.at(id).labels == parsed.labels;
      round_trip_failures += !matched || !parsed.oov_names.empty();
    }
  }
  fs::remove_all(root);
  return {differing == 0 && pairs == 50 && round_trip_failures == 0,
          fmt::format("{} artifacts compared, {} differ; {} completions, {} round-trip failures", a.size(), differing,
                      pairs, round_trip_failures)};
}

// 9 -------------------------------------------------------------------------
Outcome voting_properties() {
  using Set = std::set<PathologyId>;
  std::vector<Set> subsets;
  for (unsigned mask = 0; mask < 16; ++mask) {
    Set s;
    for (int k = 0; k < 4; ++k)
      if (mask >> k & 1u) s.insert(k + 1);
    subsets.push_back(s);
  }
  auto runs_of = [](const Set& x, const Set& y, const Set& z) {
    std::vector<RunOutput> runs;
    int i = 0;
    for (const auto* s : {&x, &y, &z}) runs.push_back({"r", i++, {"r", *s, {}, Provenance::kTeacherVote}});
    return runs;
  };
  auto majority_oracle = [](const Set& x, const Set& y, const Set& z) {
    Set out;
    for (int k = 1; k <= 4; ++k) {
      if (int(x.count(k)) + int(y.count(k)) + int(z.count(k)) >= 2) out.insert(k);
    }
    return out;
  };
  std::size_t combos = 0, failures = 0, distinct = 0;
  for (const auto& x : subsets) {
    for (const auto& y : subsets) {
      for (const auto& z : subsets) {
        ++combos;
        const auto set_level = majority_vote(runs_of(x, y, z), VoteMode::kSetLevel).labels;
        const auto per_label = majority_vote(runs_of(x, y, z), VoteMode::kPerLabel).labels;
        Set expect_set;
        if (x == y || x == z) {
          expect_set = x;
        } else if (y == z) {
          expect_set = y;
        } else {
          ++distinct;
          expect_set = majority_oracle(x, y, z);
        }
        bool ok = set_level == expect_set && per_label == majority_oracle(x, y, z);
        for (const auto& perm : {runs_of(x, z, y), runs_of(y, x, z), runs_of(y, z, x), runs_of(z, x, y),
                                 runs_of(z, y, x)}) {
          ok = ok && majority_vote(perm, VoteMode::kSetLevel).labels == set_level &&
               majority_vote(perm, VoteMode::kPerLabel).labels == per_label;
        }
        if (x == y && y == z) ok = ok && set_level == x && per_label == x;
        failures += !ok;
      }
    }
  }
  return {failures == 0 && combos == 4096,
          fmt::format("{} ordered run triples ({} pairwise distinct), {} failures", combos, distinct, failures)};
}

// 10 ------------------------------------------------------------------------
Outcome prompt_fidelity() {
  const auto vocab = load_vocabulary(kSource / "data/vocabulary.tsv");
  const auto impression = slurp(kSource / "tests/golden/fixture_impression.txt");
  const bool teacher = render(teacher_template(), impression, vocab) == slurp(kSource / "tests/golden/teacher_rendered.txt");
  const bool finetune = render(finetune_template(), impression, vocab) == slurp(kSource / "tests/golden/finetune_rendered.txt");
  return {teacher && finetune, fmt::format("teacher {}, fine-tune {}", teacher ? "match" : "DIFFER",
                                           finetune ? "match" : "DIFFER")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "Parameter-count reproduction", 1.0, parameter_counts},
      {2, "Metric identity", 1.0, metric_identity},
      {3, "Metrics oracle equivalence", 30.0, metrics_oracle},
      {4, "Gradient check", 10.0, gradient_check},
      {5, "Quantization bounds", 30.0, quantization_bounds},
      {6, "LoRA algebra", 0.0, lora_algebra},
      {7, "Stratification quality", 20.0, stratification_quality},
      {8, "Pipeline determinism", 10.0, pipeline_determinism},
      {9, "Voting properties", 5.0, voting_properties},
      {10, "Prompt fidelity", 0.0, prompt_fidelity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0 && secs > c.time_limit_s) {
      outcome.pass = false;
      outcome.detail += fmt::format("; exceeded {:.0f} s limit", c.time_limit_s);
    }
    failed += !outcome.pass;
    std::cout << fmt::format("{} [{:>2}] {}: {} ({:.3f} s)\n", outcome.pass ? "PASS" : "FAIL", c.number, c.title,
                             outcome.detail, secs)
              << std::flush;
  }
  std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
