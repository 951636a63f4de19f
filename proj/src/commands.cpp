// SPDX-License-Identifier: Apache-2.0

#include "dx/commands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "dx/adapter/nf4.hpp"
#include "dx/parse.hpp"
#include "dx/prompt.hpp"
#include "dx/store.hpp"

namespace dx::cli {
namespace {

std::string join_ratios(const std::vector<double>& ratios) {
  std::string out;
  for (const auto r : ratios) {
    if (!out.empty()) out += ",";
    out += fmt::format("{}", r);
  }
  return out;
}

/// Parses one raw teacher reply; a reply without a CSV block counts as an
/// empty opinion.
LabelSet parse_run(const std::string& raw, const std::string& report_id, const Vocabulary& vocab,
                   bool& had_csv) {
  try {
    const auto parsed = parse_teacher_csv(raw, vocab);
    had_csv = true;
    return assertions_to_label_set(parsed.assertions, report_id);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoCsvFound) throw;
    had_csv = false;
    LabelSet empty;
    empty.report_id = report_id;
    empty.provenance = Provenance::kTeacherVote;
    return empty;
  }
}

struct VoteResult {
  std::vector<LabelSet> labels;
  std::vector<std::string> failed;
  std::size_t runs_without_csv = 0;
};

/// Votes per report in first-appearance order. A report with any failed
/// run is reported as failed rather than voted on a partial run set.
VoteResult vote_runs(const std::vector<RunRecord>& runs, const Vocabulary& vocab, VoteMode mode) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> by_report;
  for (const auto& r : runs) {
    auto& bucket = by_report[r.report_id];
    if (bucket.empty()) order.push_back(r.report_id);
    bucket.push_back(&r);
  }
  VoteResult result;
  for (const auto& id : order) {
    const auto& bucket = by_report[id];
    if (std::any_of(bucket.begin(), bucket.end(), [](const auto* r) { return !r->raw_text; })) {
      result.failed.push_back(id);
      continue;
    }
    std::vector<RunOutput> outputs;
    for (const auto* r : bucket) {
      bool had_csv = true;
      outputs.push_back({id, r->run_index, parse_run(*r->raw_text, id, vocab, had_csv)});
      if (!had_csv) ++result.runs_without_csv;
    }
    result.labels.push_back(majority_vote(outputs, mode));
  }
  return result;
}

int label_exit_code(std::size_t labeled, std::size_t failed) {
  if (failed == 0) return kExitOk;
  return labeled == 0 ? kExitBackend : kExitPartial;
}

std::map<std::string, Modality> modality_index(const std::optional<fs::path>& corpus) {
  std::map<std::string, Modality> out;
  if (!corpus) return out;
  for (const auto& r : ingest_reports(*corpus)) out.emplace(r.report_id, r.modality);
  return out;
}

std::vector<LabelSet> read_predictions(const fs::path& path, const Vocabulary* vocab) {
  // Lines carry either a parsed label list or a raw student reply.
  std::vector<LabelSet> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kMalformedJson, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("output")) {
      if (!vocab) {
        throw Error(ErrorCode::kInvalidArgument, "raw prediction output needs --vocab to resolve names");
      }
      auto set = parse_student_list(j.at("output").get<std::string>(), *vocab);
      set.report_id = j.at("report_id").get<std::string>();
      out.push_back(std::move(set));
    } else {
      auto sets = parse_label_sets(line);
      out.insert(out.end(), sets.begin(), sets.end());
    }
  }
  return out;
}

}  // namespace

int exit_code_for(const Error& error) {
  // A missing credential surfaces as AuthError before any request is made,
  // which is a configuration problem; per-request failures never escape.
  switch (error.code()) {
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kResponseTruncated:
      return kExitBackend;
    default:
      return kExitUsage;
  }
}

LabelOutcome cmd_label(const LabelOptions& options, std::ostream& log, CompletionBackend* backend) {
  if (options.runs < 1 || options.runs % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "--runs must be a positive odd number");
  }
  if (!(options.temperature >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "--temperature must be >= 0");
  const auto vocab_text = read_text_file(options.vocab);
  const auto vocab = parse_vocabulary(vocab_text);
  const auto reports = ingest_reports(options.corpus);

  std::unique_ptr<CompletionBackend> owned;
  if (!backend) {
    if (options.backend == BackendKind::kMock) {
      owned = std::make_unique<MockBackend>(
          vocab, MockConfig{options.seed, options.flip_probability, options.oov_probability, 3, {}});
    } else {
      owned = std::make_unique<HttpBackend>(http_config_from_env());
    }
    backend = owned.get();
  }

  std::vector<CompletionRequest> requests;
  requests.reserve(reports.size() * static_cast<std::size_t>(options.runs));
  for (const auto& r : reports) {
    const auto prompt = render(teacher_template(), r.impression, vocab);
    for (int run = 0; run < options.runs; ++run) {
      requests.push_back({options.model, prompt, options.temperature, options.max_tokens, run});
    }
  }
  const auto items = complete_batch(*backend, requests, options.max_in_flight);

  std::vector<RunRecord> runs;
  runs.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& report = reports[i / static_cast<std::size_t>(options.runs)];
    RunRecord rec{report.report_id, requests[i].run_index, {}, {}};
    if (items[i].ok()) {
      rec.raw_text = items[i].result->raw_text;
    } else {
      rec.error = items[i].error->what();
    }
    runs.push_back(std::move(rec));
  }
  const auto voted = vote_runs(runs, vocab, options.vote_mode);

  LabelOutcome outcome;
  outcome.runs_path = options.out_dir / "runs.jsonl";
  outcome.labels_path = options.out_dir / "labels.jsonl";
  outcome.manifest_path = options.out_dir / "manifest.json";
  write_text_file(outcome.runs_path, serialize_run_records(runs));
  write_text_file(outcome.labels_path, serialize_label_sets(voted.labels));

  ManifestInputs manifest;
  manifest.command = "label";
  manifest.backend = backend->identity();
  manifest.settings = {{"runs_per_report", std::to_string(options.runs)},
                       {"temperature", fmt::format("{}", options.temperature)},
                       {"vote_mode", std::string(to_string(options.vote_mode))},
                       {"seed", std::to_string(options.seed)},
                       {"model", options.model},
                       {"max_tokens", std::to_string(options.max_tokens)}};
  manifest.inputs = {{"corpus", options.corpus.generic_string()},
                     {"vocabulary", options.vocab.generic_string()},
                     {"corpus_sha256", sha256_file(options.corpus)}};
  manifest.outputs = {{"runs", outcome.runs_path}, {"labels", outcome.labels_path}};
  manifest.base_dir = options.out_dir;
  manifest.vocabulary_text = vocab_text;
  write_manifest(outcome.manifest_path, manifest);

  outcome.labeled = voted.labels.size();
  outcome.failed_reports = voted.failed;
  outcome.runs_without_csv = voted.runs_without_csv;
  outcome.exit_code = label_exit_code(outcome.labeled, outcome.failed_reports.size());
  log << "labeled " << outcome.labeled << " of " << reports.size() << " reports";
  if (!outcome.failed_reports.empty()) {
    log << "; " << outcome.failed_reports.size() << " failed:";
    for (const auto& id : outcome.failed_reports) log << ' ' << id;
  }
  if (outcome.runs_without_csv > 0) {
    log << "; " << outcome.runs_without_csv << " run(s) had no CSV block";
  }
  log << '\n';
  return outcome;
}

LabelOutcome cmd_vote(const VoteOptions& options, std::ostream& log) {
  const auto vocab_text = read_text_file(options.vocab);
  const auto vocab = parse_vocabulary(vocab_text);
  const auto runs = parse_run_records(read_text_file(options.runs_file));
  const auto voted = vote_runs(runs, vocab, options.vote_mode);

  LabelOutcome outcome;
  outcome.labels_path = options.out;
  write_text_file(options.out, serialize_label_sets(voted.labels));
  outcome.labeled = voted.labels.size();
  outcome.failed_reports = voted.failed;
  outcome.runs_without_csv = voted.runs_without_csv;
  outcome.exit_code = label_exit_code(outcome.labeled, outcome.failed_reports.size());
  log << "voted " << outcome.labeled << " reports (" << to_string(options.vote_mode) << ")";
  if (!outcome.failed_reports.empty()) log << "; " << outcome.failed_reports.size() << " skipped";
  log << '\n';
  return outcome;
}

SplitOutcome cmd_split(const SplitOptions& options, std::ostream& log) {
  validate(options.spec);
  const auto sets = read_label_sets(options.labels);
  std::vector<LabeledExample> corpus;
  corpus.reserve(sets.size());
  for (const auto& s : sets) corpus.push_back({s.report_id, s.labels});

  SplitOutcome outcome;
  outcome.assignment = iterative_stratify(corpus, options.spec);
  outcome.quality = split_quality(outcome.assignment, corpus, options.spec);
  write_text_file(options.out_dir / "assignment.jsonl", serialize_assignment(outcome.assignment));
  write_text_file(options.out_dir / "quality.json",
                  quality_to_json(outcome.quality, options.spec, outcome.assignment).dump(2) + "\n");

  const auto sizes = outcome.assignment.part_sizes();
  log << "split " << corpus.size() << " reports (" << join_ratios(options.spec.ratios) << ") ->";
  for (const auto n : sizes) log << ' ' << n;
  log << fmt::format("; max deviation {:.4f}, mean {:.4f}\n", outcome.quality.max_deviation,
                     outcome.quality.mean_deviation);
  return outcome;
}

std::size_t cmd_emit_finetune(const EmitOptions& options, std::ostream& log) {
  const auto vocab = load_vocabulary(options.vocab);
  auto reports = ingest_reports(options.corpus);
  std::map<std::string, LabelSet> labels;
  for (auto& s : read_label_sets(options.labels)) labels.emplace(s.report_id, std::move(s));

  if (options.assignment) {
    const auto text = read_text_file(*options.assignment);
    const auto assignment = parse_assignment(text, std::max<std::size_t>(options.part + 1, 64));
    std::set<std::string> keep;
    for (std::size_t i = 0; i < assignment.part_of.size(); ++i) {
      if (assignment.part_of[i] == options.part) keep.insert(assignment.report_ids[i]);
    }
    std::erase_if(reports, [&](const auto& r) { return !keep.contains(r.report_id); });
  }
  const auto pairs = emit_finetune_pairs(reports, labels, vocab);
  write_text_file(options.out, serialize_finetune_pairs(pairs));
  log << "wrote " << pairs.size() << " fine-tune pairs to " << options.out.string() << '\n';
  return pairs.size();
}

std::vector<EvalPair> load_eval_pairs(const EvalCommandOptions& options, std::ostream& log) {
  std::optional<Vocabulary> vocab;
  if (options.vocab) vocab = load_vocabulary(*options.vocab);
  const auto gold = read_label_sets(options.gold);
  const auto predictions = read_predictions(options.predictions, vocab ? &*vocab : nullptr);
  const auto modalities = modality_index(options.corpus);

  std::map<std::string, const LabelSet*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.report_id, &p);

  std::vector<EvalPair> pairs;
  pairs.reserve(gold.size());
  std::size_t missing = 0;
  for (const auto& g : gold) {
    EvalPair pair;
    pair.report_id = g.report_id;
    if (const auto it = modalities.find(g.report_id); it != modalities.end()) pair.modality = it->second;
    pair.gold = g;
    pair.gold.provenance = Provenance::kGold;
    if (const auto it = by_id.find(g.report_id); it != by_id.end()) {
      pair.predicted = *it->second;
    } else {
      if (options.missing == MissingPolicy::kError) throw Error(ErrorCode::kMissingReport, g.report_id);
      ++missing;
      pair.predicted.report_id = g.report_id;
    }
    pair.predicted.provenance = Provenance::kModelPrediction;
    pairs.push_back(std::move(pair));
  }
  if (missing > 0) {
    log << "warning: " << missing << " gold report(s) have no prediction; scored as empty\n";
  }
  return pairs;
}

MetricsReport cmd_eval(const EvalCommandOptions& options, std::ostream& out) {
  const auto pairs = load_eval_pairs(options, out);
  const auto report = evaluate(pairs, options.metrics);
  out << render_table(report);
  out << fmt::format("hallucination rate {:.3f} ({} of {} predictions out of vocabulary)\n",
                     report.overall.hallucination_rate, report.overall.oov_predictions,
                     report.overall.total_predictions);
  if (options.json_out) write_text_file(*options.json_out, to_json(report).dump(2) + "\n");
  return report;
}

std::vector<ConfusionPair> cmd_errors(const ErrorsOptions& options, std::ostream& out) {
  const auto pairs = load_eval_pairs(options.eval, out);
  const auto ranked = confusion_pairs(pairs, options.top_k);
  std::optional<Vocabulary> vocab;
  if (options.eval.vocab) vocab = load_vocabulary(*options.eval.vocab);
  const auto name = [&](PathologyId id) {
    if (vocab) {
      if (const auto* e = vocab->by_id(id)) return e->canonical_name;
    }
    return std::to_string(id);
  };
  out << fmt::format("{:>6}  {} -> {}\n", "count", "gold (missed)", "predicted (spurious)");
  for (const auto& c : ranked) {
    out << fmt::format("{:>6}  {} -> {}\n", c.count, name(c.gold), name(c.predicted));
  }
  if (options.eval.json_out) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : ranked) {
      j.push_back({{"gold", c.gold}, {"predicted", c.predicted}, {"count", c.count}});
    }
    write_text_file(*options.eval.json_out, j.dump(2) + "\n");
  }
  return ranked;
}

adapter::TrainableCount cmd_param_count(const ParamCountOptions& options, std::ostream& out) {
  const auto arch = adapter::load_arch_spec(options.arch);
  const auto config = adapter::make_lora_config(arch, options.rank, options.alpha);
  const auto count = adapter::count_trainable(config);
  out << fmt::format("architecture     {}\n", arch.name);
  out << fmt::format("layers           {}\n", arch.layer_count);
  out << fmt::format("rank / alpha     {} / {} (scale {})\n", config.rank, config.alpha, config.scale());
  for (const auto& t : config.target_modules) {
    out << fmt::format("  {:<12} {:>6} x {:<6} -> {}\n", t.name, t.d_out, t.d_in,
                       config.rank * (t.d_out + t.d_in));
  }
  out << fmt::format("per layer        {}\n", count.per_layer);
  out << fmt::format("total            {}\n", count.lora_params);
  out << fmt::format("bytes at 16-bit  {}\n", count.lora_params * 2);
  return count;
}

QuantizeStats cmd_quantize(const QuantizeOptions& options, std::ostream& out) {
  const auto tensor = adapter::read_dense_tensor(options.input);
  const auto q = adapter::nf4_quantize(tensor.values, tensor.shape, options.block_size);
  adapter::write_quantized(options.out, q);
  const auto restored = adapter::nf4_dequantize(q);

  QuantizeStats stats;
  stats.elements = tensor.values.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < restored.size(); ++i) {
    const double err = std::abs(restored[i] - tensor.values[i]);
    stats.max_abs_error = std::max(stats.max_abs_error, err);
    sum += err;
  }
  if (!restored.empty()) stats.mean_abs_error = sum / static_cast<double>(restored.size());
  const double absmax = q.absmax.empty() ? 0.0 : *std::max_element(q.absmax.begin(), q.absmax.end());
  stats.error_bound = absmax * adapter::max_codebook_gap(q.codebook) / 2.0;
  if (q.packed_code_bytes() > 0) {
    stats.compression_ratio =
        static_cast<double>(4 * stats.elements) / static_cast<double>(q.packed_code_bytes());
  }
  out << fmt::format("elements           {}\n", stats.elements);
  out << fmt::format("blocks             {} x {}\n", q.block_count(), q.block_size);
  out << fmt::format("max abs error      {:.6g}\n", stats.max_abs_error);
  out << fmt::format("mean abs error     {:.6g}\n", stats.mean_abs_error);
  out << fmt::format("error bound        {:.6g}\n", stats.error_bound);
  out << fmt::format("compression ratio  {:.2f}x (code payload vs 32-bit)\n", stats.compression_ratio);
  return stats;
}

}  // namespace dx::cli
