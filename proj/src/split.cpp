// SPDX-License-Identifier: Apache-2.0

#include "dx/split.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <utility>

#include "dx/error.hpp"

namespace dx {
namespace {

constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();

// A stratum is a label (first order) or a co-occurring label pair (second
// order). Each carries its own desired per-part counts.
struct Stratum {
  std::vector<std::size_t> members;  // corpus positions
  std::vector<double> desired;       // per part
  std::size_t remaining = 0;         // unassigned members
};

class Stratifier {
 public:
  Stratifier(const std::vector<LabeledExample>& corpus, const SplitSpec& spec)
      : corpus_(corpus),
        ratios_(spec.ratios),
        rng_(spec.seed),
        part_of_(corpus.size(), kUnassigned),
        strata_of_example_(corpus.size()) {
    desired_.resize(ratios_.size());
    for (std::size_t j = 0; j < ratios_.size(); ++j) {
      desired_[j] = static_cast<double>(corpus.size()) * ratios_[j];
    }
  }

  void add_layer(std::vector<Stratum> strata) {
    for (auto& s : strata) {
      s.remaining = s.members.size();
      s.desired.resize(ratios_.size());
      for (std::size_t j = 0; j < ratios_.size(); ++j) {
        s.desired[j] = static_cast<double>(s.members.size()) * ratios_[j];
      }
    }
    const auto offset = strata_.size();
    for (std::size_t k = 0; k < strata.size(); ++k) {
      for (const auto pos : strata[k].members) {
        strata_of_example_[pos].push_back(offset + k);
      }
    }
    layers_.emplace_back(offset, offset + strata.size());
    for (auto& s : strata) strata_.push_back(std::move(s));
  }

  SplitAssignment run() {
    for (const auto& [begin, end] : layers_) run_layer(begin, end);
    // Label-free (or otherwise untouched) examples.
    for (std::size_t pos = 0; pos < corpus_.size(); ++pos) {
      if (part_of_[pos] != kUnassigned) continue;
      std::size_t best = 0;
      for (std::size_t j = 1; j < desired_.size(); ++j) {
        if (desired_[j] > desired_[best]) best = j;
      }
      assign(pos, best);
    }
    SplitAssignment out;
    out.part_count = ratios_.size();
    out.part_of = std::move(part_of_);
    out.report_ids.reserve(corpus_.size());
    for (const auto& ex : corpus_) out.report_ids.push_back(ex.report_id);
    return out;
  }

 private:
  void run_layer(std::size_t begin, std::size_t end) {
    while (true) {
      // Rarest stratum with unassigned members; ties go to the lowest index,
      // which is the lowest label id (or pair) by construction.
      std::size_t pick = end;
      for (std::size_t k = begin; k < end; ++k) {
        if (strata_[k].remaining == 0) continue;
        if (pick == end || strata_[k].remaining < strata_[pick].remaining) pick = k;
      }
      if (pick == end) return;
      // Copy: assign() mutates remaining counts of this stratum.
      const auto members = strata_[pick].members;
      for (const auto pos : members) {
        if (part_of_[pos] != kUnassigned) continue;
        assign(pos, choose_part(strata_[pick].desired));
      }
    }
  }

  std::size_t choose_part(const std::vector<double>& label_desired) {
    std::vector<std::size_t> tied;
    double best_label = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < label_desired.size(); ++j) {
      if (label_desired[j] > best_label) {
        best_label = label_desired[j];
        tied.assign(1, j);
      } else if (label_desired[j] == best_label) {
        tied.push_back(j);
      }
    }
    if (tied.size() > 1) {
      double best_overall = -std::numeric_limits<double>::infinity();
      std::vector<std::size_t> narrowed;
      for (const auto j : tied) {
        if (desired_[j] > best_overall) {
          best_overall = desired_[j];
          narrowed.assign(1, j);
        } else if (desired_[j] == best_overall) {
          narrowed.push_back(j);
        }
      }
      tied = std::move(narrowed);
    }
    if (tied.size() == 1) return tied.front();
    // Modulo draw keeps the sequence identical across standard libraries.
    return tied[rng_() % tied.size()];
  }

  void assign(std::size_t pos, std::size_t part) {
    part_of_[pos] = part;
    desired_[part] -= 1.0;
    for (const auto k : strata_of_example_[pos]) {
      strata_[k].desired[part] -= 1.0;
      --strata_[k].remaining;
    }
  }

  const std::vector<LabeledExample>& corpus_;
  std::vector<double> ratios_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> part_of_;
  std::vector<std::vector<std::size_t>> strata_of_example_;
  std::vector<double> desired_;
  std::vector<Stratum> strata_;
  std::vector<std::pair<std::size_t, std::size_t>> layers_;
};

std::vector<Stratum> label_strata(const std::vector<LabeledExample>& corpus) {
  std::map<PathologyId, std::vector<std::size_t>> members;
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    for (const auto id : corpus[pos].labels) members[id].push_back(pos);
  }
  std::vector<Stratum> strata;
  strata.reserve(members.size());
  for (auto& [id, m] : members) strata.push_back(Stratum{std::move(m), {}, 0});
  return strata;
}

std::vector<Stratum> pair_strata(const std::vector<LabeledExample>& corpus) {
  std::map<std::pair<PathologyId, PathologyId>, std::vector<std::size_t>> members;
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    const auto& labels = corpus[pos].labels;
    for (auto a = labels.begin(); a != labels.end(); ++a) {
      for (auto b = std::next(a); b != labels.end(); ++b) {
        members[{*a, *b}].push_back(pos);
      }
    }
  }
  std::vector<Stratum> strata;
  strata.reserve(members.size());
  for (auto& [key, m] : members) strata.push_back(Stratum{std::move(m), {}, 0});
  return strata;
}

}  // namespace

std::string_view to_string(StratificationOrder order) {
  return order == StratificationOrder::kFirstOrder ? "first" : "second";
}

std::optional<StratificationOrder> parse_stratification_order(std::string_view text) {
  if (text == "first" || text == "first_order") return StratificationOrder::kFirstOrder;
  if (text == "second" || text == "second_order") return StratificationOrder::kSecondOrder;
  return std::nullopt;
}

void validate(const SplitSpec& spec) {
  if (spec.ratios.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two split ratios");
  }
  double sum = 0.0;
  for (const auto r : spec.ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw Error(ErrorCode::kInvalidArgument, "split ratios must be positive");
    }
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument,
                "split ratios sum to " + std::to_string(sum) + ", not 1");
  }
}

std::vector<std::size_t> SplitAssignment::part_sizes() const {
  std::vector<std::size_t> sizes(part_count, 0);
  for (const auto p : part_of) ++sizes.at(p);
  return sizes;
}

SplitAssignment iterative_stratify(const std::vector<LabeledExample>& corpus,
                                   const SplitSpec& spec) {
  validate(spec);
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "nothing to split");
  Stratifier s(corpus, spec);
  if (spec.order == StratificationOrder::kSecondOrder) s.add_layer(pair_strata(corpus));
  s.add_layer(label_strata(corpus));
  auto out = s.run();

  // Partition check: every example in exactly one valid part.
  for (const auto p : out.part_of) {
    if (p >= out.part_count) {
      throw Error(ErrorCode::kInvalidArgument, "stratifier left an example unassigned");
    }
  }
  return out;
}

SplitAssignment random_split(const std::vector<LabeledExample>& corpus,
                             const SplitSpec& spec) {
  validate(spec);
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "nothing to split");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  SplitAssignment out;
  out.part_count = spec.ratios.size();
  out.part_of.assign(corpus.size(), 0);
  for (const auto& ex : corpus) out.report_ids.push_back(ex.report_id);
  double cumulative = 0.0;
  std::size_t next = 0;
  for (std::size_t j = 0; j < spec.ratios.size(); ++j) {
    cumulative += spec.ratios[j];
    const auto end = j + 1 == spec.ratios.size()
                         ? corpus.size()
                         : static_cast<std::size_t>(std::llround(cumulative * corpus.size()));
    for (; next < end && next < corpus.size(); ++next) out.part_of[order[next]] = j;
  }
  return out;
}

SplitQuality split_quality(const SplitAssignment& assignment,
                           const std::vector<LabeledExample>& corpus,
                           const SplitSpec& spec) {
  if (assignment.part_of.size() != corpus.size()) {
    throw Error(ErrorCode::kInvalidArgument, "assignment does not cover the corpus");
  }
  const auto parts = spec.ratios.size();
  std::map<PathologyId, std::vector<std::size_t>> counts;
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    for (const auto id : corpus[pos].labels) {
      auto& c = counts[id];
      c.resize(parts, 0);
      ++c.at(assignment.part_of[pos]);
    }
  }
  SplitQuality q;
  double total = 0.0;
  for (const auto& [id, c] : counts) {
    LabelDeviation d;
    d.support = std::accumulate(c.begin(), c.end(), std::size_t{0});
    for (std::size_t j = 0; j < parts; ++j) {
      const double achieved = static_cast<double>(c[j]) / static_cast<double>(d.support);
      d.achieved.push_back(achieved);
      d.deviation.push_back(std::abs(achieved - spec.ratios[j]));
      d.max_deviation = std::max(d.max_deviation, d.deviation.back());
    }
    q.max_deviation = std::max(q.max_deviation, d.max_deviation);
    total += d.max_deviation;
    q.per_label.emplace(id, std::move(d));
  }
  if (!q.per_label.empty()) q.mean_deviation = total / static_cast<double>(q.per_label.size());
  return q;
}

}  // namespace dx
