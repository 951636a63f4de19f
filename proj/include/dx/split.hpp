// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dx/vocab.hpp"

namespace dx {

enum class StratificationOrder { kFirstOrder, kSecondOrder };

std::string_view to_string(StratificationOrder order);
std::optional<StratificationOrder> parse_stratification_order(std::string_view text);

/// 18,538 train / 12,518 validation out of 31,056 reports.
inline const std::vector<double> kDefaultSplitRatios = {0.5969, 0.4031};

struct SplitSpec {
  std::vector<double> ratios = kDefaultSplitRatios;
  std::uint64_t seed = 0;
  StratificationOrder order = StratificationOrder::kFirstOrder;
};

/// Throws InvalidArgument unless there are >= 2 positive ratios summing to
/// 1 within 1e-9.
void validate(const SplitSpec& spec);

struct LabeledExample {
  std::string report_id;
  std::set<PathologyId> labels;
};

struct SplitAssignment {
  /// Part index per corpus position.
  std::vector<std::size_t> part_of;
  std::vector<std::string> report_ids;
  std::size_t part_count = 0;

  std::vector<std::size_t> part_sizes() const;
};

/// Greedy iterative stratification. Labels are processed rarest-first by
/// remaining unassigned examples; each example carrying the chosen label
/// goes to the part with the largest remaining desired count for that
/// label, then the largest remaining overall desired count, then a seeded
/// random choice. Label-free examples fill the parts with the largest
/// remaining overall desire (lowest index on ties). kSecondOrder runs the
/// same pass over co-occurring label pairs before single labels.
/// Throws EmptyCorpus.
SplitAssignment iterative_stratify(const std::vector<LabeledExample>& corpus,
                                   const SplitSpec& spec);

/// Seeded uniform-random baseline with the same expected part sizes.
SplitAssignment random_split(const std::vector<LabeledExample>& corpus,
                             const SplitSpec& spec);

struct LabelDeviation {
  std::size_t support = 0;
  std::vector<double> achieved;   // fraction of the label's examples per part
  std::vector<double> deviation;  // |achieved - desired ratio| per part
  double max_deviation = 0.0;     // over parts
};

struct SplitQuality {
  /// Labels with zero support are omitted.
  std::map<PathologyId, LabelDeviation> per_label;
  double max_deviation = 0.0;
  double mean_deviation = 0.0;  // mean of per-label max_deviation
};

SplitQuality split_quality(const SplitAssignment& assignment,
                           const std::vector<LabeledExample>& corpus,
                           const SplitSpec& spec);

}  // namespace dx
