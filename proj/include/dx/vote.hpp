// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "dx/parse.hpp"

namespace dx {

inline constexpr int kDefaultRunsPerReport = 3;

struct RunOutput {
  std::string report_id;
  int run_index = 0;
  LabelSet label_set;
};

enum class VoteMode {
  /// Whole-set plurality; falls back to kPerLabel when no set is a strict
  /// plurality.
  kSetLevel,
  /// A label survives iff it appears in more than half of the runs.
  kPerLabel,
};

std::string_view to_string(VoteMode mode);
std::optional<VoteMode> parse_vote_mode(std::string_view text);

/// Aggregates an odd number of runs for one report. Output provenance is
/// teacher_vote; OOV names of every run are carried in oov_names (sorted)
/// for hallucination accounting but never become labels.
/// Throws NoRuns, MixedReports, or InvalidArgument for an even run count.
LabelSet majority_vote(const std::vector<RunOutput>& runs, VoteMode mode);

}  // namespace dx
