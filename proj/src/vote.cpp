// SPDX-License-Identifier: Apache-2.0

#include "dx/vote.hpp"

#include <algorithm>
#include <map>

#include "dx/error.hpp"

namespace dx {
namespace {

std::set<PathologyId> per_label(const std::vector<RunOutput>& runs) {
  std::map<PathologyId, std::size_t> counts;
  for (const auto& run : runs) {
    for (const auto id : run.label_set.labels) ++counts[id];
  }
  std::set<PathologyId> out;
  for (const auto& [id, n] : counts) {
    if (2 * n > runs.size()) out.insert(id);
  }
  return out;
}

std::optional<std::set<PathologyId>> strict_plurality(
    const std::vector<RunOutput>& runs) {
  std::map<std::set<PathologyId>, std::size_t> counts;
  for (const auto& run : runs) ++counts[run.label_set.labels];
  std::size_t best = 0;
  std::size_t holders = 0;
  const std::set<PathologyId>* winner = nullptr;
  for (const auto& [labels, n] : counts) {
    if (n > best) {
      best = n;
      holders = 1;
      winner = &labels;
    } else if (n == best) {
      ++holders;
    }
  }
  if (holders != 1) return std::nullopt;
  return *winner;
}

}  // namespace

std::string_view to_string(VoteMode mode) {
  return mode == VoteMode::kSetLevel ? "set" : "per-label";
}

std::optional<VoteMode> parse_vote_mode(std::string_view text) {
  if (text == "set" || text == "set_level") return VoteMode::kSetLevel;
  if (text == "per-label" || text == "per_label") return VoteMode::kPerLabel;
  return std::nullopt;
}

LabelSet majority_vote(const std::vector<RunOutput>& runs, VoteMode mode) {
  if (runs.empty()) throw Error(ErrorCode::kNoRuns, "no runs to vote on");
  const auto& report_id = runs.front().report_id;
  for (const auto& run : runs) {
    if (run.report_id != report_id) {
      throw Error(ErrorCode::kMixedReports,
                  "runs for '" + report_id + "' and '" + run.report_id + "'");
    }
  }
  if (runs.size() % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "majority vote needs an odd run count, got " +
                    std::to_string(runs.size()));
  }

  LabelSet out;
  out.report_id = report_id;
  out.provenance = Provenance::kTeacherVote;
  if (mode == VoteMode::kSetLevel) {
    if (auto winner = strict_plurality(runs)) {
      out.labels = std::move(*winner);
    } else {
      out.labels = per_label(runs);
    }
  } else {
    out.labels = per_label(runs);
  }
  for (const auto& run : runs) {
    out.oov_names.insert(out.oov_names.end(), run.label_set.oov_names.begin(),
                         run.label_set.oov_names.end());
  }
  std::sort(out.oov_names.begin(), out.oov_names.end());
  return out;
}

}  // namespace dx
