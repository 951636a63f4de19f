// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dx/vocab.hpp"

namespace dx {

enum class AssertionStatus { kDefinite, kPossible, kAbsent };

std::string_view to_string(AssertionStatus status);
/// Accepts the three status words after normalization (quotes stripped).
std::optional<AssertionStatus> parse_status(std::string_view word);

struct Assertion {
  /// Empty when the surface name is out of vocabulary.
  std::optional<PathologyId> pathology_id;
  std::string surface_name;
  AssertionStatus status = AssertionStatus::kDefinite;

  bool is_oov() const { return !pathology_id.has_value(); }
  bool operator==(const Assertion&) const = default;
};

enum class Provenance { kTeacherVote, kGold, kModelPrediction };

std::string_view to_string(Provenance provenance);
std::optional<Provenance> parse_provenance(std::string_view text);

/// Positive label set for one report. OOV names are kept apart from labels.
struct LabelSet {
  std::string report_id;
  std::set<PathologyId> labels;
  std::vector<std::string> oov_names;  // multiset, kept sorted
  Provenance provenance = Provenance::kModelPrediction;

  bool operator==(const LabelSet&) const = default;
};

struct MalformedRow {
  std::size_t line_number = 0;  // 1-based within the raw reply
  std::string text;
  std::string reason;
};

struct TeacherParse {
  std::vector<Assertion> assertions;
  std::vector<MalformedRow> malformed_rows;
};

/// Extracts the header-anchored CSV block (PathologyID,PathologyName,Word)
/// from a teacher reply. The block runs from the header to the last later
/// line that is a well-formed 3-field row; prose outside it is ignored and
/// ill-formed lines inside it are reported without aborting. Throws
/// NoCsvFound when no header line exists.
TeacherParse parse_teacher_csv(std::string_view raw, const Vocabulary& vocab);

/// Parses the first non-empty line of a student reply as a comma list.
LabelSet parse_student_list(std::string_view raw, const Vocabulary& vocab);

/// DEFINITE and POSSIBLE become labels; ABSENT is dropped; OOV surface
/// names go to oov_names.
LabelSet assertions_to_label_set(const std::vector<Assertion>& assertions,
                                 std::string_view report_id);

/// Completion text for a label set: canonical names sorted alphabetically
/// and joined by ", ", or "None" for the empty set.
std::string format_student_list(const std::set<PathologyId>& labels,
                                const Vocabulary& vocab);

}  // namespace dx
