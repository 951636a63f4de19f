// SPDX-License-Identifier: Apache-2.0

#include "dx/parse.hpp"

#include <algorithm>

#include "dx/error.hpp"

namespace dx {
namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string_view strip_quotes(std::string_view s) {
  s = trim(s);
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                           (s.front() == '\'' && s.back() == '\''))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

std::vector<std::string_view> split_lines(std::string_view raw) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= raw.size()) {
    const auto pos = raw.find('\n', start);
    auto line = raw.substr(start, pos == std::string_view::npos
                                      ? std::string_view::npos
                                      : pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return lines;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool is_header(std::string_view line) {
  const auto fields = split_commas(line);
  if (fields.size() != 3) return false;
  constexpr std::string_view expected[] = {"pathologyid", "pathologyname", "word"};
  for (std::size_t i = 0; i < 3; ++i) {
    if (normalize(strip_quotes(fields[i])) != expected[i]) return false;
  }
  return true;
}

struct Row {
  std::string name;
  AssertionStatus status;
};

std::optional<Row> parse_row(std::string_view line) {
  const auto fields = split_commas(line);
  if (fields.size() != 3) return std::nullopt;
  const auto status = parse_status(fields[2]);
  if (!status) return std::nullopt;
  const auto name = strip_quotes(fields[1]);
  if (name.empty()) return std::nullopt;
  return Row{std::string(name), *status};
}

}  // namespace

std::string_view to_string(AssertionStatus status) {
  switch (status) {
    case AssertionStatus::kDefinite: return "DEFINITE";
    case AssertionStatus::kPossible: return "POSSIBLE";
    case AssertionStatus::kAbsent: return "ABSENT";
  }
  return "ABSENT";
}

std::optional<AssertionStatus> parse_status(std::string_view word) {
  const auto w = normalize(strip_quotes(word));
  if (w == "definite") return AssertionStatus::kDefinite;
  if (w == "possible") return AssertionStatus::kPossible;
  if (w == "absent") return AssertionStatus::kAbsent;
  return std::nullopt;
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::kTeacherVote: return "teacher_vote";
    case Provenance::kGold: return "gold";
    case Provenance::kModelPrediction: return "model_prediction";
  }
  return "model_prediction";
}

std::optional<Provenance> parse_provenance(std::string_view text) {
  if (text == "teacher_vote") return Provenance::kTeacherVote;
  if (text == "gold") return Provenance::kGold;
  if (text == "model_prediction") return Provenance::kModelPrediction;
  return std::nullopt;
}

TeacherParse parse_teacher_csv(std::string_view raw, const Vocabulary& vocab) {
  const auto lines = split_lines(raw);
  const auto header = std::find_if(lines.begin(), lines.end(), is_header);
  if (header == lines.end()) {
    throw Error(ErrorCode::kNoCsvFound,
                "no 'PathologyID,PathologyName,Word' header line");
  }
  const auto first = static_cast<std::size_t>(header - lines.begin()) + 1;

  std::size_t last = first;  // one past the last well-formed row
  for (std::size_t i = first; i < lines.size(); ++i) {
    if (parse_row(lines[i])) last = i + 1;
  }

  TeacherParse result;
  for (std::size_t i = first; i < last; ++i) {
    const auto line = lines[i];
    if (trim(line).empty()) continue;
    const auto row = parse_row(line);
    if (!row) {
      const auto fields = split_commas(line);
      result.malformed_rows.push_back(
          {i + 1, std::string(line),
           fields.size() != 3 ? "expected 3 fields, found " + std::to_string(fields.size())
                              : "unrecognized status word"});
      continue;
    }
    Assertion a;
    a.surface_name = row->name;
    a.status = row->status;
    if (const auto* entry = vocab.lookup(row->name)) a.pathology_id = entry->id;
    result.assertions.push_back(std::move(a));
  }
  return result;
}

LabelSet parse_student_list(std::string_view raw, const Vocabulary& vocab) {
  LabelSet out;
  out.provenance = Provenance::kModelPrediction;
  for (const auto line : split_lines(raw)) {
    if (trim(line).empty()) continue;
    for (const auto token : split_commas(line)) {
      const auto name = normalize(token);
      if (name.empty() || name == "none") continue;
      if (const auto* entry = vocab.lookup(name)) {
        out.labels.insert(entry->id);
      } else {
        out.oov_names.push_back(name);
      }
    }
    break;
  }
  std::sort(out.oov_names.begin(), out.oov_names.end());
  return out;
}

LabelSet assertions_to_label_set(const std::vector<Assertion>& assertions,
                                 std::string_view report_id) {
  LabelSet out;
  out.report_id = std::string(report_id);
  out.provenance = Provenance::kTeacherVote;
  for (const auto& a : assertions) {
    if (a.status == AssertionStatus::kAbsent) continue;
    if (a.pathology_id) {
      out.labels.insert(*a.pathology_id);
    } else {
      out.oov_names.push_back(normalize(a.surface_name));
    }
  }
  std::sort(out.oov_names.begin(), out.oov_names.end());
  return out;
}

std::string format_student_list(const std::set<PathologyId>& labels,
                                const Vocabulary& vocab) {
  if (labels.empty()) return "None";
  std::vector<std::string> names;
  names.reserve(labels.size());
  for (const auto id : labels) {
    const auto* entry = vocab.by_id(id);
    if (!entry) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label id " + std::to_string(id) + " not in vocabulary");
    }
    names.push_back(entry->canonical_name);
  }
  std::sort(names.begin(), names.end());
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace dx
