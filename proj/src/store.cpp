// SPDX-License-Identifier: Apache-2.0

#include "dx/store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "dx/error.hpp"
#include "dx/prompt.hpp"

namespace dx {
namespace {

using nlohmann::json;

std::string line_tag(std::size_t line_no) { return "line " + std::to_string(line_no); }

/// Calls fn(json, line_no) for each non-blank line.
template <typename Fn>
void for_each_json_line(std::string_view jsonl, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kMalformedJson, line_tag(line_no) + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::kMalformedJson, line_tag(line_no) + ": not an object");
    fn(j, line_no);
  }
}

const json& require(const json& j, const char* field, std::size_t line_no) {
  const auto it = j.find(field);
  if (it == j.end() || it->is_null()) {
    throw Error(ErrorCode::kMissingField, line_tag(line_no) + ": '" + field + "'");
  }
  return *it;
}

template <typename T>
T get_as(const json& value, const char* field, std::size_t line_no) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kMalformedJson, line_tag(line_no) + ": bad type for '" + field + "'");
  }
}

std::string to_lines(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

std::vector<ReportRecord> parse_reports(std::string_view jsonl) {
  std::vector<ReportRecord> records;
  std::map<std::string, std::size_t> seen;
  for_each_json_line(jsonl, [&](const json& j, std::size_t line_no) {
    ReportRecord r;
    r.report_id = get_as<std::string>(require(j, "report_id", line_no), "report_id", line_no);
    const auto modality = get_as<std::string>(require(j, "modality", line_no), "modality", line_no);
    const auto parsed = parse_modality(modality);
    if (!parsed) {
      throw Error(ErrorCode::kMalformedJson, line_tag(line_no) + ": unknown modality '" + modality + "'");
    }
    r.modality = *parsed;
    if (const auto it = j.find("anatomy"); it != j.end() && !it->is_null()) {
      r.anatomy = get_as<std::string>(*it, "anatomy", line_no);
    }
    r.impression = get_as<std::string>(require(j, "impression", line_no), "impression", line_no);
    if (r.impression.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::kMissingField, line_tag(line_no) + ": 'impression' is empty");
    }
    if (const auto [it, inserted] = seen.emplace(r.report_id, line_no); !inserted) {
      throw Error(ErrorCode::kDuplicateId, line_tag(line_no) + ": report_id '" + r.report_id +
                                               "' first seen on line " + std::to_string(it->second));
    }
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<ReportRecord> ingest_reports(const std::filesystem::path& path) {
  return parse_reports(read_text_file(path));
}

std::string serialize_reports(const std::vector<ReportRecord>& records) {
  std::vector<json> rows;
  for (const auto& r : records) {
    json j = {{"report_id", r.report_id},
              {"modality", std::string(to_string(r.modality))},
              {"impression", r.impression}};
    if (r.anatomy) j["anatomy"] = *r.anatomy;
    rows.push_back(std::move(j));
  }
  return to_lines(rows);
}

std::vector<LabelSet> parse_label_sets(std::string_view jsonl) {
  std::vector<LabelSet> sets;
  for_each_json_line(jsonl, [&](const json& j, std::size_t line_no) {
    LabelSet s;
    s.report_id = get_as<std::string>(require(j, "report_id", line_no), "report_id", line_no);
    for (const auto id : get_as<std::vector<int>>(require(j, "labels", line_no), "labels", line_no)) {
      s.labels.insert(id);
    }
    if (const auto it = j.find("oov"); it != j.end()) {
      s.oov_names = get_as<std::vector<std::string>>(*it, "oov", line_no);
      std::sort(s.oov_names.begin(), s.oov_names.end());
    }
    const auto prov = j.value("provenance", std::string("model_prediction"));
    const auto parsed = parse_provenance(prov);
    if (!parsed) {
      throw Error(ErrorCode::kMalformedJson, line_tag(line_no) + ": unknown provenance '" + prov + "'");
    }
    s.provenance = *parsed;
    sets.push_back(std::move(s));
  });
  return sets;
}

std::vector<LabelSet> read_label_sets(const std::filesystem::path& path) {
  return parse_label_sets(read_text_file(path));
}

std::string serialize_label_sets(const std::vector<LabelSet>& sets) {
  std::vector<json> rows;
  for (const auto& s : sets) {
    rows.push_back({{"report_id", s.report_id},
                    {"labels", std::vector<int>(s.labels.begin(), s.labels.end())},
                    {"oov", s.oov_names},
                    {"provenance", std::string(to_string(s.provenance))}});
  }
  return to_lines(rows);
}

std::vector<RunRecord> parse_run_records(std::string_view jsonl) {
  std::vector<RunRecord> runs;
  for_each_json_line(jsonl, [&](const json& j, std::size_t line_no) {
    RunRecord r;
    r.report_id = get_as<std::string>(require(j, "report_id", line_no), "report_id", line_no);
    r.run_index = get_as<int>(require(j, "run_index", line_no), "run_index", line_no);
    if (const auto it = j.find("raw_text"); it != j.end() && !it->is_null()) {
      r.raw_text = get_as<std::string>(*it, "raw_text", line_no);
    }
    if (const auto it = j.find("error"); it != j.end() && !it->is_null()) {
      r.error = get_as<std::string>(*it, "error", line_no);
    }
    if (!r.raw_text && !r.error) {
      throw Error(ErrorCode::kMissingField, line_tag(line_no) + ": 'raw_text' or 'error'");
    }
    runs.push_back(std::move(r));
  });
  return runs;
}

std::string serialize_run_records(const std::vector<RunRecord>& runs) {
  std::vector<json> rows;
  for (const auto& r : runs) {
    json j = {{"report_id", r.report_id}, {"run_index", r.run_index}};
    j["raw_text"] = r.raw_text ? json(*r.raw_text) : json(nullptr);
    j["error"] = r.error ? json(*r.error) : json(nullptr);
    rows.push_back(std::move(j));
  }
  return to_lines(rows);
}

std::string serialize_finetune_pairs(const std::vector<FineTunePair>& pairs) {
  std::vector<json> rows;
  for (const auto& p : pairs) rows.push_back({{"prompt", p.prompt}, {"completion", p.completion}});
  return to_lines(rows);
}

std::vector<FineTunePair> parse_finetune_pairs(std::string_view jsonl) {
  std::vector<FineTunePair> pairs;
  for_each_json_line(jsonl, [&](const json& j, std::size_t line_no) {
    pairs.push_back({get_as<std::string>(require(j, "prompt", line_no), "prompt", line_no),
                     get_as<std::string>(require(j, "completion", line_no), "completion", line_no)});
  });
  return pairs;
}

std::string serialize_assignment(const SplitAssignment& assignment) {
  std::vector<json> rows;
  for (std::size_t i = 0; i < assignment.part_of.size(); ++i) {
    rows.push_back({{"report_id", assignment.report_ids[i]}, {"part", assignment.part_of[i]}});
  }
  return to_lines(rows);
}

SplitAssignment parse_assignment(std::string_view jsonl, std::size_t part_count) {
  SplitAssignment a;
  a.part_count = part_count;
  for_each_json_line(jsonl, [&](const json& j, std::size_t line_no) {
    a.report_ids.push_back(get_as<std::string>(require(j, "report_id", line_no), "report_id", line_no));
    const auto part = get_as<std::size_t>(require(j, "part", line_no), "part", line_no);
    if (part >= part_count) {
      throw Error(ErrorCode::kMalformedJson, line_tag(line_no) + ": part out of range");
    }
    a.part_of.push_back(part);
  });
  return a;
}

json quality_to_json(const SplitQuality& quality, const SplitSpec& spec,
                     const SplitAssignment& assignment) {
  json per_label = json::object();
  for (const auto& [id, d] : quality.per_label) {
    per_label[std::to_string(id)] = {{"support", d.support},
                                     {"achieved", d.achieved},
                                     {"deviation", d.deviation},
                                     {"max_deviation", d.max_deviation}};
  }
  return {{"ratios", spec.ratios},
          {"seed", spec.seed},
          {"order", std::string(to_string(spec.order))},
          {"part_sizes", assignment.part_sizes()},
          {"max_deviation", quality.max_deviation},
          {"mean_deviation", quality.mean_deviation},
          {"per_label", per_label}};
}

std::vector<FineTunePair> emit_finetune_pairs(const std::vector<ReportRecord>& reports,
                                              const std::map<std::string, LabelSet>& labels,
                                              const Vocabulary& vocab) {
  std::vector<FineTunePair> pairs;
  pairs.reserve(reports.size());
  for (const auto& r : reports) {
    const auto it = labels.find(r.report_id);
    if (it == labels.end()) throw Error(ErrorCode::kMissingLabels, r.report_id);
    pairs.push_back({render(finetune_template(), r.impression, vocab),
                     format_student_list(it->second.labels, vocab)});
  }
  return pairs;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "rename to " + path.string() + ": " + ec.message());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIoError, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0x0F];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(read_text_file(path));
}

json build_manifest(const ManifestInputs& inputs) {
  json outputs = json::object();
  for (const auto& [name, path] : inputs.outputs) {
    const auto recorded = inputs.base_dir.empty() ? path : path.lexically_relative(inputs.base_dir);
    outputs[name] = {{"path", recorded.generic_string()}, {"sha256", sha256_file(path)}};
  }
  return {{"command", inputs.command},
          {"created_at", utc_timestamp()},
          {"backend", inputs.backend},
          {"settings", inputs.settings},
          {"inputs", inputs.inputs},
          {"templates",
           {{"teacher_labeling_sha256", sha256_hex(teacher_template().body)},
            {"finetune_sha256", sha256_hex(finetune_template().body)}}},
          {"vocabulary_sha256", sha256_hex(inputs.vocabulary_text)},
          {"outputs", outputs}};
}

void write_manifest(const std::filesystem::path& path, const ManifestInputs& inputs) {
  write_text_file(path, build_manifest(inputs).dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const std::filesystem::path& path) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedJson, path.string() + ": " + e.what());
  }
  std::vector<std::string> mismatched;
  for (const auto& [name, entry] : manifest.at("outputs").items()) {
    std::filesystem::path file = entry.at("path").get<std::string>();
    if (file.is_relative()) file = path.parent_path() / file;
    if (!std::filesystem::exists(file) || sha256_file(file) != entry.at("sha256").get<std::string>()) {
      mismatched.push_back(name);
    }
  }
  return mismatched;
}

}  // namespace dx
