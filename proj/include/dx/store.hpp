// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dx/metrics.hpp"
#include "dx/parse.hpp"
#include "dx/split.hpp"
#include "dx/vocab.hpp"

namespace dx {

/// Inputs are assumed to be de-identified before they reach this library.
struct ReportRecord {
  std::string report_id;
  Modality modality = Modality::kOther;
  std::optional<std::string> anatomy;
  std::string impression;

  bool operator==(const ReportRecord&) const = default;
};

struct FineTunePair {
  std::string prompt;
  std::string completion;

  bool operator==(const FineTunePair&) const = default;
};

/// One raw teacher completion, persisted so voting can be re-run offline.
struct RunRecord {
  std::string report_id;
  int run_index = 0;
  std::optional<std::string> raw_text;  // absent when the call failed
  std::optional<std::string> error;
};

// --- JSONL -----------------------------------------------------------------

/// Corpus lines: {"report_id", "modality", "anatomy"?, "impression"}.
/// Throws MalformedJson(line), MissingField(line), DuplicateId(line).
std::vector<ReportRecord> parse_reports(std::string_view jsonl);
std::vector<ReportRecord> ingest_reports(const std::filesystem::path& path);
std::string serialize_reports(const std::vector<ReportRecord>& records);

/// Label lines: {"report_id", "labels": [int], "oov": [str], "provenance"}.
std::vector<LabelSet> parse_label_sets(std::string_view jsonl);
std::vector<LabelSet> read_label_sets(const std::filesystem::path& path);
std::string serialize_label_sets(const std::vector<LabelSet>& sets);

std::vector<RunRecord> parse_run_records(std::string_view jsonl);
std::string serialize_run_records(const std::vector<RunRecord>& runs);

std::string serialize_finetune_pairs(const std::vector<FineTunePair>& pairs);
std::vector<FineTunePair> parse_finetune_pairs(std::string_view jsonl);

/// {"report_id", "part"} per line.
std::string serialize_assignment(const SplitAssignment& assignment);
SplitAssignment parse_assignment(std::string_view jsonl, std::size_t part_count);

nlohmann::json quality_to_json(const SplitQuality& quality, const SplitSpec& spec,
                               const SplitAssignment& assignment);

// --- Dataset assembly ------------------------------------------------------

/// One pair per report: fine-tune prompt + alphabetical canonical names (or
/// "None"). Throws MissingLabels(report_id).
std::vector<FineTunePair> emit_finetune_pairs(const std::vector<ReportRecord>& reports,
                                              const std::map<std::string, LabelSet>& labels,
                                              const Vocabulary& vocab);

// --- Files, digests, manifests --------------------------------------------

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename. Throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ManifestInputs {
  std::string command;
  std::string backend;
  std::map<std::string, std::string> settings;  // seeds, vote mode, split spec...
  std::map<std::string, std::string> inputs;    // logical name -> path
  std::map<std::string, std::filesystem::path> outputs;
  /// Output paths are recorded relative to this directory (normally the
  /// manifest's own directory) so relocated run folders still verify.
  std::filesystem::path base_dir;
  std::string vocabulary_text;
};

/// Records template hashes, vocabulary hash, backend identity, settings and
/// output digests. Only "created_at" varies between identical runs.
nlohmann::json build_manifest(const ManifestInputs& inputs);
void write_manifest(const std::filesystem::path& path, const ManifestInputs& inputs);

/// Recomputes every output digest (relative paths resolve against the
/// manifest's directory); returns names that differ or are missing.
std::vector<std::string> verify_manifest(const std::filesystem::path& path);

}  // namespace dx
