// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dx/adapter/lora.hpp"
#include "dx/error.hpp"
#include "dx/llm_gateway.hpp"
#include "dx/metrics.hpp"
#include "dx/split.hpp"
#include "dx/vote.hpp"

namespace dx::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBackend = 3;

/// Maps a failure that escaped a command to its process exit code.
int exit_code_for(const Error& error);

enum class BackendKind { kMock, kHttp };

struct LabelOptions {
  fs::path corpus;
  fs::path vocab;
  fs::path out_dir;
  BackendKind backend = BackendKind::kMock;
  int runs = kDefaultRunsPerReport;
  double temperature = 1.0;
  VoteMode vote_mode = VoteMode::kSetLevel;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
  std::string model = "gpt-4-32k";
  int max_tokens = 1024;
  double flip_probability = 0.0;  // mock only
  double oov_probability = 0.0;   // mock only
};

struct LabelOutcome {
  int exit_code = kExitOk;
  std::size_t labeled = 0;
  std::vector<std::string> failed_reports;
  std::size_t runs_without_csv = 0;
  fs::path labels_path;
  fs::path runs_path;
  fs::path manifest_path;
};

/// Teacher labeling: render, query runs_per_report times, parse, vote.
/// Writes runs.jsonl, labels.jsonl and manifest.json under out_dir. When
/// `backend` is null one is built from options (HTTP reads the environment).
LabelOutcome cmd_label(const LabelOptions& options, std::ostream& log,
                       CompletionBackend* backend = nullptr);

struct VoteOptions {
  fs::path runs_file;
  fs::path vocab;
  fs::path out;
  VoteMode vote_mode = VoteMode::kSetLevel;
};

/// Re-votes persisted raw runs without re-querying any backend.
LabelOutcome cmd_vote(const VoteOptions& options, std::ostream& log);

struct SplitOptions {
  fs::path labels;
  fs::path out_dir;
  SplitSpec spec;
};

struct SplitOutcome {
  SplitAssignment assignment;
  SplitQuality quality;
};

/// Writes assignment.jsonl and quality.json under out_dir.
SplitOutcome cmd_split(const SplitOptions& options, std::ostream& log);

struct EmitOptions {
  fs::path corpus;
  fs::path labels;
  fs::path vocab;
  fs::path out;
  std::optional<fs::path> assignment;  // restrict to one split part
  std::size_t part = 0;
};

std::size_t cmd_emit_finetune(const EmitOptions& options, std::ostream& log);

enum class MissingPolicy { kScoreEmpty, kError };

struct EvalCommandOptions {
  fs::path gold;
  fs::path predictions;
  std::optional<fs::path> corpus;  // supplies modality per report
  std::optional<fs::path> vocab;   // required for raw "output" predictions
  std::optional<fs::path> json_out;
  EvalOptions metrics;
  MissingPolicy missing = MissingPolicy::kScoreEmpty;
};

/// Gold/prediction files are labels JSONL; prediction lines may instead
/// carry a raw student reply in "output", parsed as a comma list.
std::vector<EvalPair> load_eval_pairs(const EvalCommandOptions& options, std::ostream& log);

MetricsReport cmd_eval(const EvalCommandOptions& options, std::ostream& out);

struct ErrorsOptions {
  EvalCommandOptions eval;
  std::size_t top_k = 10;
};

std::vector<ConfusionPair> cmd_errors(const ErrorsOptions& options, std::ostream& out);

struct ParamCountOptions {
  fs::path arch;
  std::size_t rank = 64;
  double alpha = 16.0;
};

adapter::TrainableCount cmd_param_count(const ParamCountOptions& options, std::ostream& out);

struct QuantizeOptions {
  fs::path input;
  fs::path out;
  std::size_t block_size = adapter::kDefaultBlockSize;
};

struct QuantizeStats {
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
  double error_bound = 0.0;  // max block absmax * largest codebook gap / 2
  double compression_ratio = 0.0;  // 32-bit payload bytes / packed code bytes
  std::size_t elements = 0;
};

QuantizeStats cmd_quantize(const QuantizeOptions& options, std::ostream& out);

}  // namespace dx::cli
