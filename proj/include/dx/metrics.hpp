// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dx/parse.hpp"

namespace dx {

enum class Modality { kCR, kCT, kMR, kUS, kOther };

std::string_view to_string(Modality modality);
/// "CR", "CT", "MR", "US", "other"; also accepts "MRI", "XR" and "X-ray".
std::optional<Modality> parse_modality(std::string_view text);

struct EvalPair {
  std::string report_id;
  Modality modality = Modality::kOther;
  LabelSet gold;
  LabelSet predicted;
};

enum class MacroScope {
  /// Average over classes with gold support > 0.
  kSupported,
  /// Average over classes present in gold or predictions.
  kObserved,
};

struct EvalOptions {
  bool count_oov_as_fp = true;
  MacroScope macro_scope = MacroScope::kSupported;
};

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double f1 = 0.0;

  std::size_t support() const { return tp + fn; }
};

struct MetricsSummary {
  double precision = 0.0;
  double recall = 0.0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;  // includes OOV predictions when counted as FP
  std::size_t fn = 0;
  std::size_t oov_predictions = 0;
  std::size_t total_predictions = 0;  // in-vocabulary labels + OOV names
  double hallucination_rate = 0.0;
  std::size_t report_count = 0;
  std::map<PathologyId, ClassCounts> per_class;
};

struct MetricsReport {
  MetricsSummary overall;
  std::map<Modality, MetricsSummary> per_modality;
};

/// 2PR/(P+R), or 0 when P+R == 0.
double f1_from(double precision, double recall);

/// Throws EmptyInput for no pairs.
MetricsReport evaluate(const std::vector<EvalPair>& pairs,
                       const EvalOptions& options = {});

struct ConfusionPair {
  PathologyId gold = 0;
  PathologyId predicted = 0;
  std::size_t count = 0;

  bool operator==(const ConfusionPair&) const = default;
};

/// Multi-label confusion tally: within each report every missed gold label
/// is paired with every spurious prediction (gold -> predicted). Ranked by
/// count, ties by (gold, predicted) id. Throws EmptyInput.
std::vector<ConfusionPair> confusion_pairs(const std::vector<EvalPair>& pairs,
                                           std::size_t top_k);

nlohmann::json to_json(const MetricsSummary& summary);
nlohmann::json to_json(const MetricsReport& report);

/// Aligned text table: one row for "all" then one per modality, columns
/// Support, Precision, Recall, F1 Micro, F1 Macro.
std::string render_table(const MetricsReport& report);

}  // namespace dx
