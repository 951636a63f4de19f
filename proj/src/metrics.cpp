// SPDX-License-Identifier: Apache-2.0

#include "dx/metrics.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "dx/error.hpp"

namespace dx {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

MetricsSummary summarize(const std::vector<const EvalPair*>& pairs,
                         const EvalOptions& options) {
  MetricsSummary s;
  s.report_count = pairs.size();
  for (const auto* pair : pairs) {
    const auto& gold = pair->gold.labels;
    const auto& pred = pair->predicted.labels;
    for (const auto id : pred) {
      auto& c = s.per_class[id];
      if (gold.contains(id)) {
        ++c.tp;
      } else {
        ++c.fp;
      }
    }
    for (const auto id : gold) {
      if (!pred.contains(id)) ++s.per_class[id].fn;
    }
    s.oov_predictions += pair->predicted.oov_names.size();
    s.total_predictions += pred.size() + pair->predicted.oov_names.size();
  }

  double macro_sum = 0.0;
  std::size_t macro_n = 0;
  for (auto& [id, c] : s.per_class) {
    s.tp += c.tp;
    s.fp += c.fp;
    s.fn += c.fn;
    c.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    const bool in_scope = options.macro_scope == MacroScope::kSupported
                              ? c.support() > 0
                              : c.tp + c.fp + c.fn > 0;
    if (in_scope) {
      macro_sum += c.f1;
      ++macro_n;
    }
  }
  if (options.count_oov_as_fp) s.fp += s.oov_predictions;

  s.precision = ratio(s.tp, s.tp + s.fp);
  s.recall = ratio(s.tp, s.tp + s.fn);
  s.f1_micro = f1_from(s.precision, s.recall);
  s.f1_macro = macro_n == 0 ? 0.0 : macro_sum / static_cast<double>(macro_n);
  s.hallucination_rate = ratio(s.oov_predictions, s.total_predictions);
  return s;
}

}  // namespace

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::kCR: return "CR";
    case Modality::kCT: return "CT";
    case Modality::kMR: return "MR";
    case Modality::kUS: return "US";
    case Modality::kOther: return "other";
  }
  return "other";
}

std::optional<Modality> parse_modality(std::string_view text) {
  if (text == "CR" || text == "XR" || text == "X-ray") return Modality::kCR;
  if (text == "CT") return Modality::kCT;
  if (text == "MR" || text == "MRI") return Modality::kMR;
  if (text == "US") return Modality::kUS;
  if (text == "other") return Modality::kOther;
  return std::nullopt;
}

double f1_from(double precision, double recall) {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

MetricsReport evaluate(const std::vector<EvalPair>& pairs, const EvalOptions& options) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no evaluation pairs");
  std::vector<const EvalPair*> all;
  std::map<Modality, std::vector<const EvalPair*>> groups;
  for (const auto& p : pairs) {
    if (p.gold.report_id != p.predicted.report_id) {
      throw Error(ErrorCode::kInvalidArgument,
                  "gold '" + p.gold.report_id + "' paired with prediction '" +
                      p.predicted.report_id + "'");
    }
    all.push_back(&p);
    groups[p.modality].push_back(&p);
  }
  MetricsReport report;
  report.overall = summarize(all, options);
  for (const auto& [modality, members] : groups) {
    report.per_modality.emplace(modality, summarize(members, options));
  }
  return report;
}

std::vector<ConfusionPair> confusion_pairs(const std::vector<EvalPair>& pairs,
                                           std::size_t top_k) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyInput, "no evaluation pairs");
  std::map<std::pair<PathologyId, PathologyId>, std::size_t> tally;
  for (const auto& p : pairs) {
    const auto& gold = p.gold.labels;
    const auto& pred = p.predicted.labels;
    for (const auto g : gold) {
      if (pred.contains(g)) continue;
      for (const auto q : pred) {
        if (!gold.contains(q)) ++tally[{g, q}];
      }
    }
  }
  std::vector<ConfusionPair> out;
  out.reserve(tally.size());
  for (const auto& [key, n] : tally) out.push_back({key.first, key.second, n});
  // The map is already ordered by (gold, predicted); a stable sort on count
  // keeps that as the tie order.
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  if (out.size() > top_k) out.resize(top_k);
  return out;
}

nlohmann::json to_json(const MetricsSummary& s) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [id, c] : s.per_class) {
    per_class[std::to_string(id)] = {
        {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"f1", c.f1}, {"support", c.support()}};
  }
  return {{"precision", s.precision},
          {"recall", s.recall},
          {"f1_micro", s.f1_micro},
          {"f1_macro", s.f1_macro},
          {"tp", s.tp},
          {"fp", s.fp},
          {"fn", s.fn},
          {"oov_predictions", s.oov_predictions},
          {"total_predictions", s.total_predictions},
          {"hallucination_rate", s.hallucination_rate},
          {"reports", s.report_count},
          {"per_class", per_class}};
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j = to_json(report.overall);
  nlohmann::json by_modality = nlohmann::json::object();
  for (const auto& [m, s] : report.per_modality) {
    by_modality[std::string(to_string(m))] = to_json(s);
  }
  j["per_modality"] = by_modality;
  return j;
}

std::string render_table(const MetricsReport& report) {
  std::string out = fmt::format("{:<10} {:>8} {:>10} {:>8} {:>9} {:>9}\n", "Modality",
                                "Support", "Precision", "Recall", "F1 Micro", "F1 Macro");
  const auto row = [&out](std::string_view name, const MetricsSummary& s) {
    out += fmt::format("{:<10} {:>8} {:>10.3f} {:>8.3f} {:>9.3f} {:>9.3f}\n", name,
                       s.report_count, s.precision, s.recall, s.f1_micro, s.f1_macro);
  };
  row("all", report.overall);
  for (const auto& [m, s] : report.per_modality) row(to_string(m), s);
  return out;
}

}  // namespace dx
