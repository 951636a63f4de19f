// SPDX-License-Identifier: Apache-2.0

#include "dx/adapter/cross_entropy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dx/error.hpp"

namespace dx::adapter {
namespace {

std::size_t check(const TokenBatch& batch) {
  const auto& logits = batch.logits;
  if (batch.target_ids.size() != logits.rows() || batch.loss_mask.size() != logits.rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "logits have " + std::to_string(logits.rows()) + " rows, targets " +
                    std::to_string(batch.target_ids.size()) + ", mask " +
                    std::to_string(batch.loss_mask.size()));
  }
  std::size_t active = 0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    if (!batch.loss_mask[t]) continue;
    const int target = batch.target_ids[t];
    if (target < 0 || static_cast<std::size_t>(target) >= logits.cols()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "target id " + std::to_string(target) + " outside vocabulary");
    }
    ++active;
  }
  if (active == 0) throw Error(ErrorCode::kAllMasked, "no completion tokens in batch");
  return active;
}

double log_sum_exp(std::span<const double> row) {
  const double m = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (const auto v : row) sum += std::exp(v - m);
  return m + std::log(sum);
}

}  // namespace

double masked_cross_entropy(const TokenBatch& batch) {
  const auto active = check(batch);
  double total = 0.0;
  for (std::size_t t = 0; t < batch.logits.rows(); ++t) {
    if (!batch.loss_mask[t]) continue;
    const auto row = batch.logits.row(t);
    total += log_sum_exp(row) - row[static_cast<std::size_t>(batch.target_ids[t])];
  }
  return total / static_cast<double>(active);
}

Matrix cross_entropy_grad(const TokenBatch& batch) {
  const auto active = static_cast<double>(check(batch));
  Matrix grad(batch.logits.rows(), batch.logits.cols());
  for (std::size_t t = 0; t < batch.logits.rows(); ++t) {
    if (!batch.loss_mask[t]) continue;
    const auto row = batch.logits.row(t);
    const double lse = log_sum_exp(row);
    auto out = grad.row(t);
    for (std::size_t v = 0; v < row.size(); ++v) out[v] = std::exp(row[v] - lse) / active;
    out[static_cast<std::size_t>(batch.target_ids[t])] -= 1.0 / active;
  }
  return grad;
}

}  // namespace dx::adapter
