// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dx/adapter/matrix.hpp"

namespace dx::adapter {

/// logits is T x V. loss_mask[t] is true for completion tokens, false for
/// prompt tokens that must not contribute to the loss.
struct TokenBatch {
  Matrix logits;
  std::vector<int> target_ids;
  std::vector<bool> loss_mask;
};

/// Mean over completion positions of -log softmax(logits[t])[target[t]],
/// via log-sum-exp. Throws AllMasked, ShapeMismatch, InvalidArgument.
double masked_cross_entropy(const TokenBatch& batch);

/// d loss / d logits: (softmax - onehot) / m on completion rows, zero rows
/// on prompt positions.
Matrix cross_entropy_grad(const TokenBatch& batch);

}  // namespace dx::adapter
