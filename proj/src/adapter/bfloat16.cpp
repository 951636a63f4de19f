// SPDX-License-Identifier: Apache-2.0

#include "dx/adapter/bfloat16.hpp"

#include <cmath>
#include <limits>

namespace dx::adapter {
namespace {

constexpr int kSignificandBits = 8;
constexpr int kMinNormalExponent = -125;  // frexp exponent of 2^-126
constexpr int kSubnormalQuantumExponent = -133;
// Largest finite bfloat16: (2 - 2^-7) * 2^127.
const double kMaxFinite = std::ldexp(2.0 - std::ldexp(1.0, -7), 127);

}  // namespace

double round_to_bfloat16(double x) {
  if (!std::isfinite(x) || x == 0.0) return x;
  int exponent = 0;
  std::frexp(x, &exponent);
  // nearbyint honours the default round-to-nearest-even mode.
  const int quantum = exponent >= kMinNormalExponent ? exponent - kSignificandBits
                                                     : kSubnormalQuantumExponent;
  const double rounded = std::ldexp(std::nearbyint(std::ldexp(x, -quantum)), quantum);
  if (std::abs(rounded) > kMaxFinite) {
    return std::copysign(std::numeric_limits<double>::infinity(), x);
  }
  return rounded;
}

}  // namespace dx::adapter
