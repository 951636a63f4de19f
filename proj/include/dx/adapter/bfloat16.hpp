// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace dx::adapter {

/// Rounds to the nearest bfloat16 value (8 significant bits, ties to even,
/// float32 exponent range). NaN and infinities pass through.
double round_to_bfloat16(double x);

}  // namespace dx::adapter
