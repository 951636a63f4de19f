// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dx::adapter {

inline constexpr std::size_t kDefaultBlockSize = 64;
inline constexpr std::size_t kCodebookSize = 16;

using Codebook = std::array<double, kCodebookSize>;

/// 4-bit NormalFloat levels: sorted ascending, exactly -1, 0 and +1 present.
/// Eight positive levels are standard-normal quantiles at probabilities
/// evenly spaced from `nf4_offset()` down to 0.5 (exclusive), seven negative
/// levels mirror quantiles on one fewer step, and everything is divided by
/// the largest quantile.
const Codebook& nf4_codebook();

/// Upper probability used for the outermost quantile:
/// mean of 1 - 1/(2*15) and 1 - 1/(2*16).
double nf4_offset();

/// Standard normal quantile function.
double normal_quantile(double p);

std::size_t nf4_zero_index();
double max_codebook_gap(const Codebook& codebook = nf4_codebook());

struct QuantizedTensor {
  std::vector<std::size_t> shape;
  std::size_t block_size = kDefaultBlockSize;
  Codebook codebook{};
  std::vector<double> absmax;        // one per block
  std::vector<std::uint8_t> codes;   // one 4-bit index per element, unpacked

  std::size_t element_count() const { return codes.size(); }
  std::size_t block_count() const { return absmax.size(); }
  /// Bytes of the packed code payload (two codes per byte).
  std::size_t packed_code_bytes() const { return (codes.size() + 1) / 2; }

  bool operator==(const QuantizedTensor&) const = default;
};

/// Blockwise absmax quantization onto the NF4 codebook; each w/absmax goes
/// to the nearest level with ties to the lower index. Throws NonFiniteInput
/// and InvalidArgument (zero block size, shape/value count mismatch).
QuantizedTensor nf4_quantize(std::span<const double> weights,
                             std::vector<std::size_t> shape,
                             std::size_t block_size = kDefaultBlockSize);
QuantizedTensor nf4_quantize(std::span<const double> weights,
                             std::size_t block_size = kDefaultBlockSize);

/// element = bf16(codebook[code] * bf16(absmax)). Rounding the scale as well
/// as the product keeps the 16-bit compute path closed: re-quantizing the
/// output reproduces the same codes and the same bf16 scale.
std::vector<double> nf4_dequantize(const QuantizedTensor& q);

/// Little-endian file image: magic "DXNF4\0\0\1", u32 rank, u64 dims,
/// u64 block_size, 16 f64 codebook, f64 absmax per block, packed codes
/// (low nibble first).
std::vector<std::uint8_t> serialize(const QuantizedTensor& q);
QuantizedTensor deserialize_quantized(std::span<const std::uint8_t> bytes);

void write_quantized(const std::filesystem::path& path, const QuantizedTensor& q);
QuantizedTensor read_quantized(const std::filesystem::path& path);

/// Dense input tensors: magic "DXTENSOR", u32 rank, u64 dims, f32 values
/// (little-endian). Files ending in ".txt" are whitespace-separated numbers
/// read as a 1-D tensor.
struct DenseTensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

void write_dense_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor read_dense_tensor(const std::filesystem::path& path);

}  // namespace dx::adapter
