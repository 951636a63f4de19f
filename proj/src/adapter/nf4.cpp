// SPDX-License-Identifier: Apache-2.0

#include "dx/adapter/nf4.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "dx/adapter/bfloat16.hpp"
#include "dx/error.hpp"

namespace dx::adapter {
namespace {

constexpr std::array<char, 8> kQuantMagic = {'D', 'X', 'N', 'F', '4', '\0', '\0', '\1'};
constexpr std::array<char, 8> kDenseMagic = {'D', 'X', 'T', 'E', 'N', 'S', 'O', 'R'};

static_assert(std::endian::native == std::endian::little,
              "file codecs assume a little-endian host");

// Acklam's rational approximation, refined by one Halley step.
double acklam_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - p_low) return -acklam_quantile(1 - p);
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

Codebook build_codebook() {
  const double offset = nf4_offset();
  // Probabilities evenly spaced from offset to 0.5, endpoint dropped.
  const auto spaced = [offset](int points, int i) {
    return offset + (0.5 - offset) * static_cast<double>(i) / static_cast<double>(points - 1);
  };
  std::vector<double> levels;
  for (int i = 0; i < 8; ++i) levels.push_back(normal_quantile(spaced(9, i)));
  levels.push_back(0.0);
  for (int i = 0; i < 7; ++i) levels.push_back(-normal_quantile(spaced(8, i)));
  const double top = *std::max_element(levels.begin(), levels.end());
  for (auto& v : levels) v /= top;
  std::sort(levels.begin(), levels.end());
  levels.front() = -1.0;  // exact by symmetry; pin against rounding
  levels.back() = 1.0;
  Codebook cb{};
  std::copy(levels.begin(), levels.end(), cb.begin());
  return cb;
}

std::array<double, kCodebookSize - 1> midpoints(const Codebook& cb) {
  std::array<double, kCodebookSize - 1> mids{};
  for (std::size_t k = 0; k + 1 < cb.size(); ++k) mids[k] = 0.5 * (cb[k] + cb[k + 1]);
  return mids;
}

std::size_t nearest_index(const std::array<double, kCodebookSize - 1>& mids, double x) {
  // Index = number of midpoints strictly below x, so a value exactly on a
  // midpoint takes the lower level.
  return static_cast<std::size_t>(std::lower_bound(mids.begin(), mids.end(), x) - mids.begin());
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(std::span<const char> s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::kMalformedFile, "truncated tensor file");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

}  // namespace

double nf4_offset() { return 0.5 * ((1.0 - 1.0 / 30.0) + (1.0 - 1.0 / 32.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    throw Error(ErrorCode::kInvalidArgument, "probability outside [0, 1]");
  }
  // 1 - p is exact here; the lower tail avoids cancellation in the residual.
  if (p > 0.5) return -normal_quantile(1.0 - p);
  double x = acklam_quantile(p);
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

const Codebook& nf4_codebook() {
  static const Codebook cb = build_codebook();
  return cb;
}

std::size_t nf4_zero_index() {
  static const std::size_t idx = static_cast<std::size_t>(
      std::find(nf4_codebook().begin(), nf4_codebook().end(), 0.0) - nf4_codebook().begin());
  return idx;
}

double max_codebook_gap(const Codebook& codebook) {
  double gap = 0.0;
  for (std::size_t k = 0; k + 1 < codebook.size(); ++k) {
    gap = std::max(gap, codebook[k + 1] - codebook[k]);
  }
  return gap;
}

QuantizedTensor nf4_quantize(std::span<const double> weights, std::vector<std::size_t> shape,
                             std::size_t block_size) {
  if (block_size == 0) throw Error(ErrorCode::kInvalidArgument, "block size must be positive");
  if (product(shape) != weights.size()) {
    throw Error(ErrorCode::kInvalidArgument, "shape does not match value count");
  }
  QuantizedTensor q;
  q.shape = std::move(shape);
  q.block_size = block_size;
  q.codebook = nf4_codebook();
  q.codes.resize(weights.size());
  const auto mids = midpoints(q.codebook);
  const auto zero = nf4_zero_index();

  for (std::size_t begin = 0; begin < weights.size(); begin += block_size) {
    const auto end = std::min(weights.size(), begin + block_size);
    double absmax = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      if (!std::isfinite(weights[i])) {
        throw Error(ErrorCode::kNonFiniteInput, "element " + std::to_string(i));
      }
      absmax = std::max(absmax, std::abs(weights[i]));
    }
    q.absmax.push_back(absmax);
    for (std::size_t i = begin; i < end; ++i) {
      q.codes[i] = static_cast<std::uint8_t>(
          absmax == 0.0 ? zero : nearest_index(mids, weights[i] / absmax));
    }
  }
  return q;
}

QuantizedTensor nf4_quantize(std::span<const double> weights, std::size_t block_size) {
  return nf4_quantize(weights, {weights.size()}, block_size);
}

std::vector<double> nf4_dequantize(const QuantizedTensor& q) {
  std::vector<double> out(q.codes.size());
  for (std::size_t b = 0; b < q.absmax.size(); ++b) {
    const double scale = round_to_bfloat16(q.absmax[b]);
    const auto begin = b * q.block_size;
    const auto end = std::min(out.size(), begin + q.block_size);
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = round_to_bfloat16(q.codebook[q.codes[i]] * scale);
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize(const QuantizedTensor& q) {
  Writer w;
  w.put_bytes(kQuantMagic);
  w.put(static_cast<std::uint32_t>(q.shape.size()));
  for (const auto d : q.shape) w.put(static_cast<std::uint64_t>(d));
  w.put(static_cast<std::uint64_t>(q.block_size));
  for (const auto v : q.codebook) w.put(v);
  for (const auto a : q.absmax) w.put(a);
  for (std::size_t i = 0; i < q.codes.size(); i += 2) {
    const std::uint8_t lo = q.codes[i] & 0x0F;
    const std::uint8_t hi = i + 1 < q.codes.size() ? (q.codes[i + 1] & 0x0F) : 0;
    w.put(static_cast<std::uint8_t>(lo | (hi << 4)));
  }
  return std::move(w.bytes);
}

QuantizedTensor deserialize_quantized(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(kQuantMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kQuantMagic.begin())) {
    throw Error(ErrorCode::kMalformedFile, "not an NF4 tensor file");
  }
  QuantizedTensor q;
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw Error(ErrorCode::kMalformedFile, "implausible tensor rank");
  for (std::uint32_t i = 0; i < rank; ++i) q.shape.push_back(r.get<std::uint64_t>());
  q.block_size = r.get<std::uint64_t>();
  if (q.block_size == 0) throw Error(ErrorCode::kMalformedFile, "zero block size");
  for (auto& v : q.codebook) v = r.get<double>();
  const auto n = product(q.shape);
  const auto blocks = (n + q.block_size - 1) / q.block_size;
  q.absmax.resize(blocks);
  for (auto& a : q.absmax) a = r.get<double>();
  const auto packed = r.take((n + 1) / 2);
  q.codes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto byte = packed[i / 2];
    q.codes[i] = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
  }
  if (!r.done()) throw Error(ErrorCode::kMalformedFile, "trailing bytes in tensor file");
  return q;
}

void write_quantized(const std::filesystem::path& path, const QuantizedTensor& q) {
  write_file(path, serialize(q));
}

QuantizedTensor read_quantized(const std::filesystem::path& path) {
  return deserialize_quantized(read_file(path));
}

void write_dense_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  if (product(t.shape) != t.values.size()) {
    throw Error(ErrorCode::kInvalidArgument, "shape does not match value count");
  }
  Writer w;
  w.put_bytes(kDenseMagic);
  w.put(static_cast<std::uint32_t>(t.shape.size()));
  for (const auto d : t.shape) w.put(static_cast<std::uint64_t>(d));
  for (const auto v : t.values) w.put(static_cast<float>(v));
  write_file(path, w.bytes);
}

DenseTensor read_dense_tensor(const std::filesystem::path& path) {
  DenseTensor t;
  if (path.extension() == ".txt") {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::string token;
    while (in >> token) {
      try {
        std::size_t used = 0;
        t.values.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kMalformedFile, "not a number: '" + token + "'");
      }
    }
    t.shape = {t.values.size()};
    return t;
  }
  const auto bytes = read_file(path);
  Reader r(bytes);
  const auto magic = r.take(kDenseMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kDenseMagic.begin())) {
    throw Error(ErrorCode::kMalformedFile, "not a dense tensor file");
  }
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw Error(ErrorCode::kMalformedFile, "implausible tensor rank");
  for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(r.get<std::uint64_t>());
  const auto n = product(t.shape);
  t.values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.values.push_back(r.get<float>());
  if (!r.done()) throw Error(ErrorCode::kMalformedFile, "trailing bytes in tensor file");
  return t;
}

}  // namespace dx::adapter
