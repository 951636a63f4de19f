// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dx/adapter/matrix.hpp"
#include "dx/adapter/nf4.hpp"

namespace dx::adapter {

/// One adapted linear projection, W is d_out x d_in.
struct TargetModule {
  std::string name;
  std::size_t d_out = 0;
  std::size_t d_in = 0;
};

/// Optimizer settings of the reference fine-tuning runs. Recorded for
/// provenance only; nothing here trains.
struct TrainingSettings {
  std::string optimizer = "adamw_8bit";
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  std::string scheduler = "reduce_lr_on_plateau";
  int epochs = 5;
};

struct LoraConfig {
  std::size_t rank = 64;
  double alpha = 16.0;
  double dropout = 0.05;
  std::string bias = "none";
  std::vector<TargetModule> target_modules;
  std::size_t layer_count = 1;
  TrainingSettings training;

  double scale() const { return alpha / static_cast<double>(rank); }
};

/// Throws InvalidArgument on r == 0, r > min(d_out, d_in), non-positive
/// alpha, dropout outside [0, 1) or zero layers.
void validate(const LoraConfig& config);

/// L_A is r x d_in, L_B is d_out x r.
struct LoraAdapter {
  Matrix a;
  Matrix b;

  /// Kaiming-uniform L_A (seeded), zero L_B, so the initial delta is zero.
  static LoraAdapter initialized(std::size_t d_out, std::size_t d_in, std::size_t rank,
                                 std::uint64_t seed);
};

/// (alpha / r) * L_B * L_A. Throws ShapeMismatch.
Matrix lora_delta(const LoraAdapter& adapter, const LoraConfig& config);

/// bf16(dequantize(base) + lora_delta) with the sum formed in double. The
/// base must be a rank-2 tensor of shape [d_out, d_in]. Throws ShapeMismatch.
Matrix merge(const QuantizedTensor& base, const LoraAdapter& adapter, const LoraConfig& config);

struct TrainableCount {
  std::uint64_t lora_params = 0;
  std::uint64_t per_layer = 0;
};

/// per_layer = sum of r * (d_in + d_out); lora_params = per_layer * layers.
TrainableCount count_trainable(const LoraConfig& config);

/// Architecture description: {"name", "layer_count", "target_modules":
/// [{"name", "d_out", "d_in"}...]}. Throws MalformedFile.
struct ArchSpec {
  std::string name;
  std::size_t layer_count = 0;
  std::vector<TargetModule> target_modules;
};

ArchSpec load_arch_spec(const std::filesystem::path& path);
ArchSpec parse_arch_spec(const std::string& json_text);

LoraConfig make_lora_config(const ArchSpec& arch, std::size_t rank, double alpha);

}  // namespace dx::adapter
