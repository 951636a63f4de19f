// SPDX-License-Identifier: Apache-2.0

#include "dx/adapter/lora.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dx/adapter/bfloat16.hpp"
#include "dx/error.hpp"

namespace dx::adapter {

void validate(const LoraConfig& config) {
  if (config.rank == 0) throw Error(ErrorCode::kInvalidArgument, "LoRA rank must be positive");
  if (!(config.alpha > 0.0) || !std::isfinite(config.scale())) {
    throw Error(ErrorCode::kInvalidArgument, "LoRA alpha must be positive and finite");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "dropout must be in [0, 1)");
  }
  if (config.layer_count == 0) throw Error(ErrorCode::kInvalidArgument, "layer count must be positive");
  for (const auto& t : config.target_modules) {
    if (t.d_out == 0 || t.d_in == 0 || config.rank > std::min(t.d_out, t.d_in)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "rank " + std::to_string(config.rank) + " does not fit module '" + t.name +
                      "' (" + std::to_string(t.d_out) + "x" + std::to_string(t.d_in) + ")");
    }
  }
}

LoraAdapter LoraAdapter::initialized(std::size_t d_out, std::size_t d_in, std::size_t rank,
                                     std::uint64_t seed) {
  LoraAdapter adapter{Matrix(rank, d_in), Matrix(d_out, rank)};
  std::mt19937_64 rng(seed);
  // kaiming_uniform_(a=sqrt(5)) on an r x d_in weight gives bound 1/sqrt(d_in).
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (auto& v : adapter.a.data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * bound;
  }
  return adapter;
}

Matrix lora_delta(const LoraAdapter& adapter, const LoraConfig& config) {
  if (adapter.a.rows() != config.rank || adapter.b.cols() != config.rank) {
    throw Error(ErrorCode::kShapeMismatch,
                "adapter factors are " + std::to_string(adapter.b.rows()) + "x" +
                    std::to_string(adapter.b.cols()) + " and " + std::to_string(adapter.a.rows()) +
                    "x" + std::to_string(adapter.a.cols()) + " for rank " +
                    std::to_string(config.rank));
  }
  auto delta = matmul(adapter.b, adapter.a);
  const double scale = config.scale();
  for (auto& v : delta.data()) v *= scale;
  return delta;
}

Matrix merge(const QuantizedTensor& base, const LoraAdapter& adapter, const LoraConfig& config) {
  const auto delta = lora_delta(adapter, config);
  if (base.shape.size() != 2 || base.shape[0] != delta.rows() || base.shape[1] != delta.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "base weight shape does not match the adapter delta");
  }
  Matrix merged(delta.rows(), delta.cols(), nf4_dequantize(base));
  for (std::size_t i = 0; i < merged.size(); ++i) {
    merged.data()[i] = round_to_bfloat16(merged.data()[i] + delta.data()[i]);
  }
  return merged;
}

TrainableCount count_trainable(const LoraConfig& config) {
  TrainableCount count;
  for (const auto& t : config.target_modules) {
    count.per_layer += static_cast<std::uint64_t>(config.rank) * (t.d_in + t.d_out);
  }
  count.lora_params = count.per_layer * config.layer_count;
  return count;
}

ArchSpec parse_arch_spec(const std::string& json_text) {
  ArchSpec arch;
  try {
    const auto j = nlohmann::json::parse(json_text);
    arch.name = j.value("name", "");
    arch.layer_count = j.at("layer_count").get<std::size_t>();
    for (const auto& m : j.at("target_modules")) {
      arch.target_modules.push_back(
          {m.at("name").get<std::string>(), m.at("d_out").get<std::size_t>(),
           m.at("d_in").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("architecture spec: ") + e.what());
  }
  if (arch.layer_count == 0 || arch.target_modules.empty()) {
    throw Error(ErrorCode::kMalformedFile, "architecture spec needs layers and target modules");
  }
  for (const auto& t : arch.target_modules) {
    if (t.d_out == 0 || t.d_in == 0) {
      throw Error(ErrorCode::kMalformedFile, "module '" + t.name + "' has a zero dimension");
    }
  }
  return arch;
}

ArchSpec load_arch_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_arch_spec(buf.str());
}

LoraConfig make_lora_config(const ArchSpec& arch, std::size_t rank, double alpha) {
  LoraConfig config;
  config.rank = rank;
  config.alpha = alpha;
  config.target_modules = arch.target_modules;
  config.layer_count = arch.layer_count;
  validate(config);
  return config;
}

}  // namespace dx::adapter
