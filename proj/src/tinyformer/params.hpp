#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "common/json_lines.hpp"
#include "tinyformer/tensor.hpp"

namespace eemp {

struct ModelConfig {
  int vocab_size = 261;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 64;
  int max_seq = 64;
  std::uint64_t seed = 0;

  /// Throws a config error when dimensions are inconsistent.
  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  bool operator==(const ModelConfig&) const = default;
};

json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);

using TensorMap = std::map<std::string, Tensor>;

/// Projection names inside a block. The FFN trio is what the MoE duplicates.
inline const std::vector<std::string> kAttentionProjections{"q_proj", "k_proj", "v_proj", "o_proj"};
inline const std::vector<std::string> kFfnProjections{"gate_proj", "up_proj", "down_proj"};
inline const std::vector<std::string> kAllProjections{"q_proj", "k_proj", "v_proj", "o_proj",
                                                      "gate_proj", "up_proj", "down_proj"};

std::string layer_prefix(int layer);  // "layers.<i>."

/// Named tensors of one decoder-only model:
///   tok_emb [V,d], pos_emb [S,d], final_norm [d], lm_head [V,d] and per block
///   layers.<i>.{attn_norm, q_proj, k_proj, v_proj, o_proj, ffn_norm,
///               gate_proj, up_proj, down_proj}.
/// Linear weights are stored [out, in].
struct Parameters {
  ModelConfig config;
  TensorMap tensors;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool operator==(const Parameters&) const = default;
};

/// Expected shape of every tensor for a config, in name order.
std::map<std::string, std::vector<std::int64_t>> expected_shapes(const ModelConfig& config);

/// Checks names, shapes and finiteness against the config.
void validate_parameters(const Parameters& params);

/// Seeded random initialization: norm scales 1, linears N(0, 1/fan_in),
/// embeddings N(0, 0.1^2); residual output projections are further scaled
/// by 1/sqrt(2 n_layers).
Parameters init_parameters(const ModelConfig& config);

bool is_ffn_tensor(const std::string& name);

}  // namespace eemp
