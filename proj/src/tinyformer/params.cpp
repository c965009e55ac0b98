#include "tinyformer/params.hpp"

#include <cmath>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace eemp {

void ModelConfig::validate() const {
  if (vocab_size < 261 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 ||
      max_seq < 1) {
    throw config_error("model dimensions must be >= 1 and vocab_size >= 261");
  }
  if (d_model % n_heads != 0) throw config_error("d_model must be divisible by n_heads");
}

json model_config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},       {"max_seq", c.max_seq},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw data_error(std::string("bad model config: ") + e.what());
  }
  return c;
}

std::string layer_prefix(int layer) { return "layers." + std::to_string(layer) + "."; }

const Tensor& Parameters::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw data_error("missing tensor '" + name + "'");
  return it->second;
}

Tensor& Parameters::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw data_error("missing tensor '" + name + "'");
  return it->second;
}

std::map<std::string, std::vector<std::int64_t>> expected_shapes(const ModelConfig& c) {
  const std::int64_t d = c.d_model, f = c.d_ff, v = c.vocab_size, s = c.max_seq;
  std::map<std::string, std::vector<std::int64_t>> shapes;
  shapes["tok_emb"] = {v, d};
  shapes["pos_emb"] = {s, d};
  shapes["final_norm"] = {d};
  shapes["lm_head"] = {v, d};
  for (int l = 0; l < c.n_layers; ++l) {
    const auto p = layer_prefix(l);
    shapes[p + "attn_norm"] = {d};
    shapes[p + "ffn_norm"] = {d};
    for (const auto& name : kAttentionProjections) shapes[p + name] = {d, d};
    shapes[p + "gate_proj"] = {f, d};
    shapes[p + "up_proj"] = {f, d};
    shapes[p + "down_proj"] = {d, f};
  }
  return shapes;
}

void validate_parameters(const Parameters& params) {
  params.config.validate();
  const auto shapes = expected_shapes(params.config);
  if (shapes.size() != params.tensors.size()) {
    throw data_error("parameter set has " + std::to_string(params.tensors.size()) +
                     " tensors, config requires " + std::to_string(shapes.size()));
  }
  for (const auto& [name, shape] : shapes) {
    const auto& t = params.at(name);
    if (t.shape != shape) {
      throw data_error("tensor '" + name + "' has shape " + shape_string(t.shape) + ", expected " +
                       shape_string(shape));
    }
    if (!t.all_finite()) throw data_error("tensor '" + name + "' has non-finite entries");
  }
}

bool is_ffn_tensor(const std::string& name) {
  if (!name.starts_with("layers.")) return false;
  for (const auto& p : kFfnProjections) {
    if (name.ends_with("." + p)) return true;
  }
  return false;
}

Parameters init_parameters(const ModelConfig& config) {
  config.validate();
  Parameters params;
  params.config = config;
  Rng rng(config.seed);
  const double residual_scale = 1.0 / std::sqrt(2.0 * config.n_layers);
  for (const auto& [name, shape] : expected_shapes(config)) {
    Tensor t(shape);
    if (shape.size() == 1) {
      std::fill(t.data.begin(), t.data.end(), 1.0);
    } else {
      double stddev = 1.0 / std::sqrt(static_cast<double>(shape[1]));
      if (name == "tok_emb" || name == "pos_emb") stddev = 0.1;
      if (name.ends_with("o_proj") || name.ends_with("down_proj")) stddev *= residual_scale;
      for (auto& v : t.data) v = rng.normal(0.0, stddev);
    }
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

}  // namespace eemp
