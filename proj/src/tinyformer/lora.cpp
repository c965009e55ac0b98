#include "tinyformer/lora.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace eemp {

void LoraConfig::validate() const {
  if (rank < 1) throw config_error("LoRA rank must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw config_error("LoRA dropout must be in [0, 1)");
  for (const auto& t : target_modules) {
    if (std::find(kAllProjections.begin(), kAllProjections.end(), t) == kAllProjections.end()) {
      throw config_error("unknown LoRA target module '" + t + "'");
    }
  }
}

json lora_config_to_json(const LoraConfig& c) {
  return {{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout}, {"target_modules", c.target_modules}};
}

LoraModel lora_attach(const Parameters& base, const LoraConfig& config, std::uint64_t seed) {
  config.validate();
  LoraModel m{base, config, {}};
  Rng rng(seed);
  for (int l = 0; l < base.config.n_layers; ++l) {
    for (const auto& target : config.target_modules) {
      const std::string name = layer_prefix(l) + target;
      const Tensor& w = base.at(name);
      const auto out = w.dim(0), in = w.dim(1);
      LoraAdapter ad;
      ad.a = Tensor({config.rank, in});
      ad.b = Tensor({out, config.rank});
      ad.scale = config.scale();
      ad.dropout = config.dropout;
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      for (auto& v : ad.a.data) v = (2.0 * rng.uniform() - 1.0) * bound;
      m.adapters.emplace(name, std::move(ad));
    }
  }
  return m;
}

Parameters lora_merge(const LoraModel& model) {
  Parameters merged = model.base;
  for (const auto& [name, ad] : model.adapters) {
    Tensor& w = merged.at(name);
    const auto out = w.dim(0), in = w.dim(1), rank = ad.a.dim(0);
    for (std::int64_t o = 0; o < out; ++o) {
      for (std::int64_t i = 0; i < in; ++i) {
        double s = 0.0;
        for (std::int64_t r = 0; r < rank; ++r) s += ad.b.at(o, r) * ad.a.at(r, i);
        w.at(o, i) += ad.scale * s;
      }
    }
  }
  return merged;
}

Tensor lora_forward(const LoraModel& model, std::span<const int> tokens) {
  return network_forward(make_view(model.base, &model.adapters), tokens);
}

std::size_t lora_parameter_count(const LoraModel& model) {
  std::size_t n = 0;
  for (const auto& [name, ad] : model.adapters) n += ad.a.size() + ad.b.size();
  return n;
}

}  // namespace eemp
