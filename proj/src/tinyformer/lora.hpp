#pragma once

#include <string>
#include <vector>

#include "tinyformer/model.hpp"

namespace eemp {

struct LoraConfig {
  int rank = 8;
  double alpha = 32.0;
  double dropout = 0.1;
  std::vector<std::string> target_modules = kAllProjections;

  void validate() const;
  double scale() const { return alpha / static_cast<double>(rank); }
};

json lora_config_to_json(const LoraConfig& c);

/// Frozen base weights plus trainable adapters on the targeted projections.
struct LoraModel {
  Parameters base;
  LoraConfig config;
  AdapterMap adapters;
};

/// A ~ U(-1/sqrt(in), 1/sqrt(in)) from `seed`, B = 0, so the adapted model
/// starts out identical to the base. Throws on unknown target names.
LoraModel lora_attach(const Parameters& base, const LoraConfig& config, std::uint64_t seed);

/// Folds scale * B A into each targeted weight.
Parameters lora_merge(const LoraModel& model);

/// Adapted forward with dropout disabled.
Tensor lora_forward(const LoraModel& model, std::span<const int> tokens);

/// Total number of adapter entries (A and B).
std::size_t lora_parameter_count(const LoraModel& model);

}  // namespace eemp
