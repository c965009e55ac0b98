#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tinyformer/lora.hpp"
#include "tinyformer/model.hpp"

namespace eemp {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;

  void validate() const;
};

json train_config_to_json(const TrainConfig& c);

struct TrainLog {
  std::vector<double> epoch_loss;  // token-weighted mean NLL per epoch
};

struct TrainableSlot {
  Tensor* param;
  Tensor* grad;
};

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::vector<TrainableSlot> slots);

  /// Clips the global gradient norm, applies one update, zeroes gradients.
  void step();

 private:
  TrainConfig config_;
  std::vector<TrainableSlot> slots_;
  std::vector<Tensor> m_, v_;
  long step_ = 0;
};

/// Minibatch loop shared by expert SFT and router training. `view` must point
/// at the tensors held in `slots`, which are updated in place. Batches follow
/// a seeded shuffle per epoch; gradient accumulation is sequential so results
/// are bit-reproducible.
void run_training(const NetworkView& view, NetworkGrad& grad, std::vector<TrainableSlot> slots,
                  std::span<const Example> examples, const TrainConfig& config, TrainLog* log,
                  bool lora_dropout = false);

/// Supervised fine-tuning. Without a LoRA config every tensor is trained;
/// with one, only adapters are trained and the result is the merged model.
Parameters train_sft(const Parameters& seed_params, std::span<const Instance> instances,
                     const TrainConfig& train_config, const std::optional<LoraConfig>& lora = std::nullopt,
                     TrainLog* log = nullptr, const RenderOptions& render = {});

}  // namespace eemp
