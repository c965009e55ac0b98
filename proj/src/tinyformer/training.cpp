#include "tinyformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace eemp {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (epochs < 0) throw config_error("epochs must be >= 0");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"grad_clip_norm", c.grad_clip_norm},
          {"seed", c.seed}};
}

Optimizer::Optimizer(const TrainConfig& config, std::vector<TrainableSlot> slots)
    : config_(config), slots_(std::move(slots)) {
  if (config_.optimizer == OptimizerKind::adam) {
    for (const auto& s : slots_) {
      m_.emplace_back(s.param->shape);
      v_.emplace_back(s.param->shape);
    }
  }
}

void Optimizer::step() {
  double scale = 1.0;
  if (config_.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& s : slots_) sq += squared_norm(*s.grad);
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip_norm) scale = config_.grad_clip_norm / norm;
  }
  ++step_;
  const double lr = config_.learning_rate;
  if (config_.optimizer == OptimizerKind::sgd) {
    for (auto& s : slots_) {
      for (std::size_t i = 0; i < s.param->data.size(); ++i) s.param->data[i] -= lr * scale * s.grad->data[i];
      s.grad->zero();
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < slots_.size(); ++k) {
    auto& p = slots_[k].param->data;
    auto& g = slots_[k].grad->data;
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
    slots_[k].grad->zero();
  }
}

void run_training(const NetworkView& view, NetworkGrad& grad, std::vector<TrainableSlot> slots,
                  std::span<const Example> examples, const TrainConfig& config, TrainLog* log,
                  bool lora_dropout) {
  config.validate();
  if (config.epochs == 0) return;
  if (examples.empty()) throw data_error("training set is empty");
  for (auto& s : slots) s.grad->zero();

  Optimizer opt(config, std::move(slots));
  Rng order_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, order_rng);
    double loss_tokens = 0.0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      std::size_t batch_tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(examples[order[i]]);
        batch_tokens += static_cast<std::size_t>(std::count(batch.back().mask.begin(), batch.back().mask.end(), 1));
      }
      const double loss =
          accumulate_gradients(view, batch, grad, 1.0, lora_dropout ? &dropout_rng : nullptr);
      loss_tokens += loss * static_cast<double>(batch_tokens);
      tokens += batch_tokens;
      opt.step();
    }
    if (log) log->epoch_loss.push_back(loss_tokens / static_cast<double>(tokens));
  }
}

Parameters train_sft(const Parameters& seed_params, std::span<const Instance> instances,
                     const TrainConfig& train_config, const std::optional<LoraConfig>& lora, TrainLog* log,
                     const RenderOptions& render) {
  train_config.validate();
  if (instances.empty()) throw data_error("train_sft: empty dataset");
  if (train_config.epochs == 0) return seed_params;
  const auto examples = make_examples(instances, seed_params.config, render);

  if (!lora) {
    Parameters params = seed_params;
    TensorMap grads;
    for (const auto& [name, t] : params.tensors) grads.emplace(name, Tensor(t.shape));
    std::vector<TrainableSlot> slots;
    for (auto& [name, t] : params.tensors) slots.push_back({&t, &grads.at(name)});
    NetworkGrad gv = make_grad_view(params.config, grads);
    run_training(make_view(params), gv, std::move(slots), examples, train_config, log);
    return params;
  }

  LoraModel model = lora_attach(seed_params, *lora, train_config.seed);
  TensorMap grads;
  std::vector<TrainableSlot> slots;
  for (const auto& [name, ad] : model.adapters) {
    grads.emplace(name + ".lora_a", Tensor(ad.a.shape));
    grads.emplace(name + ".lora_b", Tensor(ad.b.shape));
  }
  for (auto& [name, ad] : model.adapters) {
    slots.push_back({&ad.a, &grads.at(name + ".lora_a")});
    slots.push_back({&ad.b, &grads.at(name + ".lora_b")});
  }
  NetworkGrad gv = make_grad_view(model.base.config, grads);
  run_training(make_view(model.base, &model.adapters), gv, std::move(slots), examples, train_config, log,
               /*lora_dropout=*/true);
  return lora_merge(model);
}

}  // namespace eemp
