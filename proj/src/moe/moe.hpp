#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tinyformer/training.hpp"

namespace eemp {

/// Per-block two-way router: logits = W x + b, gate = softmax(logits)[0].
struct RouterParams {
  Tensor weight;  // [2, d_model]
  Tensor bias;    // [2]
  bool operator==(const RouterParams&) const = default;
};

struct ExpertFfn {
  Tensor gate_proj, up_proj, down_proj;
  bool operator==(const ExpertFfn&) const = default;
};

/// Two-expert soft-routed model. Every non-FFN tensor is shared; each block
/// keeps the sensibility expert's FFN and the rationality expert's FFN.
struct MoEModel {
  ModelConfig config;
  TensorMap shared;  // Parameters names minus the FFN projections
  std::vector<ExpertFfn> ffn_s;
  std::vector<ExpertFfn> ffn_r;
  std::vector<RouterParams> routers;
  json composition;  // expert hashes, router seed, training history

  /// Checkpoint naming: shared.*, ffn_s.L<i>.*, ffn_r.L<i>.*, router.L<i>.{W,b}.
  TensorMap named_tensors() const;
  bool operator==(const MoEModel& other) const {
    return config == other.config && shared == other.shared && ffn_s == other.ffn_s &&
           ffn_r == other.ffn_r && routers == other.routers;
  }
};

/// Content hash of a parameter set (SHA-256 of its checkpoint encoding).
std::string parameters_hash(const Parameters& params);

/// Averages every non-FFN tensor, keeps both FFN sets verbatim, and draws
/// router weights and biases from N(0, 0.02^2) with `router_seed`.
MoEModel compose(const Parameters& expert_s, const Parameters& expert_r, std::uint64_t router_seed);

double router_gate(const RouterParams& router, std::span<const double> x);

NetworkView make_moe_view(const MoEModel& model);

Tensor moe_forward(const MoEModel& model, std::span<const int> tokens, SequenceCache* cache = nullptr);

/// Gradient of loss_scale * mean masked NLL with respect to every tensor,
/// keyed like named_tensors().
struct MoEGradients {
  double loss = 0.0;
  TensorMap tensors;
};
MoEGradients moe_backward(const MoEModel& model, std::span<const Example> batch, double loss_scale = 1.0);

struct RouterTrainingOptions {
  /// Also update shared and FFN tensors. Off unless explicitly requested.
  bool train_all_parameters = false;
};

/// Stage-2 training: masked NLL through the routed model, updating only the
/// routers unless options say otherwise.
MoEModel train_router_stage2(const MoEModel& model, std::span<const Instance> instances,
                             const TrainConfig& config, TrainLog* log = nullptr,
                             const RouterTrainingOptions& options = {}, const RenderOptions& render = {});

std::string moe_generate(const MoEModel& model, std::span<const Turn> context, int max_tokens,
                         const RenderOptions& render = {});

double moe_mean_nll(const MoEModel& model, std::span<const Example> examples);

enum class AblationVariant {
  a,  // seed model replaces the rationality expert
  b,  // discard-trained model replaces the rationality expert
  c,  // seed model replaces the sensibility expert
  d,  // discard-trained model replaces the sensibility expert
};

AblationVariant parse_ablation_variant(std::string_view tag);
std::string_view ablation_variant_name(AblationVariant v);

MoEModel ablate_compose(AblationVariant variant, const Parameters& expert_s, const Parameters& expert_r,
                        const Parameters& base, const Parameters& discard, std::uint64_t router_seed);

void save_moe_checkpoint(const MoEModel& model, const std::filesystem::path& path);
MoEModel load_moe_checkpoint(const std::filesystem::path& path);

}  // namespace eemp
