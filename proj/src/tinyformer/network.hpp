#pragma once

#include <span>
#include <vector>

#include "common/rng.hpp"
#include "tinyformer/params.hpp"
#include "tinyformer/tensor.hpp"

namespace eemp {

/// Low-rank adapter on one projection: y += scale * B A dropout(x).
struct LoraAdapter {
  Tensor a;  // [rank, in]
  Tensor b;  // [out, rank]
  double scale = 1.0;
  double dropout = 0.0;
};

// Non-owning views over weights and matching gradient sinks. A null gradient
// pointer means "frozen": no gradient is accumulated for that tensor, though
// activation gradients still flow through it.

struct LinearView {
  const Tensor* weight = nullptr;  // [out, in]
  const LoraAdapter* lora = nullptr;
};
struct LinearGrad {
  Tensor* weight = nullptr;
  Tensor* lora_a = nullptr;
  Tensor* lora_b = nullptr;
};

struct FfnView {
  LinearView gate, up, down;
};
struct FfnGrad {
  LinearGrad gate, up, down;
};

/// Two-way soft router: gate = softmax(W x + b)[0].
struct RouterView {
  const Tensor* weight = nullptr;  // [2, d]
  const Tensor* bias = nullptr;    // [2]
};
struct RouterGrad {
  Tensor* weight = nullptr;
  Tensor* bias = nullptr;
};

struct BlockView {
  const Tensor* attn_norm = nullptr;
  LinearView q, k, v, o;
  const Tensor* ffn_norm = nullptr;
  /// One expert for a plain model; two (sensibility, rationality) with a router for MoE.
  std::vector<FfnView> experts;
  RouterView router;
};
struct BlockGrad {
  Tensor* attn_norm = nullptr;
  LinearGrad q, k, v, o;
  Tensor* ffn_norm = nullptr;
  std::vector<FfnGrad> experts;
  RouterGrad router;
};

struct NetworkView {
  ModelConfig config;
  const Tensor* tok_emb = nullptr;
  const Tensor* pos_emb = nullptr;
  std::vector<BlockView> blocks;
  const Tensor* final_norm = nullptr;
  const Tensor* lm_head = nullptr;
};
struct NetworkGrad {
  Tensor* tok_emb = nullptr;
  Tensor* pos_emb = nullptr;
  std::vector<BlockGrad> blocks;
  Tensor* final_norm = nullptr;
  Tensor* lm_head = nullptr;
};

struct LinearCache {
  Tensor lora_mask;    // per-input multipliers when dropout was sampled, else empty
  Tensor lora_hidden;  // [T, rank]
};

struct FfnCache {
  Tensor gate_pre;  // [T, d_ff]
  Tensor up;        // [T, d_ff]
  Tensor hidden;    // silu(gate_pre) * up
  Tensor out;       // [T, d]
  LinearCache gate_c, up_c, down_c;
};

struct BlockCache {
  Tensor input;       // residual stream entering the block
  Tensor normed1;     // attention input
  std::vector<double> inv_rms1;
  Tensor q, k, v;     // [T, d]
  Tensor probs;       // [H, T, T] causal attention weights
  Tensor attn_ctx;    // [T, d]
  Tensor mid;         // residual after attention
  Tensor normed2;     // FFN / router input
  std::vector<double> inv_rms2;
  LinearCache q_c, k_c, v_c, o_c;
  std::vector<FfnCache> experts;
  std::vector<double> gates;  // per position, MoE only
  Tensor ffn_out;             // [T, d] mixed FFN output
};

struct SequenceCache {
  std::vector<int> tokens;
  std::vector<BlockCache> blocks;
  Tensor final_input;
  std::vector<double> inv_rms_final;
  Tensor final_normed;
};

struct ForwardOptions {
  /// Non-null enables LoRA dropout sampling (training mode).
  Rng* dropout_rng = nullptr;
};

inline constexpr double kRmsEpsilon = 1e-6;

/// Logits [T, vocab]. Throws a config error when tokens exceed max_seq or
/// fall outside the vocabulary.
Tensor network_forward(const NetworkView& net, std::span<const int> tokens, SequenceCache* cache = nullptr,
                       const ForwardOptions& options = {});

/// Accumulates (+=) parameter gradients for dL/dlogits into `grad`.
void network_backward(const NetworkView& net, const SequenceCache& cache, const Tensor& dlogits,
                      NetworkGrad& grad);

/// Router gate for one hidden vector.
double router_gate_value(const RouterView& router, std::span<const double> x);

/// FFN output down(silu(gate x) * up x) for a single vector, without LoRA.
std::vector<double> ffn_apply(const FfnView& ffn, std::span<const double> x);

}  // namespace eemp
