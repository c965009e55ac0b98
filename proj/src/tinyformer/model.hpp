#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"
#include "tinyformer/network.hpp"
#include "tinyformer/params.hpp"
#include "tinyformer/tokenizer.hpp"

namespace eemp {

using AdapterMap = std::map<std::string, LoraAdapter>;  // keyed by projection tensor name

/// Binds a view over a parameter set, optionally with LoRA adapters.
NetworkView make_view(const Parameters& params, const AdapterMap* adapters = nullptr);

/// Binds gradient sinks for every name present in `grads`; absent names are frozen.
/// Adapter gradients use "<projection>.lora_a" / "<projection>.lora_b".
NetworkGrad make_grad_view(const ModelConfig& config, TensorMap& grads);

Tensor forward(const Parameters& params, std::span<const int> tokens);

struct NllResult {
  double mean = 0.0;  // over masked positions
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<double> per_token;  // 0 at unmasked positions
};

/// Masked negative log-likelihood. Throws on empty mask or shape mismatch.
NllResult nll_loss(const Tensor& logits, std::span<const int> targets, std::span<const std::uint8_t> mask);

/// Next-token training example: mask selects response positions (the
/// listener target and its EOS).
struct Example {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<std::uint8_t> mask;
};

/// Context rendered with role tokens, target bytes, EOS. Over-long sequences
/// drop the oldest context tokens after BOS; the response is truncated only
/// when it alone exceeds the window.
Example make_example(const Instance& instance, const ModelConfig& config, const RenderOptions& render = {});
std::vector<Example> make_examples(std::span<const Instance> instances, const ModelConfig& config,
                                   const RenderOptions& render = {});

/// Runs forward/backward over a batch and accumulates the gradient of
/// loss_scale * (mean masked NLL over the whole batch). Returns the mean NLL.
double accumulate_gradients(const NetworkView& view, std::span<const Example> batch, NetworkGrad& grad,
                            double loss_scale = 1.0, Rng* dropout_rng = nullptr);

struct Gradients {
  double loss = 0.0;
  TensorMap tensors;  // same names and shapes as Parameters::tensors
};

Gradients backward(const Parameters& params, std::span<const Example> batch, double loss_scale = 1.0);

/// Token-pooled mean NLL over examples.
double mean_nll(const NetworkView& view, std::span<const Example> examples);
double mean_nll(const Parameters& params, std::span<const Example> examples);

/// Greedy decoding until EOS or max_tokens. Throws when the prompt is longer
/// than max_seq - max_tokens.
std::vector<int> greedy_decode(const NetworkView& view, std::vector<int> prompt, int max_tokens);

std::string generate(const Parameters& params, std::span<const Turn> context, int max_tokens,
                     const RenderOptions& render = {});

}  // namespace eemp
