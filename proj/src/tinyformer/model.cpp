#include "tinyformer/model.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace eemp {
namespace {

LinearView linear(const Parameters& p, const std::string& name, const AdapterMap* adapters) {
  LinearView v{&p.at(name), nullptr};
  if (adapters) {
    if (auto it = adapters->find(name); it != adapters->end()) v.lora = &it->second;
  }
  return v;
}

Tensor* find_grad(TensorMap& grads, const std::string& name) {
  auto it = grads.find(name);
  return it == grads.end() ? nullptr : &it->second;
}

LinearGrad linear_grad(TensorMap& grads, const std::string& name) {
  return {find_grad(grads, name), find_grad(grads, name + ".lora_a"), find_grad(grads, name + ".lora_b")};
}

}  // namespace

NetworkView make_view(const Parameters& p, const AdapterMap* adapters) {
  NetworkView v;
  v.config = p.config;
  v.tok_emb = &p.at("tok_emb");
  v.pos_emb = &p.at("pos_emb");
  v.final_norm = &p.at("final_norm");
  v.lm_head = &p.at("lm_head");
  for (int l = 0; l < p.config.n_layers; ++l) {
    const auto pre = layer_prefix(l);
    BlockView b;
    b.attn_norm = &p.at(pre + "attn_norm");
    b.q = linear(p, pre + "q_proj", adapters);
    b.k = linear(p, pre + "k_proj", adapters);
    b.v = linear(p, pre + "v_proj", adapters);
    b.o = linear(p, pre + "o_proj", adapters);
    b.ffn_norm = &p.at(pre + "ffn_norm");
    b.experts.push_back(FfnView{linear(p, pre + "gate_proj", adapters), linear(p, pre + "up_proj", adapters),
                                linear(p, pre + "down_proj", adapters)});
    v.blocks.push_back(std::move(b));
  }
  return v;
}

NetworkGrad make_grad_view(const ModelConfig& config, TensorMap& grads) {
  NetworkGrad g;
  g.tok_emb = find_grad(grads, "tok_emb");
  g.pos_emb = find_grad(grads, "pos_emb");
  g.final_norm = find_grad(grads, "final_norm");
  g.lm_head = find_grad(grads, "lm_head");
  for (int l = 0; l < config.n_layers; ++l) {
    const auto pre = layer_prefix(l);
    BlockGrad b;
    b.attn_norm = find_grad(grads, pre + "attn_norm");
    b.q = linear_grad(grads, pre + "q_proj");
    b.k = linear_grad(grads, pre + "k_proj");
    b.v = linear_grad(grads, pre + "v_proj");
    b.o = linear_grad(grads, pre + "o_proj");
    b.ffn_norm = find_grad(grads, pre + "ffn_norm");
    b.experts.push_back(FfnGrad{linear_grad(grads, pre + "gate_proj"), linear_grad(grads, pre + "up_proj"),
                                linear_grad(grads, pre + "down_proj")});
    g.blocks.push_back(std::move(b));
  }
  return g;
}

Tensor forward(const Parameters& params, std::span<const int> tokens) {
  return network_forward(make_view(params), tokens);
}

NllResult nll_loss(const Tensor& logits, std::span<const int> targets, std::span<const std::uint8_t> mask) {
  const auto T = logits.dim(0), V = logits.dim(1);
  if (static_cast<std::size_t>(T) != targets.size() || targets.size() != mask.size()) {
    throw config_error("nll_loss: logits, targets and mask lengths differ");
  }
  NllResult r;
  r.per_token.assign(static_cast<std::size_t>(T), 0.0);
  for (std::int64_t t = 0; t < T; ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    auto row = logits.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::int64_t v = 0; v < V; ++v) z += std::exp(row[v] - mx);
    const double nll = std::log(z) + mx - row[targets[static_cast<std::size_t>(t)]];
    r.per_token[static_cast<std::size_t>(t)] = nll;
    r.sum += nll;
    ++r.count;
  }
  if (r.count == 0) throw config_error("nll_loss: mask selects no tokens");
  r.mean = r.sum / static_cast<double>(r.count);
  return r;
}

Example make_example(const Instance& instance, const ModelConfig& config, const RenderOptions& render) {
  std::vector<int> context = render_context(instance.context, render);
  std::vector<int> response = tokenize(instance.target);
  response.push_back(kEosToken);

  const auto window = static_cast<std::size_t>(config.max_seq) + 1;  // inputs + final target
  if (response.size() + 2 > window) response.resize(window - 2);     // keep BOS and LST
  if (context.size() + response.size() > window) {
    const std::size_t excess = context.size() + response.size() - window;
    context.erase(context.begin() + 1, context.begin() + 1 + static_cast<std::ptrdiff_t>(excess));
  }

  std::vector<int> seq = context;
  seq.insert(seq.end(), response.begin(), response.end());
  Example ex;
  ex.inputs.assign(seq.begin(), seq.end() - 1);
  ex.targets.assign(seq.begin() + 1, seq.end());
  ex.mask.assign(ex.targets.size(), 0);
  for (std::size_t i = context.size() - 1; i < ex.targets.size(); ++i) ex.mask[i] = 1;
  return ex;
}

std::vector<Example> make_examples(std::span<const Instance> instances, const ModelConfig& config,
                                   const RenderOptions& render) {
  std::vector<Example> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(make_example(inst, config, render));
  return out;
}

double accumulate_gradients(const NetworkView& view, std::span<const Example> batch, NetworkGrad& grad,
                            double loss_scale, Rng* dropout_rng) {
  std::size_t total = 0;
  for (const auto& ex : batch) total += static_cast<std::size_t>(std::count(ex.mask.begin(), ex.mask.end(), 1));
  if (total == 0) throw config_error("batch has no response tokens");
  const double norm = loss_scale / static_cast<double>(total);

  double loss_sum = 0.0;
  ForwardOptions options{dropout_rng};
  SequenceCache cache;
  for (const auto& ex : batch) {
    Tensor logits = network_forward(view, ex.inputs, &cache, options);
    const auto T = logits.dim(0), V = logits.dim(1);
    Tensor dlogits({T, V});
    for (std::int64_t t = 0; t < T; ++t) {
      if (!ex.mask[static_cast<std::size_t>(t)]) continue;
      auto row = logits.row(t);
      auto drow = dlogits.row(t);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (std::int64_t v = 0; v < V; ++v) z += std::exp(row[v] - mx);
      const int target = ex.targets[static_cast<std::size_t>(t)];
      loss_sum += std::log(z) + mx - row[target];
      for (std::int64_t v = 0; v < V; ++v) drow[v] = norm * std::exp(row[v] - mx) / z;
      drow[target] -= norm;
    }
    network_backward(view, cache, dlogits, grad);
  }
  return loss_sum / static_cast<double>(total);
}

Gradients backward(const Parameters& params, std::span<const Example> batch, double loss_scale) {
  Gradients g;
  for (const auto& [name, t] : params.tensors) g.tensors.emplace(name, Tensor(t.shape));
  NetworkGrad gv = make_grad_view(params.config, g.tensors);
  g.loss = accumulate_gradients(make_view(params), batch, gv, loss_scale);
  return g;
}

double mean_nll(const NetworkView& view, std::span<const Example> examples) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ex : examples) {
    auto r = nll_loss(network_forward(view, ex.inputs), ex.targets, ex.mask);
    sum += r.sum;
    count += r.count;
  }
  if (count == 0) throw config_error("mean_nll: no response tokens");
  return sum / static_cast<double>(count);
}

double mean_nll(const Parameters& params, std::span<const Example> examples) {
  return mean_nll(make_view(params), examples);
}

std::vector<int> greedy_decode(const NetworkView& view, std::vector<int> prompt, int max_tokens) {
  if (max_tokens < 0) throw config_error("max_tokens must be >= 0");
  if (static_cast<int>(prompt.size()) > view.config.max_seq - max_tokens) {
    throw config_error("context of " + std::to_string(prompt.size()) + " tokens does not fit max_seq " +
                       std::to_string(view.config.max_seq) + " minus max_tokens " +
                       std::to_string(max_tokens));
  }
  std::vector<int> out;
  std::vector<int> seq = std::move(prompt);
  for (int step = 0; step < max_tokens; ++step) {
    Tensor logits = network_forward(view, seq);
    auto last = logits.row(logits.dim(0) - 1);
    const int next = static_cast<int>(std::max_element(last.begin(), last.end()) - last.begin());
    if (next == kEosToken) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

std::string generate(const Parameters& params, std::span<const Turn> context, int max_tokens,
                     const RenderOptions& render) {
  auto tokens = greedy_decode(make_view(params), render_context(context, render), max_tokens);
  return detokenize(tokens);
}

}  // namespace eemp
