#include "moe/moe.hpp"

#include "common/error.hpp"
#include "common/hash.hpp"
#include "common/rng.hpp"
#include "tinyformer/checkpoint.hpp"

namespace eemp {
namespace {

constexpr double kRouterInitStd = 0.02;

std::string layer_tag(int l) { return "L" + std::to_string(l); }

ExpertFfn take_ffn(const Parameters& p, int l) {
  const auto pre = layer_prefix(l);
  return {p.at(pre + "gate_proj"), p.at(pre + "up_proj"), p.at(pre + "down_proj")};
}

void check_compatible(const Parameters& a, const Parameters& b) {
  if (!(a.config.vocab_size == b.config.vocab_size && a.config.d_model == b.config.d_model &&
        a.config.n_layers == b.config.n_layers && a.config.n_heads == b.config.n_heads &&
        a.config.d_ff == b.config.d_ff && a.config.max_seq == b.config.max_seq)) {
    throw config_error("cannot compose experts with different model configs");
  }
  validate_parameters(a);
  validate_parameters(b);
}

FfnView ffn_view(const ExpertFfn& f) {
  return {{&f.gate_proj, nullptr}, {&f.up_proj, nullptr}, {&f.down_proj, nullptr}};
}

}  // namespace

TensorMap MoEModel::named_tensors() const {
  TensorMap out;
  for (const auto& [name, t] : shared) out.emplace("shared." + name, t);
  for (int l = 0; l < static_cast<int>(ffn_s.size()); ++l) {
    for (auto [prefix, set] : {std::pair{"ffn_s.", &ffn_s}, std::pair{"ffn_r.", &ffn_r}}) {
      const auto base = std::string(prefix) + layer_tag(l) + ".";
      out.emplace(base + "gate_proj", (*set)[l].gate_proj);
      out.emplace(base + "up_proj", (*set)[l].up_proj);
      out.emplace(base + "down_proj", (*set)[l].down_proj);
    }
    out.emplace("router." + layer_tag(l) + ".W", routers[l].weight);
    out.emplace("router." + layer_tag(l) + ".b", routers[l].bias);
  }
  return out;
}

std::string parameters_hash(const Parameters& params) {
  Checkpoint ck{{{"config", model_config_to_json(params.config)}}, params.tensors};
  return sha256_hex(encode_checkpoint(ck));
}

MoEModel compose(const Parameters& expert_s, const Parameters& expert_r, std::uint64_t router_seed) {
  check_compatible(expert_s, expert_r);
  MoEModel m;
  m.config = expert_s.config;
  for (const auto& [name, ts] : expert_s.tensors) {
    if (is_ffn_tensor(name)) continue;
    const Tensor& tr = expert_r.at(name);
    Tensor avg(ts.shape);
    for (std::size_t i = 0; i < avg.data.size(); ++i) avg.data[i] = 0.5 * (ts.data[i] + tr.data[i]);
    m.shared.emplace(name, std::move(avg));
  }
  Rng rng(router_seed);
  for (int l = 0; l < m.config.n_layers; ++l) {
    m.ffn_s.push_back(take_ffn(expert_s, l));
    m.ffn_r.push_back(take_ffn(expert_r, l));
    RouterParams r{Tensor({2, m.config.d_model}), Tensor({2})};
    for (auto& v : r.weight.data) v = rng.normal(0.0, kRouterInitStd);
    for (auto& v : r.bias.data) v = rng.normal(0.0, kRouterInitStd);
    m.routers.push_back(std::move(r));
  }
  m.composition = {{"expert_s_hash", parameters_hash(expert_s)},
                   {"expert_r_hash", parameters_hash(expert_r)},
                   {"router_seed", router_seed},
                   {"router_init_std", kRouterInitStd},
                   {"stage2", json::array()}};
  return m;
}

double router_gate(const RouterParams& router, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(router.weight.dim(1))) {
    throw config_error("router input has wrong dimension");
  }
  return router_gate_value(RouterView{&router.weight, &router.bias}, x);
}

NetworkView make_moe_view(const MoEModel& m) {
  auto at = [&](const std::string& name) -> const Tensor* {
    auto it = m.shared.find(name);
    if (it == m.shared.end()) throw data_error("MoE model lacks shared tensor '" + name + "'");
    return &it->second;
  };
  NetworkView v;
  v.config = m.config;
  v.tok_emb = at("tok_emb");
  v.pos_emb = at("pos_emb");
  v.final_norm = at("final_norm");
  v.lm_head = at("lm_head");
  for (int l = 0; l < m.config.n_layers; ++l) {
    const auto pre = layer_prefix(l);
    BlockView b;
    b.attn_norm = at(pre + "attn_norm");
    b.q = {at(pre + "q_proj"), nullptr};
    b.k = {at(pre + "k_proj"), nullptr};
    b.v = {at(pre + "v_proj"), nullptr};
    b.o = {at(pre + "o_proj"), nullptr};
    b.ffn_norm = at(pre + "ffn_norm");
    b.experts = {ffn_view(m.ffn_s[l]), ffn_view(m.ffn_r[l])};
    b.router = {&m.routers[l].weight, &m.routers[l].bias};
    v.blocks.push_back(std::move(b));
  }
  return v;
}

Tensor moe_forward(const MoEModel& model, std::span<const int> tokens, SequenceCache* cache) {
  return network_forward(make_moe_view(model), tokens, cache);
}

namespace {

MoEModel zeros_like(const MoEModel& m) {
  MoEModel g;
  g.config = m.config;
  for (const auto& [name, t] : m.shared) g.shared.emplace(name, Tensor(t.shape));
  auto zeros = [](const ExpertFfn& f) {
    return ExpertFfn{Tensor(f.gate_proj.shape), Tensor(f.up_proj.shape), Tensor(f.down_proj.shape)};
  };
  for (const auto& f : m.ffn_s) g.ffn_s.push_back(zeros(f));
  for (const auto& f : m.ffn_r) g.ffn_r.push_back(zeros(f));
  for (const auto& r : m.routers) g.routers.push_back({Tensor(r.weight.shape), Tensor(r.bias.shape)});
  return g;
}

/// Gradient sinks inside `g`; with routers_only every other tensor is frozen.
NetworkGrad bind_moe_grad(MoEModel& g, bool routers_only) {
  NetworkGrad grad;
  grad.blocks.resize(g.routers.size());
  for (std::size_t l = 0; l < g.routers.size(); ++l) {
    grad.blocks[l].router = {&g.routers[l].weight, &g.routers[l].bias};
  }
  if (routers_only) return grad;
  NetworkGrad shared = make_grad_view(g.config, g.shared);
  grad.tok_emb = shared.tok_emb;
  grad.pos_emb = shared.pos_emb;
  grad.final_norm = shared.final_norm;
  grad.lm_head = shared.lm_head;
  for (std::size_t l = 0; l < g.routers.size(); ++l) {
    auto& gb = grad.blocks[l];
    const auto& sb = shared.blocks[l];
    gb.attn_norm = sb.attn_norm;
    gb.ffn_norm = sb.ffn_norm;
    gb.q = sb.q;
    gb.k = sb.k;
    gb.v = sb.v;
    gb.o = sb.o;
    auto& fs = g.ffn_s[l];
    auto& fr = g.ffn_r[l];
    gb.experts = {FfnGrad{{&fs.gate_proj}, {&fs.up_proj}, {&fs.down_proj}},
                  FfnGrad{{&fr.gate_proj}, {&fr.up_proj}, {&fr.down_proj}}};
  }
  return grad;
}

/// (parameter, gradient) pairs; routers first.
std::vector<TrainableSlot> moe_slots(MoEModel& p, MoEModel& g, bool routers_only) {
  std::vector<TrainableSlot> slots;
  for (std::size_t l = 0; l < p.routers.size(); ++l) {
    slots.push_back({&p.routers[l].weight, &g.routers[l].weight});
    slots.push_back({&p.routers[l].bias, &g.routers[l].bias});
  }
  if (routers_only) return slots;
  for (auto& [name, t] : p.shared) slots.push_back({&t, &g.shared.at(name)});
  for (std::size_t l = 0; l < p.ffn_s.size(); ++l) {
    for (auto [pf, gf] : {std::pair{&p.ffn_s[l], &g.ffn_s[l]}, std::pair{&p.ffn_r[l], &g.ffn_r[l]}}) {
      slots.push_back({&pf->gate_proj, &gf->gate_proj});
      slots.push_back({&pf->up_proj, &gf->up_proj});
      slots.push_back({&pf->down_proj, &gf->down_proj});
    }
  }
  return slots;
}

}  // namespace

MoEGradients moe_backward(const MoEModel& model, std::span<const Example> batch, double loss_scale) {
  MoEModel g = zeros_like(model);
  NetworkGrad grad = bind_moe_grad(g, false);
  MoEGradients out;
  out.loss = accumulate_gradients(make_moe_view(model), batch, grad, loss_scale);
  out.tensors = g.named_tensors();
  return out;
}

MoEModel train_router_stage2(const MoEModel& model, std::span<const Instance> instances,
                             const TrainConfig& config, TrainLog* log, const RouterTrainingOptions& options,
                             const RenderOptions& render) {
  config.validate();
  if (instances.empty()) throw data_error("train_router_stage2: empty dataset");
  MoEModel out = model;
  if (config.epochs == 0) return out;

  const auto examples = make_examples(instances, out.config, render);
  NetworkView view = make_moe_view(out);
  const bool routers_only = !options.train_all_parameters;
  MoEModel grads = zeros_like(out);
  NetworkGrad grad = bind_moe_grad(grads, routers_only);
  auto slots = moe_slots(out, grads, routers_only);

  TrainLog local_log;
  run_training(view, grad, std::move(slots), examples, config, &local_log);
  out.composition["stage2"].push_back({{"train_config", train_config_to_json(config)},
                                       {"instances", instances.size()},
                                       {"train_all_parameters", options.train_all_parameters},
                                       {"epoch_loss", local_log.epoch_loss}});
  if (log) *log = local_log;
  return out;
}

std::string moe_generate(const MoEModel& model, std::span<const Turn> context, int max_tokens,
                         const RenderOptions& render) {
  return detokenize(greedy_decode(make_moe_view(model), render_context(context, render), max_tokens));
}

double moe_mean_nll(const MoEModel& model, std::span<const Example> examples) {
  return mean_nll(make_moe_view(model), examples);
}

AblationVariant parse_ablation_variant(std::string_view tag) {
  if (tag == "a") return AblationVariant::a;
  if (tag == "b") return AblationVariant::b;
  if (tag == "c") return AblationVariant::c;
  if (tag == "d") return AblationVariant::d;
  throw config_error("unknown ablation variant '" + std::string(tag) + "' (expected a, b, c or d)");
}

std::string_view ablation_variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::a: return "a";
    case AblationVariant::b: return "b";
    case AblationVariant::c: return "c";
    case AblationVariant::d: return "d";
  }
  return "?";
}

MoEModel ablate_compose(AblationVariant variant, const Parameters& expert_s, const Parameters& expert_r,
                        const Parameters& base, const Parameters& discard, std::uint64_t router_seed) {
  MoEModel m;
  switch (variant) {
    case AblationVariant::a: m = compose(expert_s, base, router_seed); break;
    case AblationVariant::b: m = compose(expert_s, discard, router_seed); break;
    case AblationVariant::c: m = compose(base, expert_r, router_seed); break;
    case AblationVariant::d: m = compose(discard, expert_r, router_seed); break;
  }
  m.composition["ablation_variant"] = ablation_variant_name(variant);
  return m;
}

void save_moe_checkpoint(const MoEModel& model, const std::filesystem::path& path) {
  Checkpoint ck;
  ck.header = {{"kind", "moe"}, {"config", model_config_to_json(model.config)}, {"composition", model.composition}};
  ck.tensors = model.named_tensors();
  write_checkpoint(path, ck);
}

MoEModel load_moe_checkpoint(const std::filesystem::path& path) {
  using R = CheckpointError::Reason;
  Checkpoint ck = read_checkpoint(path);
  if (ck.header.value("kind", std::string{}) != "moe") {
    throw CheckpointError(R::malformed, path.string() + " is not an MoE checkpoint");
  }
  MoEModel m;
  m.config = model_config_from_json(ck.header.at("config"));
  m.composition = ck.header.value("composition", json::object());
  auto take = [&](const std::string& name, const std::vector<std::int64_t>& shape) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw CheckpointError(R::shape_mismatch, "MoE checkpoint lacks '" + name + "'");
    if (it->second.shape != shape) {
      throw CheckpointError(R::shape_mismatch, "shape mismatch for '" + name + "': " +
                                                   shape_string(it->second.shape) + " vs " + shape_string(shape));
    }
    Tensor t = std::move(it->second);
    ck.tensors.erase(it);
    return t;
  };
  for (const auto& [name, shape] : expected_shapes(m.config)) {
    if (!is_ffn_tensor(name)) m.shared.emplace(name, take("shared." + name, shape));
  }
  const std::int64_t d = m.config.d_model, f = m.config.d_ff;
  for (int l = 0; l < m.config.n_layers; ++l) {
    for (auto [prefix, set] : {std::pair{"ffn_s.", &m.ffn_s}, std::pair{"ffn_r.", &m.ffn_r}}) {
      const auto base = std::string(prefix) + layer_tag(l) + ".";
      set->push_back({take(base + "gate_proj", {f, d}), take(base + "up_proj", {f, d}),
                      take(base + "down_proj", {d, f})});
    }
    m.routers.push_back({take("router." + layer_tag(l) + ".W", {2, d}), take("router." + layer_tag(l) + ".b", {2})});
  }
  if (!ck.tensors.empty()) {
    throw CheckpointError(R::shape_mismatch, "MoE checkpoint has unexpected tensor '" + ck.tensors.begin()->first + "'");
  }
  return m;
}

}  // namespace eemp
