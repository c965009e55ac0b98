#include "tinyformer/network.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace eemp {
namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void rmsnorm_forward(const Tensor& x, const Tensor& scale, Tensor& y, std::vector<double>& inv_rms) {
  const auto T = x.dim(0), d = x.dim(1);
  y = Tensor({T, d});
  inv_rms.assign(static_cast<std::size_t>(T), 0.0);
  for (std::int64_t t = 0; t < T; ++t) {
    auto xr = x.row(t);
    double ss = 0.0;
    for (double v : xr) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + kRmsEpsilon);
    inv_rms[static_cast<std::size_t>(t)] = inv;
    auto yr = y.row(t);
    for (std::int64_t i = 0; i < d; ++i) yr[i] = xr[i] * inv * scale.data[i];
  }
}

// dx += d/dx, dscale += d/dscale for y = x * inv_rms * scale.
void rmsnorm_backward(const Tensor& x, const Tensor& scale, const std::vector<double>& inv_rms,
                      const Tensor& dy, Tensor& dx, Tensor* dscale) {
  const auto T = x.dim(0), d = x.dim(1);
  for (std::int64_t t = 0; t < T; ++t) {
    auto xr = x.row(t);
    auto dyr = dy.row(t);
    auto dxr = dx.row(t);
    const double inv = inv_rms[static_cast<std::size_t>(t)];
    double dot = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
      dot += scale.data[i] * dyr[i] * xr[i];
      if (dscale) dscale->data[i] += dyr[i] * xr[i] * inv;
    }
    const double coef = dot * inv * inv * inv / static_cast<double>(d);
    for (std::int64_t i = 0; i < d; ++i) dxr[i] += scale.data[i] * dyr[i] * inv - xr[i] * coef;
  }
}

void linear_forward(const LinearView& lin, const Tensor& x, Tensor& y, LinearCache* cache,
                    const ForwardOptions& options) {
  const Tensor& w = *lin.weight;
  const auto T = x.dim(0), in = x.dim(1), out = w.dim(0);
  y = Tensor({T, out});
  for (std::int64_t t = 0; t < T; ++t) {
    const double* xr = x.row(t).data();
    double* yr = y.row(t).data();
    for (std::int64_t o = 0; o < out; ++o) {
      const double* wr = w.row(o).data();
      double s = 0.0;
      for (std::int64_t i = 0; i < in; ++i) s += wr[i] * xr[i];
      yr[o] = s;
    }
  }
  if (!lin.lora) return;

  const LoraAdapter& ad = *lin.lora;
  const auto rank = ad.a.dim(0);
  Tensor mask;
  if (options.dropout_rng && ad.dropout > 0.0) {
    mask = Tensor({T, in});
    const double keep_scale = 1.0 / (1.0 - ad.dropout);
    for (auto& m : mask.data) m = options.dropout_rng->bernoulli(ad.dropout) ? 0.0 : keep_scale;
  }
  Tensor hidden({T, rank});
  std::vector<double> xin(static_cast<std::size_t>(in));
  for (std::int64_t t = 0; t < T; ++t) {
    auto xr = x.row(t);
    for (std::int64_t i = 0; i < in; ++i) xin[i] = mask.size() ? xr[i] * mask.at(t, i) : xr[i];
    auto hr = hidden.row(t);
    for (std::int64_t r = 0; r < rank; ++r) {
      auto ar = ad.a.row(r);
      double s = 0.0;
      for (std::int64_t i = 0; i < in; ++i) s += ar[i] * xin[i];
      hr[r] = s;
    }
    auto yr = y.row(t);
    for (std::int64_t o = 0; o < out; ++o) {
      auto br = ad.b.row(o);
      double s = 0.0;
      for (std::int64_t r = 0; r < rank; ++r) s += br[r] * hr[r];
      yr[o] += ad.scale * s;
    }
  }
  if (cache) {
    cache->lora_mask = std::move(mask);
    cache->lora_hidden = std::move(hidden);
  }
}

// dx may be null when the input gradient is not needed.
void linear_backward(const LinearView& lin, const Tensor& x, const LinearCache& cache, const Tensor& dy,
                     Tensor* dx, const LinearGrad& grad) {
  const Tensor& w = *lin.weight;
  const auto T = x.dim(0), in = x.dim(1), out = w.dim(0);
  for (std::int64_t t = 0; t < T; ++t) {
    const double* xr = x.row(t).data();
    const double* dyr = dy.row(t).data();
    double* dxr = dx ? dx->row(t).data() : nullptr;
    for (std::int64_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = w.row(o).data();
      if (dxr) {
        for (std::int64_t i = 0; i < in; ++i) dxr[i] += wr[i] * g;
      }
      if (grad.weight) {
        double* gw = grad.weight->row(o).data();
        for (std::int64_t i = 0; i < in; ++i) gw[i] += g * xr[i];
      }
    }
  }
  if (!lin.lora) return;

  const LoraAdapter& ad = *lin.lora;
  const auto rank = ad.a.dim(0);
  const bool masked = cache.lora_mask.size() > 0;
  std::vector<double> dh(static_cast<std::size_t>(rank));
  std::vector<double> xin(static_cast<std::size_t>(in));
  for (std::int64_t t = 0; t < T; ++t) {
    auto dyr = dy.row(t);
    auto hr = cache.lora_hidden.row(t);
    auto xr = x.row(t);
    for (std::int64_t i = 0; i < in; ++i) xin[i] = masked ? xr[i] * cache.lora_mask.at(t, i) : xr[i];
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::int64_t o = 0; o < out; ++o) {
      const double g = ad.scale * dyr[o];
      auto br = ad.b.row(o);
      for (std::int64_t r = 0; r < rank; ++r) {
        dh[r] += br[r] * g;
        if (grad.lora_b) grad.lora_b->at(o, r) += g * hr[r];
      }
    }
    for (std::int64_t r = 0; r < rank; ++r) {
      auto ar = ad.a.row(r);
      if (grad.lora_a) {
        auto gar = grad.lora_a->row(r);
        for (std::int64_t i = 0; i < in; ++i) gar[i] += dh[r] * xin[i];
      }
      if (dx) {
        auto dxr = dx->row(t);
        for (std::int64_t i = 0; i < in; ++i) {
          const double m = masked ? cache.lora_mask.at(t, i) : 1.0;
          dxr[i] += ar[i] * dh[r] * m;
        }
      }
    }
  }
}

void ffn_forward(const FfnView& ffn, const Tensor& x, FfnCache& c, const ForwardOptions& options) {
  linear_forward(ffn.gate, x, c.gate_pre, &c.gate_c, options);
  linear_forward(ffn.up, x, c.up, &c.up_c, options);
  c.hidden = Tensor(c.up.shape);
  for (std::size_t i = 0; i < c.hidden.data.size(); ++i) {
    const double g = c.gate_pre.data[i];
    c.hidden.data[i] = g * sigmoid(g) * c.up.data[i];
  }
  linear_forward(ffn.down, c.hidden, c.out, &c.down_c, options);
}

// dx += gradient w.r.t. the FFN input.
void ffn_backward(const FfnView& ffn, const Tensor& x, const FfnCache& c, const Tensor& dout, Tensor& dx,
                  const FfnGrad& grad) {
  Tensor dhidden(c.hidden.shape);
  linear_backward(ffn.down, c.hidden, c.down_c, dout, &dhidden, grad.down);
  Tensor dgate(c.gate_pre.shape), dup(c.up.shape);
  for (std::size_t i = 0; i < dhidden.data.size(); ++i) {
    const double g = c.gate_pre.data[i];
    const double s = sigmoid(g);
    const double silu = g * s;
    dup.data[i] = dhidden.data[i] * silu;
    dgate.data[i] = dhidden.data[i] * c.up.data[i] * s * (1.0 + g * (1.0 - s));
  }
  linear_backward(ffn.gate, x, c.gate_c, dgate, &dx, grad.gate);
  linear_backward(ffn.up, x, c.up_c, dup, &dx, grad.up);
}

void attention_forward(const ModelConfig& cfg, BlockCache& c) {
  const auto T = c.q.dim(0);
  const int H = cfg.n_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.probs = Tensor({H, T, T});
  c.attn_ctx = Tensor({T, cfg.d_model});
  for (int h = 0; h < H; ++h) {
    const int off = h * dh;
    for (std::int64_t t = 0; t < T; ++t) {
      double* p = &c.probs.data[static_cast<std::size_t>((h * T + t) * T)];
      const double* qt = c.q.row(t).data() + off;
      double mx = -INFINITY;
      for (std::int64_t u = 0; u <= t; ++u) {
        const double* ku = c.k.row(u).data() + off;
        double s = 0.0;
        for (int i = 0; i < dh; ++i) s += qt[i] * ku[i];
        p[u] = s * scale;
        mx = std::max(mx, p[u]);
      }
      double z = 0.0;
      for (std::int64_t u = 0; u <= t; ++u) {
        p[u] = std::exp(p[u] - mx);
        z += p[u];
      }
      double* ctx = c.attn_ctx.row(t).data() + off;
      for (std::int64_t u = 0; u <= t; ++u) {
        p[u] /= z;
        const double* vu = c.v.row(u).data() + off;
        for (int i = 0; i < dh; ++i) ctx[i] += p[u] * vu[i];
      }
    }
  }
}

void attention_backward(const ModelConfig& cfg, const BlockCache& c, const Tensor& dctx, Tensor& dq,
                        Tensor& dk, Tensor& dv) {
  const auto T = c.q.dim(0);
  const int H = cfg.n_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> dp(static_cast<std::size_t>(T));
  for (int h = 0; h < H; ++h) {
    const int off = h * dh;
    for (std::int64_t t = 0; t < T; ++t) {
      const double* p = &c.probs.data[static_cast<std::size_t>((h * T + t) * T)];
      const double* dct = dctx.row(t).data() + off;
      double weighted = 0.0;
      for (std::int64_t u = 0; u <= t; ++u) {
        const double* vu = c.v.row(u).data() + off;
        double* dvu = dv.row(u).data() + off;
        double s = 0.0;
        for (int i = 0; i < dh; ++i) {
          s += dct[i] * vu[i];
          dvu[i] += p[u] * dct[i];
        }
        dp[u] = s;
        weighted += p[u] * s;
      }
      const double* qt = c.q.row(t).data() + off;
      double* dqt = dq.row(t).data() + off;
      for (std::int64_t u = 0; u <= t; ++u) {
        const double ds = p[u] * (dp[u] - weighted) * scale;
        if (ds == 0.0) continue;
        const double* ku = c.k.row(u).data() + off;
        double* dku = dk.row(u).data() + off;
        for (int i = 0; i < dh; ++i) {
          dqt[i] += ds * ku[i];
          dku[i] += ds * qt[i];
        }
      }
    }
  }
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

double router_gate_value(const RouterView& router, std::span<const double> x) {
  double l0 = router.bias->data[0], l1 = router.bias->data[1];
  auto w0 = router.weight->row(0), w1 = router.weight->row(1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    l0 += w0[i] * x[i];
    l1 += w1[i] * x[i];
  }
  // softmax over two logits, component 0
  return sigmoid(l0 - l1);
}

std::vector<double> ffn_apply(const FfnView& ffn, std::span<const double> x) {
  Tensor in({1, static_cast<std::int64_t>(x.size())});
  std::copy(x.begin(), x.end(), in.data.begin());
  FfnCache c;
  FfnView plain{{ffn.gate.weight, nullptr}, {ffn.up.weight, nullptr}, {ffn.down.weight, nullptr}};
  ffn_forward(plain, in, c, {});
  return c.out.data;
}

Tensor network_forward(const NetworkView& net, std::span<const int> tokens, SequenceCache* cache,
                       const ForwardOptions& options) {
  const ModelConfig& cfg = net.config;
  const auto T = static_cast<std::int64_t>(tokens.size());
  if (T > cfg.max_seq) {
    throw config_error("sequence of " + std::to_string(T) + " tokens exceeds max_seq " +
                       std::to_string(cfg.max_seq));
  }
  const std::int64_t d = cfg.d_model;

  SequenceCache local;
  SequenceCache& c = cache ? *cache : local;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.blocks.assign(net.blocks.size(), BlockCache{});

  Tensor x({T, d});
  for (std::int64_t t = 0; t < T; ++t) {
    const int tok = tokens[static_cast<std::size_t>(t)];
    if (tok < 0 || tok >= cfg.vocab_size) throw config_error("token id out of vocabulary");
    auto xr = x.row(t);
    auto er = net.tok_emb->row(tok);
    auto pr = net.pos_emb->row(t);
    for (std::int64_t i = 0; i < d; ++i) xr[i] = er[i] + pr[i];
  }

  for (std::size_t l = 0; l < net.blocks.size(); ++l) {
    const BlockView& b = net.blocks[l];
    BlockCache& bc = c.blocks[l];
    bc.input = x;
    rmsnorm_forward(bc.input, *b.attn_norm, bc.normed1, bc.inv_rms1);
    linear_forward(b.q, bc.normed1, bc.q, &bc.q_c, options);
    linear_forward(b.k, bc.normed1, bc.k, &bc.k_c, options);
    linear_forward(b.v, bc.normed1, bc.v, &bc.v_c, options);
    attention_forward(cfg, bc);
    Tensor attn_out;
    linear_forward(b.o, bc.attn_ctx, attn_out, &bc.o_c, options);
    bc.mid = bc.input;
    add_into(bc.mid, attn_out);

    rmsnorm_forward(bc.mid, *b.ffn_norm, bc.normed2, bc.inv_rms2);
    bc.experts.assign(b.experts.size(), FfnCache{});
    for (std::size_t e = 0; e < b.experts.size(); ++e) {
      ffn_forward(b.experts[e], bc.normed2, bc.experts[e], options);
    }
    if (b.experts.size() == 1) {
      bc.ffn_out = bc.experts[0].out;
    } else {
      bc.ffn_out = Tensor({T, d});
      bc.gates.assign(static_cast<std::size_t>(T), 0.0);
      for (std::int64_t t = 0; t < T; ++t) {
        const double g = router_gate_value(b.router, bc.normed2.row(t));
        bc.gates[static_cast<std::size_t>(t)] = g;
        auto fs = bc.experts[0].out.row(t), fr = bc.experts[1].out.row(t);
        auto out = bc.ffn_out.row(t);
        for (std::int64_t i = 0; i < d; ++i) out[i] = g * fs[i] + (1.0 - g) * fr[i];
      }
    }
    x = bc.mid;
    add_into(x, bc.ffn_out);
  }

  c.final_input = x;
  rmsnorm_forward(c.final_input, *net.final_norm, c.final_normed, c.inv_rms_final);
  Tensor logits;
  linear_forward(LinearView{net.lm_head, nullptr}, c.final_normed, logits, nullptr, options);
  return logits;
}

void network_backward(const NetworkView& net, const SequenceCache& c, const Tensor& dlogits,
                      NetworkGrad& grad) {
  const ModelConfig& cfg = net.config;
  const auto T = static_cast<std::int64_t>(c.tokens.size());
  const std::int64_t d = cfg.d_model;

  Tensor dz({T, d});
  linear_backward(LinearView{net.lm_head, nullptr}, c.final_normed, LinearCache{}, dlogits, &dz,
                  LinearGrad{grad.lm_head});
  Tensor dx({T, d});
  rmsnorm_backward(c.final_input, *net.final_norm, c.inv_rms_final, dz, dx, grad.final_norm);

  for (std::size_t li = net.blocks.size(); li-- > 0;) {
    const BlockView& b = net.blocks[li];
    const BlockCache& bc = c.blocks[li];
    BlockGrad empty_grad;
    const BlockGrad& bg = li < grad.blocks.size() ? grad.blocks[li] : empty_grad;
    auto expert_grad = [&](std::size_t e) {
      return e < bg.experts.size() ? bg.experts[e] : FfnGrad{};
    };

    // x_out = mid + ffn(norm2(mid))
    Tensor dmid = dx;
    Tensor dnormed2({T, d});
    if (b.experts.size() == 1) {
      ffn_backward(b.experts[0], bc.normed2, bc.experts[0], dx, dnormed2, expert_grad(0));
    } else {
      Tensor dfs({T, d}), dfr({T, d});
      for (std::int64_t t = 0; t < T; ++t) {
        const double g = bc.gates[static_cast<std::size_t>(t)];
        auto dxr = dx.row(t);
        auto fs = bc.experts[0].out.row(t), fr = bc.experts[1].out.row(t);
        auto dsr = dfs.row(t), drr = dfr.row(t);
        double dg = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
          dsr[i] = g * dxr[i];
          drr[i] = (1.0 - g) * dxr[i];
          dg += dxr[i] * (fs[i] - fr[i]);
        }
        // g = sigmoid(l0 - l1)
        const double dl0 = dg * g * (1.0 - g);
        const double dl1 = -dl0;
        auto xr = bc.normed2.row(t);
        auto dnr = dnormed2.row(t);
        auto w0 = b.router.weight->row(0), w1 = b.router.weight->row(1);
        for (std::int64_t i = 0; i < d; ++i) dnr[i] += w0[i] * dl0 + w1[i] * dl1;
        if (bg.router.weight) {
          auto gw0 = bg.router.weight->row(0), gw1 = bg.router.weight->row(1);
          for (std::int64_t i = 0; i < d; ++i) {
            gw0[i] += dl0 * xr[i];
            gw1[i] += dl1 * xr[i];
          }
        }
        if (bg.router.bias) {
          bg.router.bias->data[0] += dl0;
          bg.router.bias->data[1] += dl1;
        }
      }
      ffn_backward(b.experts[0], bc.normed2, bc.experts[0], dfs, dnormed2, expert_grad(0));
      ffn_backward(b.experts[1], bc.normed2, bc.experts[1], dfr, dnormed2, expert_grad(1));
    }
    rmsnorm_backward(bc.mid, *b.ffn_norm, bc.inv_rms2, dnormed2, dmid, bg.ffn_norm);

    // mid = input + o(attn(norm1(input)))
    Tensor dctx({T, d});
    linear_backward(b.o, bc.attn_ctx, bc.o_c, dmid, &dctx, bg.o);
    Tensor dq({T, d}), dk({T, d}), dv({T, d});
    attention_backward(cfg, bc, dctx, dq, dk, dv);
    Tensor dnormed1({T, d});
    linear_backward(b.q, bc.normed1, bc.q_c, dq, &dnormed1, bg.q);
    linear_backward(b.k, bc.normed1, bc.k_c, dk, &dnormed1, bg.k);
    linear_backward(b.v, bc.normed1, bc.v_c, dv, &dnormed1, bg.v);
    Tensor dinput = dmid;
    rmsnorm_backward(bc.input, *b.attn_norm, bc.inv_rms1, dnormed1, dinput, bg.attn_norm);
    dx = std::move(dinput);
  }

  for (std::int64_t t = 0; t < T; ++t) {
    auto dxr = dx.row(t);
    if (grad.tok_emb) {
      auto g = grad.tok_emb->row(c.tokens[static_cast<std::size_t>(t)]);
      for (std::int64_t i = 0; i < d; ++i) g[i] += dxr[i];
    }
    if (grad.pos_emb) {
      auto g = grad.pos_emb->row(t);
      for (std::int64_t i = 0; i < d; ++i) g[i] += dxr[i];
    }
  }
}

}  // namespace eemp
