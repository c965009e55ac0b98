// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero when any criterion fails.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "common/rng.hpp"
#include "corpus/corpus.hpp"
#include "metrics/metrics.hpp"
#include "moe/moe.hpp"
#include "pipeline/synthetic.hpp"
#include "scorer/scorer.hpp"
#include "selection/selection.hpp"
#include "tinyformer/checkpoint.hpp"
#include "tinyformer/lora.hpp"
#include "tinyformer/training.hpp"

using namespace eemp;

namespace {

enum class Outcome { pass, fail, skip };

struct Result {
  Outcome outcome;
  std::string detail;
};

Result pass(std::string d) { return {Outcome::pass, std::move(d)}; }
Result fail(std::string d) { return {Outcome::fail, std::move(d)}; }
Result check(bool ok, std::string d) { return {ok ? Outcome::pass : Outcome::fail, std::move(d)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// ---- partition oracle -------------------------------------------------------

std::string literal_subset(int s, int r, int t) {
  const bool in_s = r < t && s > t;
  const bool in_d = r > t && s < t;
  if (in_s) return "sensibility";
  if (in_d) return "discard";
  return "rationality";
}

Result partition_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::vector<ScoreRecord> records;
  for (int i = 0; i < 1000; ++i) {
    records.push_back({"r" + std::to_string(i), static_cast<int>(rng.below(11)), static_cast<int>(rng.below(11)), "", ""});
  }
  for (int t = 0; t <= 10; ++t) {
    const auto p = partition(records, SelectionConfig{t});
    std::map<std::string, std::vector<std::string>> expected;
    for (const auto& r : records) expected[literal_subset(r.sensibility, r.rationality, t)].push_back(r.dialogue_id);
    if (p.sensibility_ids != expected["sensibility"] || p.discard_ids != expected["discard"] ||
        p.rationality_ids != expected["rationality"]) {
      return fail(fmt::format("membership differs at T={}", t));
    }
    if (p.sensibility_ids.size() + p.discard_ids.size() + p.rationality_ids.size() != records.size() ||
        p.total_instances != records.size()) {
      return fail(fmt::format("not a disjoint cover at T={}", t));
    }
  }
  const double secs = seconds_since(t0);
  return check(secs < 1.0, fmt::format("1000 records x 11 thresholds exact, {:.3f}s", secs));
}

// ---- data-conditional selection check --------------------------------------

Result ed_selection() {
  const char* scored = std::getenv("EEMP_ED_SCORED");
  const char* corpus = std::getenv("EEMP_ED_CORPUS");
  if (!scored || !corpus || !std::filesystem::exists(scored) || !std::filesystem::exists(corpus)) {
    return {Outcome::skip, "set EEMP_ED_SCORED and EEMP_ED_CORPUS to a scored EmpatheticDialogues corpus"};
  }
  const auto records = load_score_records(scored);
  const auto counts = count_instances(load_corpus(corpus));
  struct Row {
    int t;
    std::size_t instances;
    double percent;
  };
  std::string detail;
  bool ok = true;
  for (const Row& row : {Row{5, 23862, 59.0}, Row{4, 21034, 52.0}, Row{6, 24776, 62.0}}) {
    const auto p = partition(records, SelectionConfig{row.t}, &counts);
    const auto& st = p.stat(Subset::sensibility);
    const auto& rt = p.stat(Subset::rationality);
    // The reported selection is D_s plus D_r, the data the experts train on.
    const std::size_t selected = st.instances + rt.instances;
    const double pct = st.percent + rt.percent;
    ok &= selected == row.instances && std::abs(pct - row.percent) <= 0.5;
    detail += fmt::format("T={}: {} ({:.1f}%) ", row.t, selected, pct);
  }
  const auto cell = histogram2d(records).counts[2][8];
  ok &= cell == 8603;
  detail += fmt::format("cell[R=2][S=8]={}", cell);
  return check(ok, detail);
}

// ---- gradient verification ---------------------------------------------------

Tensor& moe_tensor(MoEModel& m, const std::string& name) {
  auto layer_of = [&](std::size_t prefix_len) {
    const auto dot = name.find('.', prefix_len);
    return std::make_pair(std::stoi(name.substr(prefix_len, dot - prefix_len)), name.substr(dot + 1));
  };
  if (name.starts_with("shared.")) return m.shared.at(name.substr(7));
  if (name.starts_with("router.L")) {
    auto [l, field] = layer_of(8);
    return field == "W" ? m.routers[l].weight : m.routers[l].bias;
  }
  const bool s = name.starts_with("ffn_s.L");
  auto [l, field] = layer_of(7);
  ExpertFfn& f = s ? m.ffn_s[l] : m.ffn_r[l];
  if (field == "gate_proj") return f.gate_proj;
  if (field == "up_proj") return f.up_proj;
  return f.down_proj;
}

Result gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig mc;
  mc.d_model = 16;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_ff = 32;
  mc.max_seq = 16;
  mc.seed = 17;
  auto s = init_parameters(mc);
  mc.seed = 18;
  auto r = init_parameters(mc);
  MoEModel model = compose(s, r, 19);
  // Larger router weights so the gates sit away from 0.5 and their gradients are not tiny.
  Rng rng(20);
  for (auto& rt : model.routers) {
    for (auto& v : rt.weight.data) v = rng.normal(0.0, 0.5);
    for (auto& v : rt.bias.data) v = rng.normal(0.0, 0.5);
  }

  std::vector<Instance> batch;
  for (int i = 0; i < 4; ++i) {
    std::string ctx, tgt;
    const auto lc = 1 + rng.below(5), lt = 1 + rng.below(4);
    for (std::uint64_t k = 0; k < lc; ++k) ctx += static_cast<char>('a' + rng.below(26));
    for (std::uint64_t k = 0; k < lt; ++k) tgt += static_cast<char>('a' + rng.below(26));
    batch.push_back({"g" + std::to_string(i), {{Role::speaker, ctx}}, tgt});
  }
  const auto examples = make_examples(batch, mc);
  const auto grads = moe_backward(model, examples);

  const double h = 1e-4;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (const auto& [name, g] : grads.tensors) {
    Tensor& w = moe_tensor(model, name);
    Tensor fd(g.shape, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w.data[i];
      w.data[i] = orig + h;
      const double up = moe_mean_nll(model, examples);
      w.data[i] = orig - h;
      const double down = moe_mean_nll(model, examples);
      w.data[i] = orig;
      fd.data[i] = (up - down) / (2.0 * h);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      num += (g.data[i] - fd.data[i]) * (g.data[i] - fd.data[i]);
      den += g.data[i] * g.data[i] + fd.data[i] * fd.data[i];
    }
    const double rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    if (rel > worst) worst = rel, worst_name = name;
    checked += g.size();
  }
  const double secs = seconds_since(t0);
  return check(worst <= 1e-4 && secs < 60.0,
               fmt::format("{} tensors / {} entries, max rel err {:.2e} ({}), {:.1f}s", grads.tensors.size(), checked,
                           worst, worst_name, secs));
}

// ---- MoE identity, hard routing, freeze ---------------------------------------

Result moe_identity() {
  ModelConfig mc;
  mc.d_model = 32;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.d_ff = 64;
  mc.max_seq = 24;
  mc.seed = 31;
  const auto m = init_parameters(mc);
  const std::vector<int> tokens{kBosToken, kSpeakerToken, 'h', 'e', 'y', kListenerToken, 'o', 'k'};

  double identity = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto moe = compose(m, m, seed);
    for (auto& r : moe.routers)
      for (auto& v : r.weight.data) v *= 100.0;
    identity = std::max(identity, max_abs_diff(moe_forward(moe, tokens), forward(m, tokens)));
  }

  Parameters s = m, r = m;
  mc.seed = 32;
  const auto other1 = init_parameters(mc);
  mc.seed = 33;
  const auto other2 = init_parameters(mc);
  for (auto& [name, t] : s.tensors)
    if (is_ffn_tensor(name)) t = other1.at(name);
  for (auto& [name, t] : r.tensors)
    if (is_ffn_tensor(name)) t = other2.at(name);
  auto moe = compose(s, r, 4);
  auto saturate = [&](double b) {
    for (auto& rt : moe.routers) {
      rt.weight.zero();
      rt.bias.data = {b, -b};
    }
  };
  saturate(40.0);
  const double hard_s = max_abs_diff(moe_forward(moe, tokens), forward(s, tokens));
  saturate(-40.0);
  const double hard_r = max_abs_diff(moe_forward(moe, tokens), forward(r, tokens));

  const auto trainee = compose(s, r, 4);
  std::vector<Instance> data;
  for (const std::string w : {"abc", "bca", "012", "210", "hello"}) data.push_back({"f", {{Role::speaker, w}}, w});
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.learning_rate = 0.01;
  const auto trained = train_router_stage2(trainee, data, tc);
  const bool frozen = trained.shared == trainee.shared && trained.ffn_s == trainee.ffn_s && trained.ffn_r == trainee.ffn_r;
  bool routers_moved = true;
  for (std::size_t l = 0; l < trained.routers.size(); ++l)
    routers_moved &= !(trained.routers[l] == trainee.routers[l]);

  return check(identity <= 1e-6 && hard_s <= 1e-6 && hard_r <= 1e-6 && frozen && routers_moved,
               fmt::format("identity {:.1e}, hard->s {:.1e}, hard->r {:.1e}, non-router tensors {}, routers {}",
                           identity, hard_s, hard_r, frozen ? "bitwise equal" : "CHANGED",
                           routers_moved ? "updated" : "NOT updated"));
}

// ---- specialization experiment -------------------------------------------------

std::vector<Instance> of_kind(const std::vector<Dialogue>& ds, SynthKind k) {
  std::vector<Dialogue> sel;
  for (const auto& d : ds)
    if (classify_synthetic(d) == k) sel.push_back(d);
  return expand_instances(sel);
}

Result specialization() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticConfig sc;
  sc.copy = 500;
  sc.reverse = 500;
  sc.noise = 100;
  sc.seed = 11;
  sc.noise_alphabet = std::string(kDisjointNoiseAlphabet);
  const auto train = make_synthetic_corpus(sc);
  SyntheticConfig held;
  held.copy = 100;
  held.reverse = 100;
  held.seed = 12;
  held.id_prefix = "test";
  const auto test = expand_instances(make_synthetic_corpus(held));

  ModelConfig mc;
  mc.d_model = 32;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.d_ff = 64;
  mc.max_seq = 24;
  mc.seed = 3;
  const auto all = expand_instances(train);

  TrainConfig base_tc;
  base_tc.epochs = 3;
  base_tc.seed = 5;
  const Parameters base = train_sft(init_parameters(mc), all, base_tc);

  TrainConfig expert_tc = base_tc;
  expert_tc.epochs = 20;
  expert_tc.learning_rate = 0.003;
  LoraConfig lora;
  lora.target_modules = kFfnProjections;
  const auto expert_s = train_sft(base, of_kind(train, SynthKind::copy), expert_tc, lora);
  const auto expert_r = train_sft(base, of_kind(train, SynthKind::reverse), expert_tc, lora);
  const auto discard = train_sft(base, of_kind(train, SynthKind::noise), expert_tc, lora);

  TrainConfig router_tc = base_tc;
  router_tc.epochs = 5;
  router_tc.learning_rate = 0.01;
  const auto examples = make_examples(test, mc);
  const double nll_s = mean_nll(expert_s, examples);
  const double nll_r = mean_nll(expert_r, examples);
  const double nll_moe = moe_mean_nll(train_router_stage2(compose(expert_s, expert_r, 9), all, router_tc), examples);

  bool ok = nll_moe < nll_s && nll_moe < nll_r;
  std::string detail = fmt::format("held-out NLL: expert_s {:.4f}, expert_r {:.4f}, MoE {:.4f}", nll_s, nll_r, nll_moe);
  for (auto v : {AblationVariant::a, AblationVariant::b, AblationVariant::c, AblationVariant::d}) {
    const auto m = train_router_stage2(ablate_compose(v, expert_s, expert_r, base, discard, 9), all, router_tc);
    const double nll = moe_mean_nll(m, examples);
    ok &= nll >= nll_moe;
    detail += fmt::format(", ({}) {:.4f}", ablation_variant_name(v), nll);
  }
  const double secs = seconds_since(t0);
  ok &= secs < 600.0;
  return check(ok, detail + fmt::format(", {:.1f}s", secs));
}

// ---- data-efficiency analogue ----------------------------------------------------

Result data_efficiency() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticConfig sc;
  sc.copy = 300;
  sc.reverse = 0;
  sc.noise = 200;
  sc.seed = 21;
  const auto corpus = make_synthetic_corpus(sc);

  ScorerConfig scorer;
  auto judge = make_function_backend([](const std::string&, const Dialogue& d) { return synthetic_judge_reply(d); },
                                     "synthetic");
  const auto records = score_corpus(scorer, corpus, *judge);
  const auto part = partition(records, SelectionConfig{5});
  const std::set<std::string> clean_ids(part.sensibility_ids.begin(), part.sensibility_ids.end());
  std::size_t flagged_noise = 0, noise_total = 0;
  std::vector<Dialogue> clean;
  for (const auto& d : corpus) {
    const bool is_noise = classify_synthetic(d) == SynthKind::noise;
    noise_total += is_noise;
    if (clean_ids.count(d.id)) {
      clean.push_back(d);
    } else {
      flagged_noise += is_noise;
    }
  }

  SyntheticConfig held;
  held.copy = 150;
  held.reverse = 0;
  held.seed = 22;
  held.id_prefix = "test";
  const auto test = expand_instances(make_synthetic_corpus(held));

  ModelConfig mc;
  mc.d_model = 32;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.d_ff = 64;
  mc.max_seq = 24;
  mc.seed = 7;
  TrainConfig tc;
  tc.epochs = 8;
  tc.seed = 8;
  const auto seed_model = init_parameters(mc);
  const auto selected_model = train_sft(seed_model, expand_instances(clean), tc);
  const auto full_model = train_sft(seed_model, expand_instances(corpus), tc);
  const auto examples = make_examples(test, mc);
  const double nll_sel = mean_nll(selected_model, examples);
  const double nll_full = mean_nll(full_model, examples);
  const double noise_share = 100.0 * static_cast<double>(noise_total) / static_cast<double>(corpus.size());
  const double secs = seconds_since(t0);
  return check(nll_sel <= nll_full && flagged_noise == noise_total && secs < 300.0,
               fmt::format("{:.0f}% noise, {}/{} flagged; held-out NLL selected {:.4f} vs full {:.4f}, {:.1f}s",
                           noise_share, flagged_noise, noise_total, nll_sel, nll_full, secs));
}

// ---- metrics oracle ----------------------------------------------------------------

using Words = std::vector<std::string>;

std::vector<Words> grams(const Words& w, int n) {
  std::vector<Words> out;
  for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) out.emplace_back(w.begin() + i, w.begin() + i + n);
  return out;
}

std::size_t clipped(std::vector<Words> hyp, std::vector<Words> ref) {
  std::size_t m = 0;
  for (const auto& g : hyp) {
    auto it = std::find(ref.begin(), ref.end(), g);
    if (it != ref.end()) {
      ref.erase(it);
      ++m;
    }
  }
  return m;
}

struct OraclePair {
  Words hyp, ref;
};

double oracle_bleu(const std::vector<OraclePair>& c, int n) {
  double hl = 0, rl = 0, log_sum = 0;
  for (const auto& p : c) hl += p.hyp.size(), rl += p.ref.size();
  for (int k = 1; k <= n; ++k) {
    double m = 0, t = 0;
    for (const auto& p : c) {
      const auto g = grams(p.hyp, k);
      m += clipped(g, grams(p.ref, k));
      t += g.size();
    }
    if (m == 0 || t == 0) return 0.0;
    log_sum += std::log(m / t);
  }
  return 100.0 * (hl < rl ? std::exp(1 - rl / hl) : 1.0) * std::exp(log_sum / n);
}

double oracle_rouge(const std::vector<OraclePair>& c, int n) {
  double sum = 0;
  for (const auto& p : c) {
    const auto h = grams(p.hyp, n), r = grams(p.ref, n);
    const double m = clipped(h, r);
    if (m == 0) continue;
    const double pr = m / h.size(), rc = m / r.size();
    sum += 2 * pr * rc / (pr + rc);
  }
  return 100.0 * sum / c.size();
}

double oracle_distinct(const std::vector<OraclePair>& c, int n) {
  std::vector<Words> all, uniq;
  for (const auto& p : c)
    for (auto& g : grams(p.hyp, n)) all.push_back(g);
  for (const auto& g : all)
    if (std::find(uniq.begin(), uniq.end(), g) == uniq.end()) uniq.push_back(g);
  return all.empty() ? -1.0 : 100.0 * uniq.size() / all.size();
}

std::string join(const Words& w) {
  std::string s;
  for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
  return s;
}

// Compares every metric on one corpus; returns false on the first mismatch.
bool metrics_agree(const std::vector<OraclePair>& c, std::string& why) {
  std::vector<EvalPair> pairs;
  std::vector<std::string> hyps;
  for (std::size_t i = 0; i < c.size(); ++i) {
    pairs.push_back({std::to_string(i), join(c[i].hyp), join(c[i].ref)});
    hyps.push_back(pairs.back().hypothesis);
  }
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
  for (int n = 1; n <= 4; ++n) {
    if (!close(corpus_bleu(pairs, n), oracle_bleu(c, n))) return why = fmt::format("BLEU-{}", n), false;
  }
  for (int n = 1; n <= 2; ++n) {
    if (!close(rouge_n(pairs, n), oracle_rouge(c, n))) return why = fmt::format("ROUGE-{}", n), false;
    const double od = oracle_distinct(c, n);
    if (od < 0) {
      try {
        distinct_n(hyps, n);
        return why = fmt::format("Dist-{} defined without n-grams", n), false;
      } catch (const Error&) {
      }
    } else if (!close(distinct_n(hyps, n), od)) {
      return why = fmt::format("Dist-{}", n), false;
    }
  }
  return true;
}

Result metrics_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const Words alphabet{"w", "x", "y", "z"};
  // All sentences over the alphabet up to a given length.
  auto sentences = [&](int max_len) {
    std::vector<Words> out{{}};
    std::vector<Words> frontier{{}};
    for (int len = 1; len <= max_len; ++len) {
      std::vector<Words> next;
      for (const auto& s : frontier)
        for (const auto& a : alphabet) {
          Words w = s;
          w.push_back(a);
          next.push_back(w);
        }
      out.insert(out.end(), next.begin(), next.end());
      frontier = std::move(next);
    }
    return out;
  };

  std::size_t corpora = 0;
  std::string why;
  // Exhaustive tier 1: every single-pair corpus with sentences up to 4 tokens.
  const auto s4 = sentences(4);
  for (const auto& h : s4)
    for (const auto& r : s4) {
      ++corpora;
      if (!metrics_agree({{h, r}}, why)) return fail("single pair '" + join(h) + "' / '" + join(r) + "': " + why);
    }
  // Exhaustive tier 2: every two-pair corpus with sentences up to 2 tokens.
  const auto s2 = sentences(2);
  for (const auto& h1 : s2)
    for (const auto& r1 : s2)
      for (const auto& h2 : s2)
        for (const auto& r2 : s2) {
          ++corpora;
          if (!metrics_agree({{h1, r1}, {h2, r2}}, why)) return fail("two-pair corpus: " + why);
        }
  // Randomized tier: up to 5 pairs of up to 8 tokens.
  Rng rng(77);
  for (int trial = 0; trial < 20000; ++trial) {
    std::vector<OraclePair> c(1 + rng.below(5));
    for (auto& p : c) {
      for (auto* w : {&p.hyp, &p.ref}) {
        const auto len = rng.below(9);
        for (std::uint64_t i = 0; i < len; ++i) w->push_back(alphabet[rng.below(4)]);
      }
    }
    ++corpora;
    if (!metrics_agree(c, why)) return fail("random corpus: " + why);
  }

  // Identity corpora.
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EvalPair> pairs;
    const auto n = 1 + rng.below(5);
    for (std::uint64_t i = 0; i < n; ++i) {
      Words w;
      const auto len = 4 + rng.below(5);
      for (std::uint64_t k = 0; k < len; ++k) w.push_back(alphabet[rng.below(4)]);
      pairs.push_back({std::to_string(i), join(w), join(w)});
    }
    for (int k = 1; k <= 4; ++k)
      if (std::abs(corpus_bleu(pairs, k) - 100.0) > 1e-9) return fail("identity BLEU below 100");
    for (int k = 1; k <= 2; ++k)
      if (std::abs(rouge_n(pairs, k) - 100.0) > 1e-9) return fail("identity ROUGE below 100");
  }

  const std::vector<EvalPair> b{{"1", "the cat sat", "the cat sat down"}};
  const std::vector<EvalPair> r{{"1", "the cat", "the cat sat"}};
  const std::vector<std::string> d{"a a a"};
  const double b1 = corpus_bleu(b, 1), r1 = rouge_n(r, 1), d1 = distinct_n(d, 1);
  const bool hand = std::abs(b1 - 71.65) <= 0.01 && std::abs(r1 - 80.00) <= 0.01 && std::abs(d1 - 33.33) <= 0.01;
  return check(hand, fmt::format("{} corpora match the oracle; B-1 {:.2f}, R-1 {:.2f}, Dist-1 {:.2f}, {:.1f}s", corpora,
                                 b1, r1, d1, seconds_since(t0)));
}

// ---- LoRA ---------------------------------------------------------------------------

Result lora_checks() {
  ModelConfig mc;
  mc.d_model = 32;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.d_ff = 64;
  mc.max_seq = 24;
  mc.seed = 41;
  const auto base = init_parameters(mc);
  Rng rng(42);
  double noop = 0.0, merge = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> tokens{kBosToken};
    const auto len = 2 + rng.below(20);
    for (std::uint64_t i = 0; i < len; ++i) tokens.push_back(static_cast<int>(rng.below(kByteVocabSize)));
    auto m = lora_attach(base, LoraConfig{}, 100 + trial);
    noop = std::max(noop, max_abs_diff(lora_forward(m, tokens), forward(base, tokens)));
    for (auto& [name, ad] : m.adapters)
      for (auto& v : ad.b.data) v = rng.normal(0.0, 0.05);
    merge = std::max(merge, max_abs_diff(lora_forward(m, tokens), forward(lora_merge(m), tokens)));
  }
  const auto m = lora_attach(base, LoraConfig{}, 1);
  // Per layer: four d x d projections and three d <-> d_ff projections, each with A [8, in] and B [out, 8].
  const std::size_t expected = 2 * (4 * (8 * 32 + 32 * 8) + 2 * (8 * 32 + 64 * 8) + (8 * 64 + 32 * 8));
  const std::size_t count = lora_parameter_count(m);
  const auto& q = m.adapters.at("layers.0.q_proj");
  const bool shapes = q.a.shape == std::vector<std::int64_t>{8, 32} && q.b.shape == std::vector<std::int64_t>{32, 8};
  return check(noop <= 1e-12 && merge <= 1e-6 && count == expected && shapes,
               fmt::format("no-op {:.1e}, merge {:.1e}, {} adapter parameters (expected {})", noop, merge, count,
                           expected));
}

// ---- checkpoints ------------------------------------------------------------------------

Result checkpoint_checks() {
  ModelConfig mc;
  mc.d_model = 16;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_ff = 24;
  mc.max_seq = 16;
  mc.seed = 51;
  const auto dir = std::filesystem::temp_directory_path() / ("eemp-acceptance-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto params = init_parameters(mc);
  save_checkpoint(params, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded, dir / "b.ckpt");
  const bool bytes_equal = read_text_file(dir / "a.ckpt") == read_text_file(dir / "b.ckpt");
  auto rounded = params;
  round_to_f32(rounded.tensors);
  const bool values_equal = loaded == rounded;

  const auto moe = compose(params, init_parameters(mc), 3);
  save_moe_checkpoint(moe, dir / "m.ckpt");
  save_moe_checkpoint(load_moe_checkpoint(dir / "m.ckpt"), dir / "m2.ckpt");
  const bool moe_equal = read_text_file(dir / "m.ckpt") == read_text_file(dir / "m2.ckpt");

  const std::string good = read_text_file(dir / "a.ckpt");
  using R = CheckpointError::Reason;
  auto reason = [](std::string_view bytes) -> std::optional<R> {
    try {
      decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
      return e.reason();
    }
    return std::nullopt;
  };
  std::string magic = good, version = good;
  magic[1] = 'X';
  version[4] = 9;
  bool taxonomy = reason(magic) == R::bad_magic && reason(version) == R::version_mismatch &&
                  reason(good.substr(0, good.size() - 3)) == R::truncated && reason(good.substr(0, 10)) == R::truncated;
  ModelConfig wrong = mc;
  wrong.d_ff = 20;
  Checkpoint ck{{{"kind", "model"}, {"config", model_config_to_json(wrong)}}, params.tensors};
  write_checkpoint(dir / "w.ckpt", ck);
  try {
    load_checkpoint(dir / "w.ckpt");
    taxonomy = false;
  } catch (const CheckpointError& e) {
    taxonomy &= e.reason() == R::shape_mismatch;
  }
  std::filesystem::remove_all(dir);
  return check(bytes_equal && values_equal && moe_equal && taxonomy,
               fmt::format("dense re-save {}, f32 values {}, MoE re-save {}, error taxonomy {}",
                           bytes_equal ? "byte-identical" : "DIFFERS", values_equal ? "exact" : "DIFFER",
                           moe_equal ? "byte-identical" : "DIFFERS", taxonomy ? "complete" : "INCOMPLETE"));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"partition oracle", partition_oracle},
      {"data-conditional selection", ed_selection},
      {"gradient verification", gradient_check},
      {"moe identity and hard routing", moe_identity},
      {"specialization experiment", specialization},
      {"data-efficiency analogue", data_efficiency},
      {"metrics oracle", metrics_oracle},
      {"lora", lora_checks},
      {"checkpoint round-trip", checkpoint_checks},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = fail(std::string("exception: ") + e.what());
    }
    const char* tag = r.outcome == Outcome::pass ? "PASS" : r.outcome == Outcome::fail ? "FAIL" : "SKIP";
    failures += r.outcome == Outcome::fail;
    fmt::print("{} {}: {}\n", tag, name, r.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
