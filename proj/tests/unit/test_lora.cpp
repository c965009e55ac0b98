#include <cmath>

#include "common/error.hpp"
#include "helpers.hpp"
#include "tinyformer/lora.hpp"
#include "tinyformer/training.hpp"

using namespace eemp;

namespace {

ModelConfig config32() {
  ModelConfig c;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_ff = 64;
  c.max_seq = 16;
  c.seed = 9;
  return c;
}

const std::vector<int> kTokens{kBosToken, kSpeakerToken, 'a', 'b', kListenerToken, 'b', 'a'};

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

void randomize_b(LoraModel& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, ad] : m.adapters)
    for (auto& v : ad.b.data) v = rng.normal(0.0, 0.05);
}

}  // namespace

TEST_SUITE("lora") {
  TEST_CASE("fresh adapters leave the model unchanged") {
    const auto base = init_parameters(config32());
    const auto m = lora_attach(base, LoraConfig{}, 1);
    CHECK(max_abs_diff(lora_forward(m, kTokens), forward(base, kTokens)) <= 1e-12);
    CHECK(lora_merge(m) == base);
  }

  TEST_CASE("merged weights reproduce the adapted forward") {
    const auto base = init_parameters(config32());
    for (std::uint64_t seed : {1, 2, 3}) {
      auto m = lora_attach(base, LoraConfig{}, seed);
      randomize_b(m, seed + 100);
      const auto adapted = lora_forward(m, kTokens);
      CHECK(max_abs_diff(adapted, forward(base, kTokens)) > 1e-3);
      CHECK(max_abs_diff(adapted, forward(lora_merge(m), kTokens)) <= 1e-6);
    }
  }

  TEST_CASE("adapter shapes and parameter count") {
    const auto base = init_parameters(config32());
    const auto m = lora_attach(base, LoraConfig{}, 1);
    CHECK(m.adapters.size() == 14);
    const auto& q = m.adapters.at("layers.0.q_proj");
    CHECK(q.a.shape == std::vector<std::int64_t>{8, 32});
    CHECK(q.b.shape == std::vector<std::int64_t>{32, 8});
    CHECK(q.scale == doctest::Approx(4.0));
    CHECK(m.adapters.at("layers.1.gate_proj").b.shape == std::vector<std::int64_t>{64, 8});
    CHECK(m.adapters.at("layers.1.down_proj").a.shape == std::vector<std::int64_t>{8, 64});
    // Per layer: 4 * (8*32 + 32*8) + 3 * (8*32 + 64*8).
    CHECK(lora_parameter_count(m) == 2 * (4 * 512 + 3 * 768));

    LoraConfig ffn_only;
    ffn_only.target_modules = kFfnProjections;
    CHECK(lora_parameter_count(lora_attach(base, ffn_only, 1)) == 2 * 3 * 768);
  }

  TEST_CASE("bad configs are rejected") {
    const auto base = init_parameters(config32());
    LoraConfig c;
    c.rank = 0;
    CHECK_THROWS_AS(lora_attach(base, c, 1), Error);
    c = LoraConfig{};
    c.dropout = 1.0;
    CHECK_THROWS_AS(lora_attach(base, c, 1), Error);
    c = LoraConfig{};
    c.target_modules = {"lm_head"};
    CHECK_THROWS_AS(lora_attach(base, c, 1), Error);
  }

  TEST_CASE("LoRA training changes only targeted projections") {
    auto cfg = config32();
    const auto base = init_parameters(cfg);
    const std::vector<Instance> data{{"a", {{Role::speaker, "ab"}}, "ab"}, {"b", {{Role::speaker, "ba"}}, "ba"}};
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 2;
    tc.learning_rate = 1e-2;
    LoraConfig lc;
    lc.target_modules = kFfnProjections;
    const auto merged = train_sft(base, data, tc, lc);
    for (const auto& [name, t] : base.tensors) {
      INFO(name);
      if (is_ffn_tensor(name)) {
        CHECK_FALSE(merged.at(name) == t);
      } else {
        CHECK(merged.at(name) == t);
      }
    }
  }
}
