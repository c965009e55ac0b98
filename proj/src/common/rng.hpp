#pragma once

#include <cstdint>
#include <random>

namespace eemp {

/// Seeded generator with platform-independent uniform and normal draws.
/// std::normal_distribution differs between standard libraries, which would
/// break checkpoint reproducibility, so the transforms live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal(double mean = 0.0, double stddev = 1.0);

  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates with Rng::below, stable across standard libraries.
template <typename Container>
void shuffle_in_place(Container& c, Rng& rng) {
  using std::swap;
  for (std::size_t i = c.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.below(i));
    swap(c[i - 1], c[j]);
  }
}

}  // namespace eemp
