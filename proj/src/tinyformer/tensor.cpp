#include "tinyformer/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace eemp {

std::size_t element_count(std::span<const std::int64_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(std::span<const std::int64_t> dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i > 0) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::int64_t> dims)
    : shape(std::move(dims)), data(element_count(shape), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> dims, double fill)
    : shape(std::move(dims)), data(element_count(shape), fill) {}

void Tensor::zero() { std::fill(data.begin(), data.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return s;
}

}  // namespace eemp
