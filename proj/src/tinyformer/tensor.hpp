#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace eemp {

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> dims);
  Tensor(std::vector<std::int64_t> dims, double fill);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::int64_t dim(std::size_t i) const { return shape[i]; }

  /// Row access for rank-2 tensors.
  std::span<double> row(std::int64_t r) {
    const auto c = static_cast<std::size_t>(shape[1]);
    return {data.data() + static_cast<std::size_t>(r) * c, c};
  }
  std::span<const double> row(std::int64_t r) const {
    const auto c = static_cast<std::size_t>(shape[1]);
    return {data.data() + static_cast<std::size_t>(r) * c, c};
  }

  double& at(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * shape[1] + c)];
  }
  double at(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * shape[1] + c)];
  }

  void zero();
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

std::size_t element_count(std::span<const std::int64_t> dims);
std::string shape_string(std::span<const std::int64_t> dims);

/// Sum of squares of all entries.
double squared_norm(const Tensor& t);

}  // namespace eemp
