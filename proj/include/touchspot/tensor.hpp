#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace touchspot {

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);
  Tensor(std::vector<int> shape_, std::vector<double> data_);

  size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[i < 0 ? shape.size() + i : i]; }
  // Product of all dims except the last.
  size_t rows() const;
  int cols() const { return shape.empty() ? 1 : shape.back(); }

  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

size_t shape_numel(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

}  // namespace touchspot
