#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "apgf/error.hpp"

namespace apgf {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// Dense row-major array of doubles. Learnable parameters are Tensors with
// requires_grad set; their grad is filled by backward().
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty, or numel(shape) entries

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0, bool learnable = false)
      : shape(std::move(s)), values(numel(shape), fill), requires_grad(learnable) {}
  Tensor(Shape s, std::vector<double> v, bool learnable = false)
      : shape(std::move(s)), values(std::move(v)), requires_grad(learnable) {
    if (values.size() != numel(shape))
      throw ValidationError("tensor values (" + std::to_string(values.size()) +
                            ") do not match shape " + shape_string(shape));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool has_grad() const { return grad.size() == values.size() && !values.empty(); }
  void zero_grad() { grad.assign(values.size(), 0.0); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.values == b.values;
  }
};

inline void require_finite(const std::vector<double>& values, const char* op) {
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
}

}  // namespace apgf
