#include "cneuro/tensor.hpp"

#include <cmath>

#include "cneuro/error.hpp"

namespace cneuro {

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> v) {
  if (v.size() != r * c) {
    throw DimensionError("tensor: matrix init expects " + std::to_string(r * c) +
                         " values, got " + std::to_string(v.size()));
  }
  Tensor t;
  t.shape_ = {r, c};
  t.values_ = std::move(v);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  s += ")";
  return s;
}

}  // namespace cneuro
