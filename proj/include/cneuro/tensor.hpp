#pragma once

// Dense float64 tensor, rank 1 or 2, row-major. Deliberately minimal: the
// model never needs higher ranks and keeping indexing trivial keeps the
// autodiff kernels auditable.

#include <cstddef>
#include <string>
#include <vector>

namespace cneuro {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::size_t n) : shape_{n}, values_(n, 0.0) {}

  Tensor(std::size_t r, std::size_t c) : shape_{r, c}, values_(r * c, 0.0) {}

  static Tensor vector(std::vector<double> v) {
    Tensor t;
    t.shape_ = {v.size()};
    t.values_ = std::move(v);
    return t;
  }

  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v);

  static Tensor scalar(double v) {
    Tensor t;
    t.shape_ = {1};
    t.values_ = {v};
    return t;
  }

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : 1; }

  double& at(std::size_t i) { return values_[i]; }
  double at(std::size_t i) const { return values_[i]; }
  double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const {
    return values_[i * shape_[1] + j];
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void fill(double v) { values_.assign(values_.size(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

}  // namespace cneuro
