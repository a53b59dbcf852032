#pragma once

#include <cstdint>
#include <vector>

#include "cneuro/tensor.hpp"

namespace cneuro {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled; applied as p *= 1 - lr*wd
};

// Moment slots are keyed by position, so callers must pass the same params in
// the same order on every step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Tensor*>& params,
            const std::vector<const Tensor*>& grads);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace cneuro
