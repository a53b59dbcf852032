#include "cneuro/adam.hpp"

#include <cmath>

#include "cneuro/error.hpp"

namespace cneuro {

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size())
    throw InputError("adam: params/grads count mismatch");
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
      Tensor z = *p;
      z.fill(0.0);
      m_.push_back(z);
      v_.push_back(std::move(z));
    }
  }
  if (params.size() != m_.size())
    throw InputError("adam: param count changed between steps");

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double shrink = 1.0 - cfg_.lr * cfg_.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(m_[i]) || !p.same_shape(g))
      throw DimensionError("adam: shape mismatch at slot " + std::to_string(i));
    double* pd = p.data();
    const double* gd = g.data();
    double* md = m_[i].data();
    double* vd = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      pd[j] *= shrink;
      md[j] = cfg_.beta1 * md[j] + (1.0 - cfg_.beta1) * gd[j];
      vd[j] = cfg_.beta2 * vd[j] + (1.0 - cfg_.beta2) * gd[j] * gd[j];
      const double mhat = md[j] / bc1;
      const double vhat = vd[j] / bc2;
      pd[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    if (!p.all_finite())
      throw NumericFault("adam: non-finite parameter after update");
  }
}

}  // namespace cneuro
