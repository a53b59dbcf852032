#include "cneuro/bottleneck.hpp"

#include <cmath>

#include "cneuro/error.hpp"

namespace cneuro {

BottleneckParams BottleneckParams::init(const BottleneckConfig& cfg,
                                        RandomStream& rng) {
  if (cfg.num_classes < 2) throw InputError("bottleneck: need at least 2 classes");
  if (cfg.num_concepts == 0) throw InputError("bottleneck: no concepts");
  if (cfg.hidden == 0) throw InputError("bottleneck: hidden width must be positive");
  const std::size_t n = static_cast<std::size_t>(cfg.num_classes);
  BottleneckParams p;
  p.cfg = cfg;
  auto fill = [&](Tensor& t, std::size_t fan_in) {
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + n));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-lim, lim);
  };
  p.w = Tensor(n, cfg.num_concepts);
  fill(p.w, cfg.num_concepts);
  p.w_z = Tensor(n, cfg.hidden);
  fill(p.w_z, cfg.hidden);
  p.b = Tensor(n);
  return p;
}

std::vector<Tensor*> BottleneckParams::trainable() { return {&w, &w_z, &b}; }

std::vector<const Tensor*> BottleneckParams::trainable() const {
  return {&w, &w_z, &b};
}

BottleneckRefs lift(Tape& tape, BottleneckParams& params, bool trainable) {
  BottleneckRefs r;
  r.w = trainable ? tape.param(params.w) : tape.input(params.w);
  r.w_z = trainable ? tape.param(params.w_z) : tape.input(params.w_z);
  r.b = trainable ? tape.param(params.b) : tape.input(params.b);
  r.cfg = &params.cfg;
  return r;
}

DirectionPriors DirectionPriors::from_concepts(
    const std::vector<Concept>& concepts) {
  DirectionPriors p;
  for (std::size_t c = 0; c < concepts.size(); ++c) {
    if (concepts[c].direction == 0) continue;
    p.cols.push_back(c);
    p.sign.push_back(concepts[c].direction > 0 ? 1.0 : -1.0);
  }
  return p;
}

Tape::Ref concept_scores(Tape& tape, Tape::Ref h_rows, Tape::Ref z) {
  return tape.matvec(h_rows, z);
}

Tape::Ref class_logits(Tape& tape, const BottleneckRefs& head, Tape::Ref s,
                       Tape::Ref z) {
  auto pre = tape.add(tape.add(tape.matvec(head.w, s), tape.matvec(head.w_z, z)),
                      head.b);
  return head.cfg->sigmoid_squash ? tape.sigmoid(pre) : pre;
}

Tape::Ref class_probs(Tape& tape, Tape::Ref logits) {
  return tape.softmax_vec(logits);
}

Tape::Ref ce_loss(Tape& tape, Tape::Ref probs, int label) {
  const Tensor& p = tape.value(probs);
  if (label < 0 || static_cast<std::size_t>(label) >= p.size())
    throw InputError("ce loss: label " + std::to_string(label) +
                     " outside " + std::to_string(p.size()) + " classes");
  auto picked = tape.pick(probs, static_cast<std::size_t>(label));
  return tape.scale(tape.log(tape.clamp_min(picked, 1e-12)), -1.0);
}

Tape::Ref l1_penalty(Tape& tape, const BottleneckRefs& head) {
  return tape.abs_sum(head.w);
}

Tape::Ref direction_penalty(Tape& tape, const BottleneckRefs& head,
                            const DirectionPriors& priors) {
  if (priors.empty()) throw InputError("direction penalty: no priors");
  const std::size_t n_c = head.cfg->num_concepts;
  const std::size_t p = priors.cols.size();
  // select the prior columns, then flip them so violations are positive
  Tensor sel(n_c, p);
  for (std::size_t j = 0; j < p; ++j) {
    if (priors.cols[j] >= n_c)
      throw DimensionError("direction penalty: prior column out of range");
    sel.at(priors.cols[j], j) = -priors.sign[j];
  }
  auto viol = tape.relu(tape.matmul(head.w, tape.input(sel)));
  return tape.sum_all(tape.mul(viol, viol));
}

std::vector<double> concept_importance(const BottleneckParams& params) {
  std::vector<double> out(params.w.cols(), 0.0);
  for (std::size_t c = 0; c < params.w.cols(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < params.w.rows(); ++j) {
      const double v = params.w.at(j, c);
      s += v * v;
    }
    out[c] = std::sqrt(s);
  }
  return out;
}

}  // namespace cneuro
