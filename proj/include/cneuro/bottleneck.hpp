#pragma once

// Concept-bottleneck classifier head. Concept activations are dot products
// between the subject embedding and each concept embedding; the class scores
// are a sparse linear readout of those activations plus a direct path from
// the subject embedding. Loss adds an L1 penalty on the concept readout and a
// squared hinge pushing readout columns toward their stated sign.

#include <cstddef>
#include <vector>

#include "cneuro/concepts.hpp"
#include "cneuro/rng.hpp"
#include "cneuro/tape.hpp"
#include "cneuro/tensor.hpp"

namespace cneuro {

struct BottleneckConfig {
  int num_classes = 2;
  std::size_t num_concepts = 0;
  std::size_t hidden = 64;
  bool sigmoid_squash = true;  // squash class scores through a sigmoid
};

struct BottleneckParams {
  BottleneckConfig cfg;
  Tensor w;    // num_classes x num_concepts
  Tensor w_z;  // num_classes x hidden
  Tensor b;    // num_classes

  static BottleneckParams init(const BottleneckConfig& cfg, RandomStream& rng);

  std::vector<Tensor*> trainable();
  std::vector<const Tensor*> trainable() const;
};

struct BottleneckRefs {
  Tape::Ref w, w_z, b;
  const BottleneckConfig* cfg = nullptr;
};

BottleneckRefs lift(Tape& tape, BottleneckParams& params, bool trainable);

// Sign expectations per concept column, taken from Concept.direction; columns
// without a stated direction carry no penalty.
struct DirectionPriors {
  std::vector<std::size_t> cols;
  std::vector<double> sign;

  static DirectionPriors from_concepts(const std::vector<Concept>& concepts);
  bool empty() const { return cols.empty(); }
};

struct LossWeights {
  double sparsity = 1.0;
  double direction = 1.0;
};

// h_rows is num_concepts x hidden (one embedding per row); returns the
// activation vector s with s_c = z . h_c.
Tape::Ref concept_scores(Tape& tape, Tape::Ref h_rows, Tape::Ref z);

// W s + W_z z + b, optionally squashed.
Tape::Ref class_logits(Tape& tape, const BottleneckRefs& head, Tape::Ref s,
                       Tape::Ref z);
Tape::Ref class_probs(Tape& tape, Tape::Ref logits);

// -log p[label], with probabilities floored at 1e-12 (floored hits show up in
// the tape's clamp counter).
Tape::Ref ce_loss(Tape& tape, Tape::Ref probs, int label);

Tape::Ref l1_penalty(Tape& tape, const BottleneckRefs& head);
// Sum over prior columns of relu(-sign * W[j][c])^2. Must not be called with
// empty priors.
Tape::Ref direction_penalty(Tape& tape, const BottleneckRefs& head,
                            const DirectionPriors& priors);

// Importance of each concept: L2 norm of its readout column.
std::vector<double> concept_importance(const BottleneckParams& params);

}  // namespace cneuro
