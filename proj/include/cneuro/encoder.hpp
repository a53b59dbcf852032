#pragma once

// Two-layer message-passing encoder shared by subject graphs and concept
// subgraphs. Node features are a one-hot atlas identity plus the average
// neighbor degree; messages are edge-weighted linear maps averaged over
// thresholded neighbors; readout is mean pooling (subjects) or learned
// attention pooling (concepts).

#include <cstddef>
#include <vector>

#include "cneuro/concepts.hpp"
#include "cneuro/graph.hpp"
#include "cneuro/rng.hpp"
#include "cneuro/tape.hpp"
#include "cneuro/tensor.hpp"

namespace cneuro {

struct EncoderConfig {
  std::size_t atlas_size = 0;
  std::size_t hidden = 64;
  double tau = 0.3;     // edge threshold on |weight|
  double dropout = 0.5; // node dropout after each layer, train mode only

  std::size_t feature_dim() const { return atlas_size + 1; }
};

struct EncoderParams {
  EncoderConfig cfg;
  Tensor w_m1, w_s1, bn1_gamma, bn1_beta;
  Tensor w_m2, w_s2, bn2_gamma, bn2_beta;
  Tensor attn_w;
  BatchNormState bn1, bn2;  // running stats; updated by training, not Adam

  static EncoderParams init(const EncoderConfig& cfg, RandomStream& rng);

  // Canonical order; optimizer slots and serialization both rely on it.
  std::vector<Tensor*> trainable();
  std::vector<const Tensor*> trainable() const;
};

// Weighted adjacency with |w| < tau zeroed out; an entry is an edge iff it is
// nonzero afterwards.
Tensor masked_adjacency(const SubjectGraph& g, double tau);

// Square local adjacency over the concept's nodes (set_a then set_b), keeping
// only thresholded edges between the two sides.
Tensor concept_masked_adjacency(const SubjectGraph& g, const Concept& c,
                                double tau);

struct GraphInputs {
  Tensor features;  // n x (atlas_size + 1)
  Tensor norm_adj;  // n x n: masked weights divided by the node's degree
  std::size_t nodes() const { return features.rows(); }
};

// node_ids map local rows to atlas indices for the one-hot block.
GraphInputs make_graph_inputs(const Tensor& masked_adj,
                              const std::vector<int>& node_ids,
                              std::size_t atlas_size);
GraphInputs subject_inputs(const SubjectGraph& g, const EncoderConfig& cfg);
GraphInputs concept_inputs(const SubjectGraph& g, const Concept& c,
                           const EncoderConfig& cfg);

struct EncoderRefs {
  Tape::Ref w_m1, w_s1, bn1_gamma, bn1_beta;
  Tape::Ref w_m2, w_s2, bn2_gamma, bn2_beta;
  Tape::Ref attn_w;
  BatchNormState* bn1 = nullptr;
  BatchNormState* bn2 = nullptr;
  const EncoderConfig* cfg = nullptr;
};

// Puts the params on a tape, as trainable leaves or frozen inputs.
EncoderRefs lift(Tape& tape, EncoderParams& params, bool trainable);

enum class PoolMode { kMean, kAttention };

struct EncodeOptions {
  bool train = false;
  RandomStream* rng = nullptr;  // required when train is true
};

struct EncodeResult {
  Tape::Ref pooled;
  Tape::Ref alpha;  // attention weights; invalid for mean pooling
};

EncodeResult encode_graph_full(Tape& tape, const EncoderRefs& enc,
                               const GraphInputs& g, PoolMode pool,
                               const EncodeOptions& opt);
Tape::Ref encode_graph(Tape& tape, const EncoderRefs& enc, const GraphInputs& g,
                       PoolMode pool, const EncodeOptions& opt);

// Encodes many graphs on one tape with shared batch-norm moments (statistics
// over the stacked node rows of every graph). Training runs whole batches
// through this so the normalization the weights are fit against matches the
// running statistics used at eval time.
std::vector<Tape::Ref> encode_graphs(Tape& tape, const EncoderRefs& enc,
                                     const std::vector<const GraphInputs*>& gs,
                                     const std::vector<PoolMode>& pools,
                                     const EncodeOptions& opt);

}  // namespace cneuro
