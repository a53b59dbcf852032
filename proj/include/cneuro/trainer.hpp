#pragma once

// Training loop: balanced batching, one-tape-per-batch optimization of the
// summed loss, periodic validation with early stopping, and checkpoint
// persistence.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cneuro/adam.hpp"
#include "cneuro/bottleneck.hpp"
#include "cneuro/concepts.hpp"
#include "cneuro/dataset.hpp"
#include "cneuro/encoder.hpp"
#include "cneuro/rng.hpp"

namespace cneuro {

struct TrainConfig {
  int epochs = 500;
  int batches_per_epoch = 100;
  int pos_per_batch = 16;
  int neg_per_batch = 16;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double dropout = 0.5;
  int validate_every = 5;
  int patience = 20;  // consecutive non-improving validations
  std::uint64_t seed = 0;
  double lambda_sp = 1.0;
  double lambda_dir = 1.0;
  double tau = 0.3;
  std::optional<std::size_t> n_c;  // cap on concepts taken from the input list
  std::size_t hidden = 64;
  bool sigmoid_squash = true;
  double train_ratio = 0.7, val_ratio = 0.1, test_ratio = 0.2;

  void validate() const;
};

TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);
// Canonical JSON form; the hash is FNV over it.
std::string train_config_json(const TrainConfig& cfg);
std::string train_config_hash(const TrainConfig& cfg);

struct Model {
  EncoderParams encoder;
  BottleneckParams head;
};

struct Checkpoint {
  std::string version = "1";
  Model model;
  std::vector<std::string> concept_ids;
  std::string concepts_hash;
  std::string config_hash;
  TrainConfig config;
  double best_val_acc = 0.0;
  int epoch = 0;  // epoch of the best validation
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// Inference guards: the concept list fed to eval must be the one trained on.
void require_concepts_match(const Checkpoint& ckpt,
                            const std::vector<Concept>& concepts);

// Binary batching: up to pos/neg_per_batch per class, distinct while the
// class lasts, resampled with replacement past that. Deterministic per
// (seed, epoch).
std::vector<std::vector<std::size_t>> balanced_batches(
    const Dataset& ds, const std::vector<std::size_t>& train_idx,
    const TrainConfig& cfg, std::uint64_t seed, int epoch);
// Multi-class: 32 per batch, proportional with at least one per present
// class.
std::vector<std::vector<std::size_t>> stratified_batches(
    const Dataset& ds, const std::vector<std::size_t>& train_idx,
    const TrainConfig& cfg, std::uint64_t seed, int epoch);

// Everything train() needs per step, reusable by tests driving single steps.
struct TrainState {
  const Dataset* ds = nullptr;
  std::vector<Concept> concepts;
  TrainConfig cfg;
  Model model;
  Adam opt;
  DirectionPriors priors;
  std::vector<GraphInputs> subject_in;               // per subject
  std::vector<std::vector<GraphInputs>> concept_in;  // per subject, per concept

  TrainState() : opt(AdamConfig{}) {}
};

TrainState init_train(const Dataset& ds, std::vector<Concept> concepts,
                      const TrainConfig& cfg);

// One optimizer step over a batch; returns the summed batch loss. Null rng
// disables dropout.
double train_step(TrainState& st, const std::vector<std::size_t>& batch,
                  RandomStream* dropout_rng);

// One subject's precomputed inputs inside a batch.
struct BatchItem {
  const GraphInputs* subject = nullptr;
  const std::vector<GraphInputs>* concepts = nullptr;
  int label = 0;
};

// The training loss on an existing tape: summed cross entropy over the batch
// plus the sparsity and direction penalties. All graphs share batch-norm
// moments (encode_graphs); the gradient tests build this same composite.
Tape::Ref batch_loss(Tape& tape, const EncoderRefs& enc,
                     const BottleneckRefs& head,
                     const std::vector<BatchItem>& items,
                     const DirectionPriors& priors, double lambda_sp,
                     double lambda_dir, const EncodeOptions& opt);

// Eval-mode forward for one subject.
struct SubjectEval {
  std::vector<double> probs;   // per class
  std::vector<double> scores;  // s_c per concept
  std::vector<double> z;       // subject embedding
  Tensor h;                    // concept embeddings, N_c x hidden
  int predicted = -1;
};

SubjectEval evaluate_subject(Model& model, const SubjectGraph& g,
                             const std::vector<Concept>& concepts);

// jobs > 1 spreads subjects over threads; the count reduction keeps the
// result deterministic anyway.
double split_accuracy(Model& model, const Dataset& ds,
                      const std::vector<Concept>& concepts,
                      const std::string& split_name, int jobs = 1);

struct ValidationPoint {
  int epoch = 0;
  double train_loss = 0.0;  // mean batch loss this epoch
  double val_acc = 0.0;
  bool improved = false;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<ValidationPoint> history;
  double final_train_loss = 0.0;  // last batch, for determinism checks
  int stopped_epoch = 0;
};

// Full loop per config. Needs "train" and "val" splits on the dataset.
// jobs only parallelizes validation; optimization itself stays sequential.
TrainResult train(const Dataset& ds, const std::vector<Concept>& concepts,
                  const TrainConfig& cfg, int jobs = 1);

void save_metrics_csv(const TrainResult& result, const std::string& path);

}  // namespace cneuro
