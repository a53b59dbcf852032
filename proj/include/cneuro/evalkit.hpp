#pragma once

// Evaluation over trained models: accuracy, expert-agreement metrics,
// subject-concept similarity distributions, readout importance, and the
// concept-set ablation runner.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cneuro/concepts.hpp"
#include "cneuro/dataset.hpp"
#include "cneuro/trainer.hpp"

namespace cneuro {

double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& labels);

// |first k of model ∩ first k of expert| / k. Both lists need at least k
// entries.
double concept_agreement(const std::vector<std::string>& model_topk,
                         const std::vector<std::string>& expert_topk,
                         std::size_t k);

// Fraction of subjects whose top-k concepts (by score, ties by concept id)
// overlap the expert set in at least `threshold` places; threshold 0 means
// ceil(k/2). exact_subset demands all k instead.
double ranking_agreement(
    const std::vector<std::vector<double>>& subject_scores,
    const std::vector<std::string>& concept_ids,
    const std::vector<std::string>& expert_topk, std::size_t k,
    std::size_t threshold = 0, bool exact_subset = false);

// Expert file: {"disorder": str, "topk": {"3": [ids], "5": [ids], ...}}.
struct ExpertList {
  std::string disorder;
  std::map<std::size_t, std::vector<std::string>> topk;
};

ExpertList load_expert_list(const std::string& path);

struct AgreementReport {
  std::string disorder;
  std::vector<std::size_t> ks;
  std::vector<double> concept_agreement;  // per k
  std::vector<double> ranking_agreement;  // per k
};

// One row per k in the expert file, scored on the named split.
AgreementReport agreement_report(Model& model, const Dataset& ds,
                                 const std::vector<Concept>& concepts,
                                 const std::string& split_name,
                                 const ExpertList& expert);

// Zero if either vector is all zeros.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct SimilarityDistribution {
  std::string concept_id;
  std::vector<double> similarities;  // one per subject in the split
  std::vector<double> edges;         // 21 edges spanning [-1, 1]
  std::vector<std::size_t> counts;   // 20 bins
};

SimilarityDistribution similarity_distribution(
    Model& model, const Dataset& ds, const std::vector<Concept>& concepts,
    const std::string& split_name, const std::string& concept_id);

// Concept indices ordered by readout column L2 norm, descending, ties by id.
std::vector<std::size_t> importance_order(const BottleneckParams& head,
                                          const std::vector<std::string>& ids);

enum class AblateMode { kFull, kRandom, kTopK };

AblateMode ablate_mode_from_string(const std::string& s);
std::string to_string(AblateMode m);

// Fresh ROI-pair concepts with the same side-size profile as `like`,
// direction-free, drawn uniformly from the atlas.
std::vector<Concept> random_concepts(const Atlas& atlas,
                                     const std::vector<Concept>& like,
                                     std::uint64_t seed);

struct AblateResult {
  AblateMode mode = AblateMode::kFull;
  std::size_t k = 0;  // meaningful for topk only
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  double best_val_acc = 0.0;
  std::vector<std::string> concept_ids;
};

// Splits a copy of the dataset with `seed`, picks the mode's concept subset
// (topk fits the full pool first and keeps the k most important), trains
// fresh under the same config, and reports accuracy on the test split.
AblateResult ablate(const Dataset& ds, const std::vector<Concept>& pool,
                    const TrainConfig& cfg, AblateMode mode, std::size_t k,
                    std::uint64_t seed);

}  // namespace cneuro
