#pragma once

// Synthetic labeled cohorts with planted connectivity effects. Subjects are
// unit-variance noise series; a planted effect mixes a shared latent into the
// concept's two ROI sets so their cross-correlation lands near the requested
// value, only for subjects of the affected class. The generator also emits a
// concept pool (planted plus decoys) and the ground-truth planted ids.

#include <cstdint>
#include <string>
#include <vector>

#include "cneuro/atlas.hpp"
#include "cneuro/concepts.hpp"
#include "cneuro/dataset.hpp"

namespace cneuro {

struct PlantedEffect {
  Concept what;
  double effect = 0.0;  // target cross-set correlation, in [-0.6, 0.6]
  int affected_class = 0;
};

struct CohortSpec {
  std::size_t num_rois = 40;
  std::size_t time_points = 120;
  std::size_t subjects = 200;
  int classes = 2;
  double noise_std = 1.0;
  std::uint64_t seed = 7;
  std::size_t pool_size = 20;  // planted concepts plus generated decoys
  // Decoy blocks carry class-neutral structure of per-subject strength
  // uniform in [0, decoy_corr_max); 0 leaves the decoy regions pure noise.
  // Nonzero makes the cohort realistic: global connectivity statistics vary
  // between subjects while only the planted blocks separate the classes.
  double decoy_corr_max = 0.45;
  std::vector<PlantedEffect> planted;

  void validate() const;
};

// Desk-scale default: |V|=40, T=120, M=200, two classes, three planted
// effects (+0.4 and +0.3 on class 1, -0.4 on class 0) in a pool of 20.
CohortSpec default_cohort_spec();

// ROIs named S000..; even ids left, odd ids right.
Atlas make_synthetic_atlas(std::size_t n);

struct SynthCohort {
  Dataset dataset;  // no splits; callers split with their own seed
  std::vector<Concept> pool;
  std::vector<std::string> planted_ids;
};

SynthCohort generate_cohort(const CohortSpec& spec);

// {"planted": [...], "spec": {...}}
void save_ground_truth(const SynthCohort& cohort, const CohortSpec& spec,
                       const std::string& path);

CohortSpec load_cohort_spec(const std::string& path);
void save_cohort_spec(const CohortSpec& spec, const std::string& path);

}  // namespace cneuro
