#pragma once

// Cohort container: atlas + per-subject FC graphs + named splits.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cneuro/atlas.hpp"
#include "cneuro/graph.hpp"

namespace cneuro {

struct Dataset {
  std::shared_ptr<const Atlas> atlas;
  int num_classes = 0;
  std::vector<SubjectGraph> subjects;
  // Split name -> subject indices. Populated by split_dataset.
  std::map<std::string, std::vector<std::size_t>> splits;

  const std::vector<std::size_t>& split(const std::string& name) const;

  // Index of the first subject with the given id, if present.
  void validate() const;
};

// Loads a cohort manifest:
//   {"atlas": "...", "num_classes": N,
//    "subjects": [{"id": "...", "path": "...", "kind": "timeseries"|"fc",
//                  "label": 0}, ...]}
// Relative paths resolve against the manifest's directory. "timeseries"
// entries run pearson_fc; "fc" entries load a precomputed matrix.
Dataset load_dataset(const std::string& manifest_path);

// Label-stratified split into train/val/test. Ratios must be positive and
// sum to 1 (1e-9). Deterministic for a fixed seed. Every class needs at
// least 3 subjects so each split gets one.
void split_dataset(Dataset& ds, double train_ratio, double val_ratio,
                   double test_ratio, std::uint64_t seed);

// Writes a manifest plus per-subject FC CSVs into out_dir.
void save_dataset_fc(const Dataset& ds, const std::string& atlas_path,
                     const std::string& out_dir);

}  // namespace cneuro
