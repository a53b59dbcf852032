#pragma once

// Naive reference implementations used only by tests to cross-check the main
// code paths. Written against raw buffers on purpose: they must not share a
// single line of logic with the library routines they verify.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace cneuro {

// Textbook two-pass Pearson correlation of two equal-length vectors.
double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y);

// Mean edge weight of the bipartite block (set_a x set_b) averaged over
// subjects: subjects outer loop, edges row-major inner loop, per-subject sum
// divided by the edge count before accumulation, final division by the
// subject count. That exact order is part of the contract (the ranker must
// match it bitwise).
double oracle_concept_score(const std::vector<std::vector<double>>& adjacency,
                            std::size_t num_rois, const std::vector<int>& set_a,
                            const std::vector<int>& set_b, bool absolute = false);

// Top-k ids by score descending, ties broken by id ascending.
std::vector<std::string> oracle_topk(
    std::vector<std::pair<std::string, double>> scored, std::size_t k);

}  // namespace cneuro
