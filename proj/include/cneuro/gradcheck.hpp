#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cneuro/tape.hpp"
#include "cneuro/tensor.hpp"

namespace cneuro {

// A differentiable computation stated abstractly: `build` reconstructs it on a
// fresh tape given leaf refs for `params` (same order) and returns the scalar
// loss. It must be a pure function of the params; anything else it captures
// has to stay fixed across calls.
struct GradCheckProblem {
  std::vector<Tensor> params;
  std::function<Tape::Ref(Tape&, const std::vector<Tape::Ref>&)> build;
};

struct GradCheckReport {
  double loss = 0.0;
  double max_rel_err = 0.0;
  double min_kink_distance = 0.0;  // from the analytic pass
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central finite differences against tape gradients. Runs the forward twice
// up front and refuses non-deterministic computations. `threads` > 1 splits
// coordinates across workers, each with a private copy of the params; the
// result does not depend on the thread count.
GradCheckReport grad_check(const GradCheckProblem& problem, double h = 1e-5,
                           unsigned threads = 1);

}  // namespace cneuro
