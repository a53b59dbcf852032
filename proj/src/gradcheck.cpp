#include "cneuro/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "cneuro/error.hpp"

namespace cneuro {

namespace {

double run_forward(const GradCheckProblem& problem,
                   const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Tape::Ref> refs;
  refs.reserve(params.size());
  for (const Tensor& p : params) refs.push_back(tape.input(p));
  Tape::Ref loss = problem.build(tape, refs);
  const Tensor& v = tape.value(loss);
  if (v.size() != 1)
    throw DimensionError("grad_check: loss must be scalar, got " + v.shape_str());
  return v.at(0);
}

}  // namespace

GradCheckReport grad_check(const GradCheckProblem& problem, double h,
                           unsigned threads) {
  if (!problem.build) throw InputError("grad_check: missing build function");
  if (!(h > 0.0)) throw InputError("grad_check: step must be positive");

  const double f0 = run_forward(problem, problem.params);
  const double f1 = run_forward(problem, problem.params);
  if (f0 != f1)
    throw InputError(
        "grad_check: two identical forwards disagree; computation is not "
        "deterministic (dropout or other stateful randomness on the path)");

  // Analytic pass.
  Tape tape;
  std::vector<Tape::Ref> refs;
  refs.reserve(problem.params.size());
  for (const Tensor& p : problem.params) refs.push_back(tape.param(p));
  Tape::Ref loss = problem.build(tape, refs);
  if (tape.value(loss).size() != 1)
    throw DimensionError("grad_check: loss must be scalar");
  tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(refs.size());
  for (Tape::Ref r : refs) analytic.push_back(tape.grad(r));

  GradCheckReport report;
  report.loss = tape.value(loss).at(0);
  report.min_kink_distance = tape.kink_distance();

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < problem.params.size(); ++i)
    for (std::size_t j = 0; j < problem.params[i].size(); ++j)
      coords.emplace_back(i, j);
  std::vector<double> rel_err(coords.size(), 0.0);
  std::vector<double> numeric(coords.size(), 0.0);

  const unsigned nthreads =
      std::max(1u, std::min<unsigned>(threads, coords.size() ? coords.size() : 1));
  auto worker = [&](unsigned tid) {
    std::vector<Tensor> local = problem.params;
    for (std::size_t c = tid; c < coords.size(); c += nthreads) {
      const auto [pi, ci] = coords[c];
      double* slot = local[pi].data() + ci;
      const double orig = *slot;
      *slot = orig + h;
      const double fp = run_forward(problem, local);
      *slot = orig - h;
      const double fm = run_forward(problem, local);
      *slot = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[pi].data()[ci];
      rel_err[c] = std::fabs(ana - num) /
                   std::max({std::fabs(ana), std::fabs(num), 1.0});
      numeric[c] = num;
    }
  };
  if (nthreads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }

  for (std::size_t c = 0; c < coords.size(); ++c) {
    if (rel_err[c] > report.max_rel_err) {
      report.max_rel_err = rel_err[c];
      report.worst_param = coords[c].first;
      report.worst_coord = coords[c].second;
      report.worst_analytic = analytic[coords[c].first].data()[coords[c].second];
      report.worst_numeric = numeric[c];
    }
  }
  return report;
}

}  // namespace cneuro
