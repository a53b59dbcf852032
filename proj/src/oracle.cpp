#include "cneuro/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "cneuro/error.hpp"

namespace cneuro {

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw DimensionError("oracle: pearson needs two equal-length vectors");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

double oracle_concept_score(const std::vector<std::vector<double>>& adjacency,
                            std::size_t num_rois, const std::vector<int>& set_a,
                            const std::vector<int>& set_b, bool absolute) {
  if (adjacency.empty()) throw InputError("oracle: no subjects");
  if (set_a.empty() || set_b.empty()) throw InputError("oracle: empty concept side");
  const double edge_count = static_cast<double>(set_a.size() * set_b.size());
  double total = 0.0;
  for (const std::vector<double>& adj : adjacency) {
    double edge_sum = 0.0;
    for (int u : set_a) {
      for (int v : set_b) {
        double w = adj[static_cast<std::size_t>(u) * num_rois + static_cast<std::size_t>(v)];
        edge_sum += absolute ? std::fabs(w) : w;
      }
    }
    total += edge_sum / edge_count;
  }
  return total / static_cast<double>(adjacency.size());
}

std::vector<std::string> oracle_topk(std::vector<std::pair<std::string, double>> scored,
                                     std::size_t k) {
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(scored[i].first);
  return out;
}

}  // namespace cneuro
