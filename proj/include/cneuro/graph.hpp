#pragma once

// ROI time series and functional-connectivity graphs.

#include <cstdint>
#include <string>
#include <vector>

namespace cneuro {

struct RoiTimeSeries {
  std::string subject_id;
  std::size_t time_points = 0;  // T
  std::size_t num_rois = 0;     // |V|
  std::vector<double> data;     // row-major T x |V|

  double at(std::size_t t, std::size_t v) const { return data[t * num_rois + v]; }
  double& at(std::size_t t, std::size_t v) { return data[t * num_rois + v]; }

  // Enforces T >= 3, finite values, consistent buffer size.
  void validate() const;
};

// Symmetric weighted FC graph over the atlas ROI set. Adjacency is stored
// dense; diagonal is zero, off-diagonal entries live in [-1, 1].
struct SubjectGraph {
  std::string subject_id;
  int label = -1;
  std::size_t num_rois = 0;
  std::vector<double> adjacency;            // row-major |V| x |V|
  std::vector<std::uint8_t> zero_variance;  // per-ROI flag

  double a(std::size_t u, std::size_t v) const { return adjacency[u * num_rois + v]; }
  double& a(std::size_t u, std::size_t v) { return adjacency[u * num_rois + v]; }

  // Checks symmetry (1e-12), zero diagonal, value range.
  void validate() const;
};

// Pearson correlation across all ROI pairs. Zero-variance ROIs get zero
// rows/columns and a flag instead of NaN. Entries are clamped to [-1, 1] on
// the way out (they can drift past by rounding).
SubjectGraph pearson_fc(const RoiTimeSeries& series);

// Edge indicator |A(u,v)| >= tau for u != v.
std::vector<std::uint8_t> binarize(const SubjectGraph& g, double tau);

// Builds a SubjectGraph from a precomputed |V| x |V| correlation matrix.
// Validates symmetry (1e-9 for file round-trips), zeroes the diagonal,
// clamps the range, then symmetrizes exactly.
SubjectGraph graph_from_fc_matrix(const std::string& subject_id,
                                  std::size_t num_rois,
                                  const std::vector<double>& matrix);

// Plain numeric CSV: no header, comma-separated, every row the same width.
// Parse failures report row/column position.
struct CsvMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

CsvMatrix load_csv_matrix(const std::string& path);
void save_csv_matrix(const std::string& path, std::size_t rows, std::size_t cols,
                     const std::vector<double>& values);

}  // namespace cneuro
