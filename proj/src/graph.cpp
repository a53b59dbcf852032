#include "cneuro/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cneuro/error.hpp"

namespace cneuro {

void RoiTimeSeries::validate() const {
  if (time_points < 3) {
    throw DimensionError("timeseries: subject '" + subject_id + "' has " +
                         std::to_string(time_points) + " time points, need >= 3");
  }
  if (num_rois == 0) {
    throw DimensionError("timeseries: subject '" + subject_id + "' has no ROIs");
  }
  if (data.size() != time_points * num_rois) {
    throw DimensionError("timeseries: subject '" + subject_id + "' buffer size " +
                         std::to_string(data.size()) + " != T*|V| = " +
                         std::to_string(time_points * num_rois));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw InputError("timeseries: subject '" + subject_id + "' non-finite value at row " +
                       std::to_string(i / num_rois) + " col " + std::to_string(i % num_rois));
    }
  }
}

void SubjectGraph::validate() const {
  const std::size_t n = num_rois;
  if (adjacency.size() != n * n) {
    throw DimensionError("graph: subject '" + subject_id + "' adjacency size mismatch");
  }
  if (zero_variance.size() != n) {
    throw DimensionError("graph: subject '" + subject_id + "' flag size mismatch");
  }
  for (std::size_t u = 0; u < n; ++u) {
    if (a(u, u) != 0.0) {
      throw InputError("graph: subject '" + subject_id + "' nonzero diagonal at roi " +
                       std::to_string(u));
    }
    for (std::size_t v = u + 1; v < n; ++v) {
      double x = a(u, v);
      if (!std::isfinite(x) || x < -1.0 || x > 1.0) {
        throw InputError("graph: subject '" + subject_id + "' entry (" + std::to_string(u) +
                         "," + std::to_string(v) + ") out of [-1,1]");
      }
      if (std::fabs(x - a(v, u)) > 1e-12) {
        throw InputError("graph: subject '" + subject_id + "' asymmetric at (" +
                         std::to_string(u) + "," + std::to_string(v) + ")");
      }
    }
  }
}

SubjectGraph pearson_fc(const RoiTimeSeries& series) {
  series.validate();
  const std::size_t t_len = series.time_points;
  const std::size_t n = series.num_rois;

  // Center each column, keep its norm; correlation is then a normalized dot
  // product of centered columns.
  std::vector<double> centered(t_len * n);
  std::vector<double> norms(n, 0.0);
  std::vector<std::uint8_t> flat(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    double mean = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) mean += series.at(t, v);
    mean /= static_cast<double>(t_len);
    double ss = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      double c = series.at(t, v) - mean;
      centered[t * n + v] = c;
      ss += c * c;
    }
    norms[v] = std::sqrt(ss);
    if (norms[v] == 0.0) flat[v] = 1;
  }

  SubjectGraph g;
  g.subject_id = series.subject_id;
  g.num_rois = n;
  g.adjacency.assign(n * n, 0.0);
  g.zero_variance = flat;

  for (std::size_t u = 0; u < n; ++u) {
    if (flat[u]) continue;
    for (std::size_t v = u + 1; v < n; ++v) {
      if (flat[v]) continue;
      double dot = 0.0;
      for (std::size_t t = 0; t < t_len; ++t) {
        dot += centered[t * n + u] * centered[t * n + v];
      }
      double r = dot / (norms[u] * norms[v]);
      r = std::clamp(r, -1.0, 1.0);
      g.a(u, v) = r;
      g.a(v, u) = r;
    }
  }
  return g;
}

std::vector<std::uint8_t> binarize(const SubjectGraph& g, double tau) {
  if (!(tau >= 0.0)) throw InputError("binarize: tau must be >= 0");
  const std::size_t n = g.num_rois;
  std::vector<std::uint8_t> e(n * n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (u != v && std::fabs(g.a(u, v)) >= tau) e[u * n + v] = 1;
    }
  }
  return e;
}

SubjectGraph graph_from_fc_matrix(const std::string& subject_id, std::size_t num_rois,
                                  const std::vector<double>& matrix) {
  const std::size_t n = num_rois;
  if (matrix.size() != n * n) {
    throw DimensionError("fc-matrix: subject '" + subject_id + "' expected " +
                         std::to_string(n) + "x" + std::to_string(n) + " matrix");
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      double x = matrix[u * n + v];
      double y = matrix[v * n + u];
      if (!std::isfinite(x) || !std::isfinite(y)) {
        throw InputError("fc-matrix: subject '" + subject_id + "' non-finite entry at (" +
                         std::to_string(u) + "," + std::to_string(v) + ")");
      }
      if (std::fabs(x - y) > 1e-9) {
        throw InputError("fc-matrix: subject '" + subject_id + "' asymmetric at (" +
                         std::to_string(u) + "," + std::to_string(v) + ")");
      }
    }
  }
  SubjectGraph g;
  g.subject_id = subject_id;
  g.num_rois = n;
  g.adjacency.assign(n * n, 0.0);
  g.zero_variance.assign(n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      double r = 0.5 * (matrix[u * n + v] + matrix[v * n + u]);
      r = std::clamp(r, -1.0, 1.0);
      g.a(u, v) = r;
      g.a(v, u) = r;
    }
  }
  return g;
}

CsvMatrix load_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("csv: cannot open '" + path + "'");
  CsvMatrix m;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++row;
      continue;
    }
    std::size_t col = 0;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      double v = std::strtod(p, &end);
      if (end == p) {
        throw ParseError("csv: '" + path + "' row " + std::to_string(row) + " col " +
                         std::to_string(col) + ": not a number");
      }
      m.values.push_back(v);
      ++col;
      p = end;
      while (*p == ' ' || *p == '\t') ++p;
      if (*p == ',') {
        ++p;
        continue;
      }
      if (*p == '\0') break;
      throw ParseError("csv: '" + path + "' row " + std::to_string(row) + " col " +
                       std::to_string(col) + ": unexpected character '" +
                       std::string(1, *p) + "'");
    }
    if (m.rows == 0) {
      m.cols = col;
    } else if (col != m.cols) {
      throw ParseError("csv: '" + path + "' row " + std::to_string(row) + " has " +
                       std::to_string(col) + " columns, expected " + std::to_string(m.cols));
    }
    ++m.rows;
    ++row;
  }
  if (m.rows == 0) throw ParseError("csv: '" + path + "' is empty");
  return m;
}

void save_csv_matrix(const std::string& path, std::size_t rows, std::size_t cols,
                     const std::vector<double>& values) {
  if (values.size() != rows * cols) {
    throw DimensionError("csv: value count does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  std::ofstream out(path);
  if (!out) throw IoError("csv: cannot write '" + path + "'");
  char buf[40];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      // %.17g round-trips doubles exactly.
      std::snprintf(buf, sizeof(buf), "%.17g", values[r * cols + c]);
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("csv: write failed for '" + path + "'");
}

}  // namespace cneuro
