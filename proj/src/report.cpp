#include "cneuro/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cneuro/error.hpp"

namespace cneuro {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_histogram_csv(const SimilarityDistribution& d,
                         const std::string& path) {
  std::ofstream out = open_out(path);
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < d.counts.size(); ++i)
    out << d.edges[i] << "," << d.edges[i + 1] << "," << d.counts[i] << "\n";
  finish(out, path);
}

void write_histogram_svg(const SimilarityDistribution& d,
                         const std::string& title, const std::string& path) {
  if (d.counts.empty()) throw InputError("histogram: no bins");
  const double width = 640.0, height = 400.0;
  const double left = 50.0, right = 20.0, top = 40.0, bottom = 40.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  std::size_t peak = *std::max_element(d.counts.begin(), d.counts.end());
  if (peak == 0) peak = 1;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\""
      << height << "\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << xml_escape(title)
      << "</text>\n";

  double bar_w = plot_w / static_cast<double>(d.counts.size());
  for (std::size_t i = 0; i < d.counts.size(); ++i) {
    double h = plot_h * static_cast<double>(d.counts[i]) /
               static_cast<double>(peak);
    double x = left + bar_w * static_cast<double>(i);
    double y = top + plot_h - h;
    svg << "  <rect x=\"" << x + 1 << "\" y=\"" << y << "\" width=\""
        << bar_w - 2 << "\" height=\"" << h
        << "\" fill=\"#4878a8\" stroke=\"none\"/>\n";
  }

  svg << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
      << left + plot_w << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double v = -1.0 + 0.5 * t;
    double x = left + plot_w * (v + 1.0) / 2.0;
    svg << "  <line x1=\"" << x << "\" y1=\"" << top + plot_h << "\" x2=\""
        << x << "\" y2=\"" << top + plot_h + 5 << "\" stroke=\"black\"/>\n";
    svg << "  <text x=\"" << x << "\" y=\"" << top + plot_h + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << v << "</text>\n";
  }
  svg << "  <text x=\"14\" y=\"" << top + 4
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << peak
      << "</text>\n";
  svg << "  <text x=\"14\" y=\"" << top + plot_h
      << "\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n";
  svg << "</svg>\n";

  std::ofstream out = open_out(path);
  out << svg.str();
  finish(out, path);
}

void write_agreement_csv(const AgreementReport& r, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "disorder,k,concept_agreement,ranking_agreement\n";
  for (std::size_t i = 0; i < r.ks.size(); ++i)
    out << r.disorder << "," << r.ks[i] << "," << r.concept_agreement[i] << ","
        << r.ranking_agreement[i] << "\n";
  finish(out, path);
}

void write_agreement_json(const AgreementReport& r, const std::string& path) {
  nlohmann::json j;
  j["disorder"] = r.disorder;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    nlohmann::json row;
    row["k"] = r.ks[i];
    row["concept_agreement"] = r.concept_agreement[i];
    row["ranking_agreement"] = r.ranking_agreement[i];
    rows.push_back(row);
  }
  j["rows"] = rows;
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  finish(out, path);
}

void write_ablation_csv(const std::vector<AblateResult>& rows,
                        const std::string& path) {
  std::ofstream out = open_out(path);
  out << "mode,k,seed,test_acc,best_val_acc,concepts\n";
  for (const AblateResult& r : rows) {
    out << to_string(r.mode) << "," << r.k << "," << r.seed << ","
        << r.test_acc << "," << r.best_val_acc << ",";
    for (std::size_t i = 0; i < r.concept_ids.size(); ++i)
      out << (i ? ";" : "") << r.concept_ids[i];
    out << "\n";
  }
  finish(out, path);
}

}  // namespace cneuro
