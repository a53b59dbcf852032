#pragma once

// File writers for evaluation artifacts: similarity histograms as CSV and
// standalone SVG bar charts, agreement tables, ablation tables.

#include <string>
#include <vector>

#include "cneuro/evalkit.hpp"

namespace cneuro {

void write_histogram_csv(const SimilarityDistribution& d,
                         const std::string& path);
void write_histogram_svg(const SimilarityDistribution& d,
                         const std::string& title, const std::string& path);

void write_agreement_csv(const AgreementReport& r, const std::string& path);
void write_agreement_json(const AgreementReport& r, const std::string& path);

void write_ablation_csv(const std::vector<AblateResult>& rows,
                        const std::string& path);

}  // namespace cneuro
