#include "cneuro/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cneuro/error.hpp"
#include "cneuro/rng.hpp"

namespace fs = std::filesystem;

namespace cneuro {

const std::vector<std::size_t>& Dataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) {
    throw InputError("dataset: no split named '" + name + "'");
  }
  return it->second;
}

void Dataset::validate() const {
  if (!atlas) throw InputError("dataset: missing atlas");
  if (num_classes < 2) throw SchemaError("dataset: num_classes must be >= 2");
  std::set<std::string> ids;
  for (const SubjectGraph& s : subjects) {
    if (s.num_rois != atlas->size()) {
      throw DimensionError("dataset: subject '" + s.subject_id + "' has " +
                           std::to_string(s.num_rois) + " ROIs, atlas has " +
                           std::to_string(atlas->size()));
    }
    if (s.label < 0 || s.label >= num_classes) {
      throw SchemaError("dataset: subject '" + s.subject_id + "' label " +
                        std::to_string(s.label) + " out of range for " +
                        std::to_string(num_classes) + " classes");
    }
    if (!ids.insert(s.subject_id).second) {
      throw SchemaError("dataset: duplicate subject id '" + s.subject_id + "'");
    }
  }
  // Splits, when present, must be disjoint and cover all subjects.
  if (!splits.empty()) {
    std::vector<int> seen(subjects.size(), 0);
    for (const auto& [name, idx] : splits) {
      for (std::size_t i : idx) {
        if (i >= subjects.size()) {
          throw SchemaError("dataset: split '" + name + "' references subject index " +
                            std::to_string(i));
        }
        if (seen[i]++) {
          throw SchemaError("dataset: subject index " + std::to_string(i) +
                            " appears in more than one split");
        }
      }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) {
        throw SchemaError("dataset: subject index " + std::to_string(i) +
                          " is not in any split");
      }
    }
  }
}

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("dataset: cannot open manifest '" + manifest_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("dataset: invalid JSON in '" + manifest_path + "': " + e.what());
  }
  for (const char* field : {"atlas", "num_classes", "subjects"}) {
    if (!j.contains(field)) {
      throw ParseError("dataset: manifest missing field '" + std::string(field) + "'");
    }
  }

  fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&base](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  Dataset ds;
  ds.atlas = std::make_shared<Atlas>(load_atlas(resolve(j.at("atlas").get<std::string>())));
  ds.num_classes = j.at("num_classes").get<int>();

  const auto& subjects = j.at("subjects");
  if (!subjects.is_array() || subjects.empty()) {
    throw ParseError("dataset: 'subjects' must be a non-empty array");
  }
  const std::size_t n = ds.atlas->size();
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& sj = subjects[i];
    for (const char* field : {"id", "path", "kind", "label"}) {
      if (!sj.contains(field)) {
        throw ParseError("dataset: subject " + std::to_string(i) + " missing field '" +
                         std::string(field) + "'");
      }
    }
    std::string id = sj.at("id").get<std::string>();
    std::string kind = sj.at("kind").get<std::string>();
    std::string path = resolve(sj.at("path").get<std::string>());
    int label = sj.at("label").get<int>();

    SubjectGraph g;
    if (kind == "timeseries") {
      CsvMatrix m = load_csv_matrix(path);
      if (m.cols != n) {
        throw DimensionError("dataset: subject '" + id + "' series has " +
                             std::to_string(m.cols) + " columns, atlas has " +
                             std::to_string(n));
      }
      RoiTimeSeries ts;
      ts.subject_id = id;
      ts.time_points = m.rows;
      ts.num_rois = m.cols;
      ts.data = std::move(m.values);
      g = pearson_fc(ts);
    } else if (kind == "fc") {
      CsvMatrix m = load_csv_matrix(path);
      if (m.rows != n || m.cols != n) {
        throw DimensionError("dataset: subject '" + id + "' fc matrix is " +
                             std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                             ", atlas has " + std::to_string(n) + " ROIs");
      }
      g = graph_from_fc_matrix(id, n, m.values);
    } else {
      throw SchemaError("dataset: subject '" + id + "' has unknown kind '" + kind + "'");
    }
    g.label = label;
    ds.subjects.push_back(std::move(g));
  }
  ds.validate();
  return ds;
}

void split_dataset(Dataset& ds, double train_ratio, double val_ratio, double test_ratio,
                   std::uint64_t seed) {
  const double ratios[3] = {train_ratio, val_ratio, test_ratio};
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw InputError("split: ratios must be positive");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw InputError("split: ratios must sum to 1");

  // Group subject indices by label, preserving manifest order before shuffle.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    by_class[ds.subjects[i].label].push_back(i);
  }
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < 3) {
      throw InputError("split: class " + std::to_string(label) + " has only " +
                       std::to_string(idx.size()) + " subjects, need >= 3");
    }
  }

  RandomStream rng(seed);
  std::vector<std::vector<std::size_t>> parts(3);
  for (auto& [label, idx] : by_class) {
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    // Largest-remainder apportionment, then steal from the biggest part if a
    // part would otherwise be empty.
    std::size_t count[3];
    double frac[3];
    std::size_t assigned = 0;
    for (int p = 0; p < 3; ++p) {
      double exact = ratios[p] * static_cast<double>(n);
      count[p] = static_cast<std::size_t>(std::floor(exact + 1e-12));
      frac[p] = exact - static_cast<double>(count[p]);
      assigned += count[p];
    }
    while (assigned < n) {
      int best = 0;
      for (int p = 1; p < 3; ++p) {
        if (frac[p] > frac[best] + 1e-12) best = p;
      }
      ++count[best];
      frac[best] = -1.0;
      ++assigned;
    }
    for (int p = 0; p < 3; ++p) {
      if (count[p] == 0) {
        int donor = 0;
        for (int q = 1; q < 3; ++q) {
          if (count[q] > count[donor]) donor = q;
        }
        --count[donor];
        ++count[p];
      }
    }
    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t k = 0; k < count[p]; ++k) parts[p].push_back(idx[pos++]);
    }
  }

  for (auto& part : parts) std::sort(part.begin(), part.end());
  ds.splits.clear();
  ds.splits["train"] = std::move(parts[0]);
  ds.splits["val"] = std::move(parts[1]);
  ds.splits["test"] = std::move(parts[2]);
  ds.validate();
}

void save_dataset_fc(const Dataset& ds, const std::string& atlas_path,
                     const std::string& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::json manifest;
  manifest["atlas"] = atlas_path;
  manifest["num_classes"] = ds.num_classes;
  nlohmann::json subjects = nlohmann::json::array();
  for (const SubjectGraph& g : ds.subjects) {
    std::string fname = g.subject_id + "_fc.csv";
    save_csv_matrix((fs::path(out_dir) / fname).string(), g.num_rois, g.num_rois,
                    g.adjacency);
    nlohmann::json sj;
    sj["id"] = g.subject_id;
    sj["path"] = fname;
    sj["kind"] = "fc";
    sj["label"] = g.label;
    subjects.push_back(sj);
  }
  manifest["subjects"] = subjects;
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw IoError("dataset: cannot write manifest in '" + out_dir + "'");
  out << manifest.dump(2) << "\n";
}

}  // namespace cneuro
