#include "cneuro/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>

#include <json.hpp>

#include "cneuro/error.hpp"
#include "cneuro/rng.hpp"

namespace cneuro {

using nlohmann::json;

void CohortSpec::validate() const {
  if (num_rois < 2) throw InputError("cohort spec: need at least 2 ROIs");
  if (time_points < 3) throw InputError("cohort spec: need at least 3 time points");
  if (classes < 2) throw InputError("cohort spec: need at least 2 classes");
  if (subjects < static_cast<std::size_t>(3 * classes))
    throw InputError("cohort spec: need at least 3 subjects per class");
  if (!(noise_std > 0.0)) throw InputError("cohort spec: noise_std must be positive");
  if (!(decoy_corr_max >= 0.0 && decoy_corr_max <= 0.6))
    throw InputError("cohort spec: decoy_corr_max outside [0, 0.6]");
  if (pool_size < planted.size())
    throw InputError("cohort spec: pool smaller than the planted list");
  for (const PlantedEffect& p : planted) {
    if (!(std::fabs(p.effect) <= 0.6))
      throw InputError("cohort spec: effect " + std::to_string(p.effect) +
                       " outside [-0.6, 0.6]");
    if (p.affected_class < 0 || p.affected_class >= classes)
      throw InputError("cohort spec: affected class " +
                       std::to_string(p.affected_class) + " out of range");
    p.what.validate(num_rois);
    if (!p.what.resolved())
      throw InputError("cohort spec: planted concept " + p.what.id +
                       " has empty sides");
  }
}

namespace {

Concept planted_concept(const std::string& id, std::vector<int> a,
                        std::vector<int> b, int direction) {
  Concept c;
  c.id = id;
  c.disorder = "synthetic";
  c.raw_text = id;
  c.set_a = std::move(a);
  c.set_b = std::move(b);
  c.direction = direction;
  return c;
}

}  // namespace

CohortSpec default_cohort_spec() {
  CohortSpec spec;
  spec.planted.push_back(
      {planted_concept("planted-00", {0, 1, 2}, {3, 4, 5}, 1), 0.4, 1});
  spec.planted.push_back(
      {planted_concept("planted-01", {6, 7}, {8, 9}, -1), -0.4, 0});
  spec.planted.push_back(
      {planted_concept("planted-02", {12, 13}, {14, 15}, 1), 0.3, 1});
  return spec;
}

Atlas make_synthetic_atlas(std::size_t n) {
  std::vector<RoiRecord> rois;
  rois.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RoiRecord r;
    r.id = static_cast<int>(i);
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%03zu", i);
    r.name = buf;
    r.hemisphere = i % 2 == 0 ? Hemisphere::kLeft : Hemisphere::kRight;
    rois.push_back(std::move(r));
  }
  return Atlas(std::move(rois));
}

SynthCohort generate_cohort(const CohortSpec& spec) {
  spec.validate();

  SynthCohort out;
  out.dataset.atlas = std::make_shared<Atlas>(make_synthetic_atlas(spec.num_rois));
  out.dataset.num_classes = spec.classes;

  // concept pool first: planted, then decoys over untouched ROIs
  std::set<int> used;
  for (const PlantedEffect& p : spec.planted) {
    used.insert(p.what.set_a.begin(), p.what.set_a.end());
    used.insert(p.what.set_b.begin(), p.what.set_b.end());
    out.pool.push_back(p.what);
    out.planted_ids.push_back(p.what.id);
  }
  std::vector<int> free_rois;
  for (std::size_t i = 0; i < spec.num_rois; ++i)
    if (!used.count(static_cast<int>(i))) free_rois.push_back(static_cast<int>(i));

  RandomStream pool_rng(RandomStream::mix(spec.seed, 0x9E3779B97F4A7C15ULL));
  for (std::size_t k = out.pool.size(); k < spec.pool_size; ++k) {
    const std::size_t na = 2 + pool_rng.below(2);
    const std::size_t nb = 2 + pool_rng.below(2);
    if (free_rois.size() < na + nb)
      throw InputError("cohort spec: not enough untouched ROIs for decoy concepts");
    std::vector<int> draw = free_rois;
    pool_rng.shuffle(draw);
    std::vector<int> a(draw.begin(), draw.begin() + static_cast<long>(na));
    std::vector<int> b(draw.begin() + static_cast<long>(na),
                       draw.begin() + static_cast<long>(na + nb));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    char buf[16];
    std::snprintf(buf, sizeof buf, "decoy-%02zu", k - spec.planted.size());
    out.pool.push_back(planted_concept(buf, std::move(a), std::move(b), 0));
  }
  for (const Concept& c : out.pool) c.validate(spec.num_rois);

  for (std::size_t s = 0; s < spec.subjects; ++s) {
    const int label = static_cast<int>(s % static_cast<std::size_t>(spec.classes));
    RandomStream rng(RandomStream::mix(spec.seed, s));

    RoiTimeSeries ts;
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth-%03zu", s);
    ts.subject_id = buf;
    ts.time_points = spec.time_points;
    ts.num_rois = spec.num_rois;
    ts.data.resize(spec.time_points * spec.num_rois);
    for (double& x : ts.data) x = rng.normal();

    // every subject consumes the same random layout; unaffected classes just
    // mix with amplitude zero, so classes differ only through the effects
    std::vector<double> latent(spec.time_points);
    for (const PlantedEffect& p : spec.planted) {
      for (double& l : latent) l = rng.normal();
      if (label != p.affected_class || p.effect == 0.0) continue;
      const double e = std::fabs(p.effect);
      const double amp = std::sqrt(e / (1.0 - e));
      const double sign_b = p.effect < 0.0 ? -amp : amp;
      for (std::size_t t = 0; t < spec.time_points; ++t) {
        for (int u : p.what.set_a) ts.at(t, static_cast<std::size_t>(u)) += amp * latent[t];
        for (int v : p.what.set_b)
          ts.at(t, static_cast<std::size_t>(v)) += sign_b * latent[t];
      }
    }
    // class-neutral structure in the decoy regions: each decoy block gets its
    // own latent at a per-subject strength, so global connectivity varies
    // between subjects without carrying any label signal
    if (spec.decoy_corr_max > 0.0) {
      for (std::size_t k = spec.planted.size(); k < out.pool.size(); ++k) {
        for (double& l : latent) l = rng.normal();
        const double c = spec.decoy_corr_max * rng.uniform();
        const double amp = std::sqrt(c / (1.0 - c));
        const Concept& d = out.pool[k];
        for (std::size_t t = 0; t < spec.time_points; ++t) {
          for (int u : d.set_a) ts.at(t, static_cast<std::size_t>(u)) += amp * latent[t];
          for (int v : d.set_b) ts.at(t, static_cast<std::size_t>(v)) += amp * latent[t];
        }
      }
    }
    if (spec.noise_std != 1.0)
      for (double& x : ts.data) x *= spec.noise_std;

    SubjectGraph g = pearson_fc(ts);
    g.label = label;
    out.dataset.subjects.push_back(std::move(g));
  }

  out.dataset.validate();
  return out;
}

namespace {

json concept_to_json(const Concept& c) {
  json j;
  j["id"] = c.id;
  j["set_a"] = c.set_a;
  j["set_b"] = c.set_b;
  j["direction"] = c.direction;
  return j;
}

Concept concept_from_json(const json& j) {
  Concept c;
  c.id = j.at("id").get<std::string>();
  c.disorder = "synthetic";
  c.raw_text = c.id;
  c.set_a = j.at("set_a").get<std::vector<int>>();
  c.set_b = j.at("set_b").get<std::vector<int>>();
  c.direction = j.value("direction", 0);
  return c;
}

json spec_to_json(const CohortSpec& spec) {
  json j;
  j["num_rois"] = spec.num_rois;
  j["time_points"] = spec.time_points;
  j["subjects"] = spec.subjects;
  j["classes"] = spec.classes;
  j["noise_std"] = spec.noise_std;
  j["decoy_corr_max"] = spec.decoy_corr_max;
  j["seed"] = spec.seed;
  j["pool_size"] = spec.pool_size;
  j["planted"] = json::array();
  for (const PlantedEffect& p : spec.planted) {
    json e = concept_to_json(p.what);
    e["effect"] = p.effect;
    e["class"] = p.affected_class;
    j["planted"].push_back(std::move(e));
  }
  return j;
}

CohortSpec spec_from_json(const json& j) {
  CohortSpec spec;
  spec.num_rois = j.value("num_rois", spec.num_rois);
  spec.time_points = j.value("time_points", spec.time_points);
  spec.subjects = j.value("subjects", spec.subjects);
  spec.classes = j.value("classes", spec.classes);
  spec.noise_std = j.value("noise_std", spec.noise_std);
  spec.decoy_corr_max = j.value("decoy_corr_max", spec.decoy_corr_max);
  spec.seed = j.value("seed", spec.seed);
  spec.pool_size = j.value("pool_size", spec.pool_size);
  if (j.contains("planted")) {
    for (const json& e : j.at("planted")) {
      PlantedEffect p;
      p.what = concept_from_json(e);
      p.effect = e.at("effect").get<double>();
      p.affected_class = e.at("class").get<int>();
      spec.planted.push_back(std::move(p));
    }
  }
  return spec;
}

}  // namespace

void save_ground_truth(const SynthCohort& cohort, const CohortSpec& spec,
                       const std::string& path) {
  json j;
  j["planted"] = cohort.planted_ids;
  j["spec"] = spec_to_json(spec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out.good()) throw IoError("failed writing " + path);
}

CohortSpec load_cohort_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  CohortSpec spec = spec_from_json(j);
  spec.validate();
  return spec;
}

void save_cohort_spec(const CohortSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << spec_to_json(spec).dump(2) << "\n";
  if (!out.good()) throw IoError("failed writing " + path);
}

}  // namespace cneuro
