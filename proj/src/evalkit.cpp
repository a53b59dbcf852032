#include "cneuro/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cneuro/error.hpp"

namespace cneuro {

using nlohmann::json;

double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw DimensionError("accuracy: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(labels.size()) +
                         " labels");
  if (predictions.empty()) throw InputError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double concept_agreement(const std::vector<std::string>& model_topk,
                         const std::vector<std::string>& expert_topk,
                         std::size_t k) {
  if (k == 0) throw InputError("concept agreement: k must be positive");
  if (model_topk.size() < k || expert_topk.size() < k)
    throw InputError("concept agreement: lists shorter than k=" +
                     std::to_string(k));
  std::set<std::string> expert(expert_topk.begin(),
                               expert_topk.begin() + static_cast<std::ptrdiff_t>(k));
  std::size_t shared = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (expert.count(model_topk[i])) ++shared;
  return static_cast<double>(shared) / static_cast<double>(k);
}

namespace {

// Column indices of the k largest scores, ties resolved by concept id.
std::vector<std::size_t> topk_by_score(const std::vector<double>& scores,
                                       const std::vector<std::string>& ids,
                                       std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  order.resize(k);
  return order;
}

}  // namespace

double ranking_agreement(
    const std::vector<std::vector<double>>& subject_scores,
    const std::vector<std::string>& concept_ids,
    const std::vector<std::string>& expert_topk, std::size_t k,
    std::size_t threshold, bool exact_subset) {
  if (subject_scores.empty()) throw InputError("ranking agreement: no subjects");
  if (k == 0) throw InputError("ranking agreement: k must be positive");
  if (k > concept_ids.size())
    throw InputError("ranking agreement: k exceeds the concept count");
  std::size_t need = exact_subset ? k : (threshold == 0 ? (k + 1) / 2 : threshold);
  if (need > k)
    throw InputError("ranking agreement: threshold exceeds k");

  std::set<std::string> expert(expert_topk.begin(), expert_topk.end());
  std::size_t matched = 0;
  for (const std::vector<double>& scores : subject_scores) {
    if (scores.size() != concept_ids.size())
      throw DimensionError("ranking agreement: score row width " +
                           std::to_string(scores.size()) + " vs " +
                           std::to_string(concept_ids.size()) + " concepts");
    std::size_t hits = 0;
    for (std::size_t col : topk_by_score(scores, concept_ids, k))
      if (expert.count(concept_ids[col])) ++hits;
    if (hits >= need) ++matched;
  }
  return static_cast<double>(matched) /
         static_cast<double>(subject_scores.size());
}

ExpertList load_expert_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open expert list " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("expert list " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("disorder") || !j.contains("topk"))
    throw SchemaError("expert list " + path +
                      ": expected {\"disorder\", \"topk\"}");
  ExpertList out;
  try {
    out.disorder = j.at("disorder").get<std::string>();
    const json& tk = j.at("topk");
    if (!tk.is_object())
      throw SchemaError("expert list " + path + ": topk must be an object");
    for (auto it = tk.begin(); it != tk.end(); ++it) {
      std::size_t k = 0;
      try {
        k = static_cast<std::size_t>(std::stoul(it.key()));
      } catch (const std::exception&) {
        throw SchemaError("expert list " + path + ": bad k key '" + it.key() +
                          "'");
      }
      if (k == 0)
        throw SchemaError("expert list " + path + ": k keys must be positive");
      out.topk[k] = it.value().get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw SchemaError("expert list " + path + ": " + e.what());
  }
  if (out.topk.empty())
    throw SchemaError("expert list " + path + ": topk is empty");
  return out;
}

AgreementReport agreement_report(Model& model, const Dataset& ds,
                                 const std::vector<Concept>& concepts,
                                 const std::string& split_name,
                                 const ExpertList& expert) {
  std::vector<std::string> ids;
  ids.reserve(concepts.size());
  for (const Concept& c : concepts) ids.push_back(c.id);

  std::vector<std::size_t> imp = importance_order(model.head, ids);
  std::vector<std::string> model_ranked;
  model_ranked.reserve(imp.size());
  for (std::size_t i : imp) model_ranked.push_back(ids[i]);

  const std::vector<std::size_t>& idx = ds.split(split_name);
  std::vector<std::vector<double>> scores;
  scores.reserve(idx.size());
  for (std::size_t i : idx)
    scores.push_back(evaluate_subject(model, ds.subjects[i], concepts).scores);

  AgreementReport rep;
  rep.disorder = expert.disorder;
  for (const auto& [k, list] : expert.topk) {
    rep.ks.push_back(k);
    rep.concept_agreement.push_back(concept_agreement(model_ranked, list, k));
    rep.ranking_agreement.push_back(ranking_agreement(scores, ids, list, k));
  }
  return rep;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DimensionError("cosine: length " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarityDistribution similarity_distribution(
    Model& model, const Dataset& ds, const std::vector<Concept>& concepts,
    const std::string& split_name, const std::string& concept_id) {
  std::size_t target = concepts.size();
  for (std::size_t i = 0; i < concepts.size(); ++i)
    if (concepts[i].id == concept_id) target = i;
  if (target == concepts.size())
    throw InputError("similarity: concept " + concept_id +
                     " is not in the model's list");

  SimilarityDistribution d;
  d.concept_id = concept_id;
  for (std::size_t i : ds.split(split_name)) {
    SubjectEval ev = evaluate_subject(model, ds.subjects[i], concepts);
    std::vector<double> h(ev.h.cols());
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = ev.h.at(target, j);
    d.similarities.push_back(cosine(ev.z, h));
  }

  const std::size_t bins = 20;
  d.counts.assign(bins, 0);
  d.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    d.edges[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins);
  for (double v : d.similarities) {
    double pos = (v + 1.0) / 2.0 * static_cast<double>(bins);
    auto bin = static_cast<std::ptrdiff_t>(pos);
    if (bin < 0) bin = 0;
    if (bin >= static_cast<std::ptrdiff_t>(bins))
      bin = static_cast<std::ptrdiff_t>(bins) - 1;
    d.counts[static_cast<std::size_t>(bin)] += 1;
  }
  return d;
}

std::vector<std::size_t> importance_order(const BottleneckParams& head,
                                          const std::vector<std::string>& ids) {
  if (ids.size() != head.cfg.num_concepts)
    throw DimensionError("importance: " + std::to_string(ids.size()) +
                         " ids vs " + std::to_string(head.cfg.num_concepts) +
                         " readout columns");
  std::vector<double> norm = concept_importance(head);
  std::vector<std::size_t> order(norm.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (norm[a] != norm[b]) return norm[a] > norm[b];
    return ids[a] < ids[b];
  });
  return order;
}

AblateMode ablate_mode_from_string(const std::string& s) {
  if (s == "full") return AblateMode::kFull;
  if (s == "random") return AblateMode::kRandom;
  if (s == "topk") return AblateMode::kTopK;
  throw InputError("unknown ablation mode '" + s + "'");
}

std::string to_string(AblateMode m) {
  switch (m) {
    case AblateMode::kFull: return "full";
    case AblateMode::kRandom: return "random";
    case AblateMode::kTopK: return "topk";
  }
  return "full";
}

std::vector<Concept> random_concepts(const Atlas& atlas,
                                     const std::vector<Concept>& like,
                                     std::uint64_t seed) {
  if (like.empty()) throw InputError("random concepts: empty size profile");
  std::vector<Concept> out;
  out.reserve(like.size());
  for (std::size_t i = 0; i < like.size(); ++i) {
    std::size_t na = like[i].set_a.size();
    std::size_t nb = like[i].set_b.size();
    if (na + nb > atlas.size())
      throw InputError("random concepts: atlas too small for the profile");
    RandomStream rng(RandomStream::mix(seed, i));
    std::set<int> seen;
    std::vector<int> draw;
    while (draw.size() < na + nb) {
      int roi = static_cast<int>(rng.below(atlas.size()));
      if (seen.insert(roi).second) draw.push_back(roi);
    }
    Concept c;
    char tag[16];
    std::snprintf(tag, sizeof tag, "random-%02zu", i);
    c.id = tag;
    c.disorder = like[i].disorder;
    c.raw_text = c.id;
    c.set_a.assign(draw.begin(), draw.begin() + static_cast<std::ptrdiff_t>(na));
    c.set_b.assign(draw.begin() + static_cast<std::ptrdiff_t>(na), draw.end());
    std::sort(c.set_a.begin(), c.set_a.end());
    std::sort(c.set_b.begin(), c.set_b.end());
    c.direction = 0;
    out.push_back(std::move(c));
  }
  return out;
}

AblateResult ablate(const Dataset& ds, const std::vector<Concept>& pool,
                    const TrainConfig& cfg, AblateMode mode, std::size_t k,
                    std::uint64_t seed) {
  std::vector<Concept> effective =
      cfg.n_c ? select_top(pool, *cfg.n_c) : pool;
  if (effective.empty()) throw InputError("ablation: empty concept pool");
  if (mode == AblateMode::kTopK && (k == 0 || k > effective.size()))
    throw InputError("ablation: k=" + std::to_string(k) +
                     " outside the pool of " +
                     std::to_string(effective.size()));

  Dataset local = ds;
  TrainConfig run_cfg = cfg;
  run_cfg.seed = seed;
  run_cfg.n_c.reset();
  split_dataset(local, run_cfg.train_ratio, run_cfg.val_ratio,
                run_cfg.test_ratio, seed);

  std::vector<Concept> chosen;
  switch (mode) {
    case AblateMode::kFull:
      chosen = effective;
      break;
    case AblateMode::kRandom:
      chosen = random_concepts(*local.atlas, effective, seed);
      break;
    case AblateMode::kTopK: {
      TrainResult full = train(local, effective, run_cfg);
      std::vector<std::string> ids;
      ids.reserve(effective.size());
      for (const Concept& c : effective) ids.push_back(c.id);
      std::vector<std::size_t> order =
          importance_order(full.checkpoint.model.head, ids);
      chosen.reserve(k);
      for (std::size_t i = 0; i < k; ++i) chosen.push_back(effective[order[i]]);
      break;
    }
  }

  TrainResult res = train(local, chosen, run_cfg);
  AblateResult out;
  out.mode = mode;
  out.k = mode == AblateMode::kTopK ? k : chosen.size();
  out.seed = seed;
  out.best_val_acc = res.checkpoint.best_val_acc;
  out.test_acc =
      split_accuracy(res.checkpoint.model, local, chosen, "test");
  for (const Concept& c : chosen) out.concept_ids.push_back(c.id);
  return out;
}

}  // namespace cneuro
