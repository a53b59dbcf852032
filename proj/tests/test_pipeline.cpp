#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "cneuro/error.hpp"
#include "cneuro/evalkit.hpp"
#include "cneuro/report.hpp"
#include "cneuro/synthcohort.hpp"
#include "cneuro/trainer.hpp"
#include "testutil.hpp"

using namespace cneuro;
using testutil::TempDir;

namespace {

CohortSpec tiny_spec(double effect = 0.4, std::uint64_t seed = 5) {
  CohortSpec spec;
  spec.num_rois = 12;
  spec.time_points = 80;
  spec.subjects = 40;
  spec.pool_size = 4;
  spec.seed = seed;
  Concept c;
  c.id = "planted-00";
  c.disorder = "synthetic";
  c.raw_text = c.id;
  c.set_a = {0, 1};
  c.set_b = {2, 3};
  c.direction = effect < 0 ? -1 : 1;
  spec.planted.push_back({c, effect, 1});
  return spec;
}

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batches_per_epoch = 2;
  cfg.pos_per_batch = 6;
  cfg.neg_per_batch = 6;
  cfg.validate_every = 1;
  cfg.patience = 10;
  cfg.hidden = 8;
  cfg.seed = 11;
  return cfg;
}

// Mean cross-set correlation of a region pair over one class.
double class_mean_cross(const Dataset& ds, const std::vector<int>& a,
                        const std::vector<int>& b, int label) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const SubjectGraph& g : ds.subjects) {
    if (g.label != label) continue;
    double s = 0.0;
    for (int u : a)
      for (int v : b)
        s += g.a(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    sum += s / static_cast<double>(a.size() * b.size());
    ++n;
  }
  return sum / static_cast<double>(n);
}

// Labels-only dataset for batching tests.
Dataset label_dataset(int num_classes, const std::vector<int>& labels) {
  Dataset ds;
  ds.num_classes = num_classes;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    SubjectGraph g;
    g.subject_id = "sub-" + std::to_string(i);
    g.label = labels[i];
    g.num_rois = 2;
    g.adjacency.assign(4, 0.0);
    g.zero_variance.assign(2, 0);
    ds.subjects.push_back(std::move(g));
  }
  return ds;
}

}  // namespace

TEST_CASE("cohort generation is deterministic and balanced") {
  CohortSpec spec = tiny_spec();
  SynthCohort a = generate_cohort(spec);
  SynthCohort b = generate_cohort(spec);

  REQUIRE(a.dataset.subjects.size() == 40);
  CHECK(a.dataset.num_classes == 2);
  CHECK(a.pool.size() == 4);
  REQUIRE(a.planted_ids.size() == 1);
  CHECK(a.planted_ids[0] == "planted-00");
  CHECK(a.pool[0].id == "planted-00");
  CHECK(a.pool[1].id.substr(0, 6) == "decoy-");

  int pos = 0;
  for (const SubjectGraph& g : a.dataset.subjects) pos += g.label;
  CHECK(pos == 20);

  for (std::size_t i = 0; i < a.dataset.subjects.size(); ++i) {
    CHECK(a.dataset.subjects[i].adjacency ==
          b.dataset.subjects[i].adjacency);
  }

  // decoys must stay clear of the planted regions
  std::set<int> planted_rois = {0, 1, 2, 3};
  for (std::size_t k = 1; k < a.pool.size(); ++k) {
    for (int u : a.pool[k].set_a) CHECK(!planted_rois.count(u));
    for (int v : a.pool[k].set_b) CHECK(!planted_rois.count(v));
  }
}

TEST_CASE("planted effects land near the requested correlation") {
  CohortSpec spec = tiny_spec(0.4);
  spec.time_points = 200;
  SynthCohort c = generate_cohort(spec);

  double hit = class_mean_cross(c.dataset, {0, 1}, {2, 3}, 1);
  double base = class_mean_cross(c.dataset, {0, 1}, {2, 3}, 0);
  CHECK(hit == doctest::Approx(0.4).epsilon(0.25));
  CHECK(std::fabs(base) < 0.08);

  // untouched region pair stays near zero for both classes
  CHECK(std::fabs(class_mean_cross(c.dataset, {6, 7}, {8, 9}, 1)) < 0.08);
  CHECK(std::fabs(class_mean_cross(c.dataset, {6, 7}, {8, 9}, 0)) < 0.08);

  // a stronger effect widens the class gap
  SynthCohort weak = generate_cohort([&] {
    CohortSpec s = tiny_spec(0.2);
    s.time_points = 200;
    return s;
  }());
  double gap_strong = hit - base;
  double gap_weak = class_mean_cross(weak.dataset, {0, 1}, {2, 3}, 1) -
                    class_mean_cross(weak.dataset, {0, 1}, {2, 3}, 0);
  CHECK(gap_strong > gap_weak);
  CHECK(gap_weak > 0.05);
}

TEST_CASE("negative effects push the correlation below zero") {
  CohortSpec spec = tiny_spec(-0.4);
  spec.time_points = 200;
  SynthCohort c = generate_cohort(spec);
  CHECK(class_mean_cross(c.dataset, {0, 1}, {2, 3}, 1) < -0.2);
}

TEST_CASE("balanced batches fill both classes and resample short ones") {
  std::vector<int> labels(50, 0);
  for (int i = 0; i < 20; ++i) labels[static_cast<std::size_t>(i)] = 1;
  Dataset ds = label_dataset(2, labels);
  std::vector<std::size_t> train_idx(50);
  for (std::size_t i = 0; i < 50; ++i) train_idx[i] = i;

  TrainConfig cfg;
  cfg.pos_per_batch = 16;
  cfg.neg_per_batch = 16;
  cfg.batches_per_epoch = 3;

  auto batches = balanced_batches(ds, train_idx, cfg, 7, 1);
  REQUIRE(batches.size() == 3);
  for (const auto& batch : batches) {
    REQUIRE(batch.size() == 32);
    std::set<std::size_t> pos_seen;
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(ds.subjects[batch[i]].label == 1);
      pos_seen.insert(batch[i]);
    }
    CHECK(pos_seen.size() == 16);  // 20 positives cover the demand distinctly
    for (std::size_t i = 16; i < 32; ++i)
      CHECK(ds.subjects[batch[i]].label == 0);
  }

  SUBCASE("short class appears fully before resampling") {
    std::vector<int> few(20, 0);
    for (int i = 0; i < 5; ++i) few[static_cast<std::size_t>(i)] = 1;
    Dataset small = label_dataset(2, few);
    std::vector<std::size_t> idx(20);
    for (std::size_t i = 0; i < 20; ++i) idx[i] = i;
    auto b = balanced_batches(small, idx, cfg, 7, 1);
    std::set<std::size_t> pos_seen(b[0].begin(), b[0].begin() + 16);
    CHECK(pos_seen.size() == 5);  // all five positives, rest resampled
    for (std::size_t i = 0; i < 16; ++i)
      CHECK(small.subjects[b[0][i]].label == 1);
  }

  SUBCASE("same seed and epoch reproduce, new epoch reshuffles") {
    auto again = balanced_batches(ds, train_idx, cfg, 7, 1);
    CHECK(again == batches);
    auto later = balanced_batches(ds, train_idx, cfg, 7, 2);
    CHECK(later != batches);
  }

  SUBCASE("an absent class is an error") {
    Dataset onesided = label_dataset(2, std::vector<int>(10, 0));
    std::vector<std::size_t> idx(10);
    for (std::size_t i = 0; i < 10; ++i) idx[i] = i;
    CHECK_THROWS_AS(balanced_batches(onesided, idx, cfg, 7, 1), InputError);
  }

  SUBCASE("multi-class datasets are rejected") {
    Dataset three = label_dataset(3, {0, 1, 2});
    CHECK_THROWS_AS(balanced_batches(three, {0, 1, 2}, cfg, 7, 1), InputError);
  }
}

TEST_CASE("stratified batches stay proportional with a floor of one") {
  std::vector<int> labels;
  for (int i = 0; i < 3; ++i) labels.push_back(0);
  for (int i = 0; i < 10; ++i) labels.push_back(1);
  for (int i = 0; i < 19; ++i) labels.push_back(2);
  Dataset ds = label_dataset(3, labels);
  std::vector<std::size_t> idx(labels.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  TrainConfig cfg;
  cfg.pos_per_batch = 16;
  cfg.neg_per_batch = 16;
  cfg.batches_per_epoch = 2;

  auto batches = stratified_batches(ds, idx, cfg, 3, 1);
  REQUIRE(batches.size() == 2);
  for (const auto& batch : batches) {
    REQUIRE(batch.size() == 32);
    std::size_t count[3] = {0, 0, 0};
    for (std::size_t s : batch)
      count[static_cast<std::size_t>(ds.subjects[s].label)] += 1;
    CHECK(count[0] == 3);
    CHECK(count[1] == 10);
    CHECK(count[2] == 19);
  }

  SUBCASE("rare classes still get a slot") {
    std::vector<int> skew(40, 2);
    skew[0] = 0;
    skew[1] = 1;
    Dataset ds2 = label_dataset(3, skew);
    std::vector<std::size_t> idx2(40);
    for (std::size_t i = 0; i < 40; ++i) idx2[i] = i;
    auto b = stratified_batches(ds2, idx2, cfg, 3, 1);
    std::size_t count[3] = {0, 0, 0};
    for (std::size_t s : b[0])
      count[static_cast<std::size_t>(ds2.subjects[s].label)] += 1;
    CHECK(count[0] >= 1);
    CHECK(count[1] >= 1);
    CHECK(count[0] + count[1] + count[2] == 32);
  }
}

TEST_CASE("a fixed batch at small lr gives non-increasing loss") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainConfig cfg = tiny_cfg();
  cfg.dropout = 0.0;
  cfg.lr = 1e-4;

  TrainState st = init_train(c.dataset, c.pool, cfg);
  std::vector<std::size_t> batch =
      balanced_batches(c.dataset, c.dataset.split("train"), cfg, 11, 1)[0];

  std::vector<double> losses;
  for (int i = 0; i < 10; ++i) losses.push_back(train_step(st, batch, nullptr));
  CHECK(losses.back() < losses.front());
  for (std::size_t i = 1; i < losses.size(); ++i)
    CHECK(losses[i] <= losses[i - 1]);
}

TEST_CASE("patience ends training after consecutive flat validations") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainConfig cfg = tiny_cfg();
  cfg.lr = 1e-30;  // freezes the model so accuracy never moves
  cfg.epochs = 50;
  cfg.patience = 1;

  TrainResult res = train(c.dataset, c.pool, cfg);
  CHECK(res.stopped_epoch == 2);
  REQUIRE(res.history.size() == 2);
  CHECK(res.history[0].improved);
  CHECK(!res.history[1].improved);
  CHECK(res.checkpoint.epoch == 1);
  CHECK(res.checkpoint.best_val_acc == res.history[0].val_acc);
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainConfig cfg = tiny_cfg();

  TrainResult r1 = train(c.dataset, c.pool, cfg);
  TrainResult r2 = train(c.dataset, c.pool, cfg);
  CHECK(r1.final_train_loss == r2.final_train_loss);
  CHECK(r1.checkpoint.best_val_acc == r2.checkpoint.best_val_acc);

  TempDir tmp;
  save_checkpoint(r1.checkpoint, tmp.file("a.json"));
  save_checkpoint(r2.checkpoint, tmp.file("b.json"));
  CHECK(testutil::read_file(tmp.file("a.json")) ==
        testutil::read_file(tmp.file("b.json")));

  Checkpoint loaded = load_checkpoint(tmp.file("a.json"));
  save_checkpoint(loaded, tmp.file("c.json"));
  CHECK(testutil::read_file(tmp.file("a.json")) ==
        testutil::read_file(tmp.file("c.json")));

  CHECK(loaded.concept_ids.size() == c.pool.size());
  CHECK(loaded.config.seed == cfg.seed);
  CHECK(loaded.config.hidden == cfg.hidden);
  CHECK(loaded.best_val_acc == r1.checkpoint.best_val_acc);
  CHECK(loaded.model.encoder.w_m1.values() ==
        r1.checkpoint.model.encoder.w_m1.values());
  CHECK(loaded.model.encoder.bn1.running_mean.values() ==
        r1.checkpoint.model.encoder.bn1.running_mean.values());

  SUBCASE("the loaded model scores subjects identically") {
    SubjectEval a =
        evaluate_subject(r1.checkpoint.model, c.dataset.subjects[0], c.pool);
    SubjectEval b = evaluate_subject(loaded.model, c.dataset.subjects[0], c.pool);
    CHECK(a.probs == b.probs);
    CHECK(a.scores == b.scores);
  }
}

TEST_CASE("broken or mismatched checkpoints are refused") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 1;
  TrainResult res = train(c.dataset, c.pool, cfg);

  TempDir tmp;
  save_checkpoint(res.checkpoint, tmp.file("ok.json"));

  SUBCASE("truncated file") {
    std::string whole = testutil::read_file(tmp.file("ok.json"));
    testutil::write_file(tmp.file("cut.json"), whole.substr(0, 120));
    CHECK_THROWS_AS(load_checkpoint(tmp.file("cut.json")), ParseError);
  }

  SUBCASE("unknown version") {
    std::string whole = testutil::read_file(tmp.file("ok.json"));
    auto at = whole.find("\"version\": \"1\"");
    REQUIRE(at != std::string::npos);
    whole.replace(at, 14, "\"version\": \"9\"");
    testutil::write_file(tmp.file("v9.json"), whole);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("v9.json")), SchemaError);
  }

  SUBCASE("concept list mismatch") {
    CHECK_NOTHROW(require_concepts_match(res.checkpoint, c.pool));
    std::vector<Concept> other = c.pool;
    other[0].set_a = {4, 5};
    other[0].set_b = {6, 7};
    CHECK_THROWS_AS(require_concepts_match(res.checkpoint, other), ConfigError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.json")), IoError);
  }
}

TEST_CASE("train config round-trips and hashes canonically") {
  TrainConfig cfg = tiny_cfg();
  cfg.n_c = 3;
  TempDir tmp;
  save_train_config(cfg, tmp.file("cfg.json"));
  TrainConfig back = load_train_config(tmp.file("cfg.json"));
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.lr == cfg.lr);
  CHECK(back.n_c == cfg.n_c);
  CHECK(back.seed == cfg.seed);
  CHECK(train_config_hash(back) == train_config_hash(cfg));

  TrainConfig other = cfg;
  other.seed = 999;
  CHECK(train_config_hash(other) != train_config_hash(cfg));

  TrainConfig bad = cfg;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.train_ratio = 0.9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("accuracy and agreement metrics match hand arithmetic") {
  CHECK(accuracy({1, 0, 1}, {1, 1, 1}) == 2.0 / 3.0);
  CHECK(accuracy({0, 0}, {0, 0}) == 1.0);
  CHECK(accuracy({1, 1}, {0, 0}) == 0.0);
  CHECK_THROWS_AS(accuracy({}, {}), InputError);
  CHECK_THROWS_AS(accuracy({1}, {1, 0}), DimensionError);

  std::vector<std::string> model = {"A", "B", "C"};
  std::vector<std::string> expert = {"A", "B", "D"};
  CHECK(concept_agreement(model, expert, 3) == 2.0 / 3.0);
  CHECK(concept_agreement(expert, model, 3) == 2.0 / 3.0);
  CHECK(concept_agreement(model, model, 3) == 1.0);
  CHECK(concept_agreement(model, {"X", "Y", "Z"}, 3) == 0.0);
  // only the first k entries participate
  CHECK(concept_agreement({"A", "X", "Y"}, {"A", "Q", "R"}, 1) == 1.0);
  CHECK_THROWS_AS(concept_agreement(model, expert, 0), InputError);
  CHECK_THROWS_AS(concept_agreement({"A"}, expert, 3), InputError);
}

TEST_CASE("ranking agreement applies the per-subject matched rule") {
  std::vector<std::string> ids = {"c0", "c1", "c2", "c3"};

  std::vector<std::string> narrow = {"c0"};
  std::vector<std::vector<double>> rows = {
      {0.9, 0.1, 0.0, 0.0},    // top-1 c0 -> hit
      {0.0, 0.9, 0.1, 0.0},    // top-1 c1 -> miss
      {0.5, 0.4, 0.0, 0.0}};   // top-1 c0 -> hit
  CHECK(ranking_agreement(rows, ids, narrow, 1) == 2.0 / 3.0);

  // matched rule at k=3 with overlaps {2, 1, 3} against ceil(3/2) = 2
  std::vector<std::string> exp2 = {"c2", "c3"};
  std::vector<std::vector<double>> m2 = {
      {0.0, 0.1, 0.9, 0.8},   // picks c2 c3 c1 -> 2 hits -> matched
      {0.9, 0.8, 0.7, 0.0},   // picks c0 c1 c2 -> 1 hit  -> not matched
      {0.1, 0.0, 0.9, 0.8}};  // picks c2 c3 c0 -> 2 hits -> matched
  CHECK(ranking_agreement(m2, ids, exp2, 3) == 2.0 / 3.0);

  SUBCASE("nested expert sets make the score monotone in k") {
    std::vector<std::string> e1 = {"c0"};
    std::vector<std::string> e2 = {"c0", "c1"};
    std::vector<std::string> e3 = {"c0", "c1", "c2"};
    double a1 = ranking_agreement(m2, ids, e1, 1);
    double a2 = ranking_agreement(m2, ids, e2, 2);
    double a3 = ranking_agreement(m2, ids, e3, 3);
    CHECK(a1 <= a2);
    CHECK(a2 <= a3);
  }

  SUBCASE("exact subset rule and errors") {
    // top-2 picks are {c2,c3}, {c0,c1}, {c2,c3}: two clean subsets
    CHECK(ranking_agreement(m2, ids, exp2, 2, 0, true) == 2.0 / 3.0);
    // demanding all 3 hits from a 2-element expert set matches nobody
    CHECK(ranking_agreement(m2, ids, exp2, 3, 3) == 0.0);
    CHECK_THROWS_AS(ranking_agreement({}, ids, exp2, 2), InputError);
    CHECK_THROWS_AS(ranking_agreement(m2, ids, exp2, 9), InputError);
  }
}

TEST_CASE("importance ordering ranks columns by norm with id ties") {
  BottleneckConfig bc;
  bc.num_classes = 2;
  bc.num_concepts = 3;
  bc.hidden = 4;
  RandomStream rng(1);
  BottleneckParams head = BottleneckParams::init(bc, rng);
  head.w.fill(0.0);
  head.w.at(0, 0) = 0.3;
  head.w.at(0, 1) = 0.7;
  head.w.at(0, 2) = 0.1;
  std::vector<std::string> ids = {"a", "b", "c"};
  CHECK(importance_order(head, ids) == std::vector<std::size_t>{1, 0, 2});

  head.w.fill(0.0);
  std::vector<std::string> scrambled = {"m", "a", "z"};
  CHECK(importance_order(head, scrambled) == std::vector<std::size_t>{1, 0, 2});
  CHECK_THROWS_AS(importance_order(head, {"a"}), DimensionError);
}

TEST_CASE("random concepts mirror the size profile deterministically") {
  auto atlas = testutil::make_atlas(20);
  SynthCohort c = generate_cohort(tiny_spec());
  std::vector<Concept> like = c.pool;

  std::vector<Concept> r1 = random_concepts(*atlas, like, 42);
  std::vector<Concept> r2 = random_concepts(*atlas, like, 42);
  REQUIRE(r1.size() == like.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].set_a.size() == like[i].set_a.size());
    CHECK(r1[i].set_b.size() == like[i].set_b.size());
    CHECK(r1[i].direction == 0);
    CHECK(r1[i].id == r2[i].id);
    CHECK(r1[i].set_a == r2[i].set_a);
    CHECK(r1[i].set_b == r2[i].set_b);
    r1[i].validate(atlas->size());
  }
  std::vector<Concept> r3 = random_concepts(*atlas, like, 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < r1.size(); ++i)
    if (r3[i].set_a != r1[i].set_a || r3[i].set_b != r1[i].set_b)
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("similarity distribution covers the split and stays in range") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainResult res = train(c.dataset, c.pool, tiny_cfg());

  SimilarityDistribution d = similarity_distribution(
      res.checkpoint.model, c.dataset, c.pool, "test", "planted-00");
  CHECK(d.concept_id == "planted-00");
  CHECK(d.similarities.size() == c.dataset.split("test").size());
  REQUIRE(d.counts.size() == 20);
  REQUIRE(d.edges.size() == 21);
  CHECK(d.edges.front() == -1.0);
  CHECK(d.edges.back() == 1.0);
  std::size_t total = 0;
  for (std::size_t n : d.counts) total += n;
  CHECK(total == d.similarities.size());
  for (double v : d.similarities) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(similarity_distribution(res.checkpoint.model, c.dataset,
                                          c.pool, "test", "nope"),
                  InputError);
}

TEST_CASE("cosine handles zero vectors and rescaling") {
  CHECK(cosine({1, 0}, {0, 1}) == 0.0);
  CHECK(cosine({1, 2}, {2, 4}) == doctest::Approx(1.0));
  CHECK(cosine({1, 2}, {-2, -4}) == doctest::Approx(-1.0));
  CHECK(cosine({0, 0}, {1, 2}) == 0.0);
  CHECK(cosine({3, 4}, {30, 40}) == doctest::Approx(cosine({3, 4}, {3, 4})));
  CHECK_THROWS_AS(cosine({1}, {1, 2}), DimensionError);
}

TEST_CASE("expert lists load and drive an agreement report") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainResult res = train(c.dataset, c.pool, tiny_cfg());

  TempDir tmp;
  testutil::write_file(
      tmp.file("expert.json"),
      "{\"disorder\": \"synthetic\", \"topk\": {\"2\": [\"planted-00\", "
      "\"decoy-00\"], \"3\": [\"planted-00\", \"decoy-00\", \"decoy-01\"]}}");
  ExpertList ex = load_expert_list(tmp.file("expert.json"));
  CHECK(ex.disorder == "synthetic");
  REQUIRE(ex.topk.size() == 2);
  REQUIRE(ex.topk.count(2) == 1);
  CHECK(ex.topk.at(2).size() == 2);

  AgreementReport rep = agreement_report(res.checkpoint.model, c.dataset,
                                         c.pool, "test", ex);
  CHECK(rep.disorder == "synthetic");
  REQUIRE(rep.ks == std::vector<std::size_t>{2, 3});
  for (double v : rep.concept_agreement) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (double v : rep.ranking_agreement) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  testutil::write_file(tmp.file("bad.json"), "{\"disorder\": \"x\"}");
  CHECK_THROWS_AS(load_expert_list(tmp.file("bad.json")), SchemaError);
  testutil::write_file(tmp.file("zero.json"),
                       "{\"disorder\": \"x\", \"topk\": {\"0\": []}}");
  CHECK_THROWS_AS(load_expert_list(tmp.file("zero.json")), SchemaError);
}

TEST_CASE("ablation trains each mode fresh and reports test accuracy") {
  SynthCohort c = generate_cohort(tiny_spec());
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 2;

  AblateResult full = ablate(c.dataset, c.pool, cfg, AblateMode::kFull, 0, 11);
  CHECK(full.concept_ids.size() == c.pool.size());
  CHECK(full.test_acc >= 0.0);
  CHECK(full.test_acc <= 1.0);

  AblateResult top = ablate(c.dataset, c.pool, cfg, AblateMode::kTopK, 2, 11);
  CHECK(top.concept_ids.size() == 2);
  CHECK(top.k == 2);

  AblateResult rnd1 =
      ablate(c.dataset, c.pool, cfg, AblateMode::kRandom, 0, 11);
  AblateResult rnd2 =
      ablate(c.dataset, c.pool, cfg, AblateMode::kRandom, 0, 11);
  CHECK(rnd1.concept_ids == rnd2.concept_ids);
  CHECK(rnd1.test_acc == rnd2.test_acc);
  CHECK(rnd1.concept_ids[0].substr(0, 7) == "random-");

  CHECK_THROWS_AS(ablate(c.dataset, c.pool, cfg, AblateMode::kTopK, 99, 11),
                  InputError);
}

TEST_CASE("metrics, histogram and table writers emit well-formed files") {
  TempDir tmp;

  SimilarityDistribution d;
  d.concept_id = "planted-00";
  d.similarities = {0.95, 0.91, -0.2, 0.4};
  d.edges.resize(21);
  for (int i = 0; i <= 20; ++i) d.edges[static_cast<std::size_t>(i)] = -1.0 + 0.1 * i;
  d.counts.assign(20, 0);
  d.counts[19] = 2;
  d.counts[8] = 1;
  d.counts[14] = 1;

  write_histogram_svg(d, "similarity: planted-00", tmp.file("h.svg"));
  std::string svg = testutil::read_file(tmp.file("h.svg"));
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);
  CHECK(svg.find("planted-00") != std::string::npos);

  write_histogram_csv(d, tmp.file("h.csv"));
  std::string csv = testutil::read_file(tmp.file("h.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
  CHECK(csv.rfind("bin_lo,bin_hi,count", 0) == 0);

  AgreementReport rep;
  rep.disorder = "synthetic";
  rep.ks = {3, 5};
  rep.concept_agreement = {2.0 / 3.0, 0.8};
  rep.ranking_agreement = {0.5, 0.75};
  write_agreement_csv(rep, tmp.file("agree.csv"));
  write_agreement_json(rep, tmp.file("agree.json"));
  CHECK(testutil::read_file(tmp.file("agree.csv"))
            .rfind("disorder,k,concept_agreement,ranking_agreement", 0) == 0);
  CHECK(testutil::read_file(tmp.file("agree.json")).find("0.8") !=
        std::string::npos);

  AblateResult row;
  row.mode = AblateMode::kTopK;
  row.k = 5;
  row.seed = 3;
  row.test_acc = 0.9;
  row.best_val_acc = 0.95;
  row.concept_ids = {"a", "b"};
  write_ablation_csv({row}, tmp.file("abl.csv"));
  std::string abl = testutil::read_file(tmp.file("abl.csv"));
  CHECK(abl.find("topk,5,3,0.9,0.95,a;b") != std::string::npos);
}

TEST_CASE("metrics csv mirrors the validation history") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainResult res = train(c.dataset, c.pool, tiny_cfg());

  TempDir tmp;
  save_metrics_csv(res, tmp.file("m.csv"));
  std::string csv = testutil::read_file(tmp.file("m.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        static_cast<std::ptrdiff_t>(res.history.size()) + 1);
  CHECK(csv.rfind("epoch,train_loss,val_acc,best_val_acc,improved", 0) == 0);
}

TEST_CASE("concept cap n_c keeps only the leading concepts") {
  SynthCohort c = generate_cohort(tiny_spec());
  split_dataset(c.dataset, 0.7, 0.1, 0.2, 11);
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 1;
  cfg.n_c = 2;
  TrainResult res = train(c.dataset, c.pool, cfg);
  REQUIRE(res.checkpoint.concept_ids.size() == 2);
  CHECK(res.checkpoint.concept_ids[0] == c.pool[0].id);
  CHECK(res.checkpoint.concept_ids[1] == c.pool[1].id);
  CHECK(res.checkpoint.model.head.cfg.num_concepts == 2);
}
