#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <utility>

#include "cneuro/adam.hpp"
#include "cneuro/bottleneck.hpp"
#include "cneuro/encoder.hpp"
#include "cneuro/error.hpp"
#include "cneuro/gradcheck.hpp"
#include "cneuro/trainer.hpp"
#include "cneuro/rng.hpp"
#include "testutil.hpp"

using namespace cneuro;
using testutil::random_graph;

namespace {

SubjectGraph graph_from(std::size_t n, const std::vector<double>& adj,
                        const std::string& id = "s0") {
  SubjectGraph g;
  g.subject_id = id;
  g.num_rois = n;
  g.adjacency = adj;
  g.zero_variance.assign(n, 0);
  return g;
}

Concept simple_concept(std::vector<int> a, std::vector<int> b,
                       const std::string& id = "c0", int direction = 0) {
  Concept c;
  c.id = id;
  c.disorder = "Test";
  c.raw_text = id;
  c.set_a = std::move(a);
  c.set_b = std::move(b);
  c.direction = direction;
  return c;
}

const EncodeOptions kEval{};

}  // namespace

TEST_CASE("node features carry identity and average neighbor degree") {
  // triangle, all edges above threshold
  SubjectGraph tri = graph_from(3, {0, 0.5, 0.4, 0.5, 0, -0.6, 0.4, -0.6, 0});
  EncoderConfig cfg;
  cfg.atlas_size = 3;
  GraphInputs gi = subject_inputs(tri, cfg);
  CHECK(gi.features.rows() == 3);
  CHECK(gi.features.cols() == 4);
  for (std::size_t u = 0; u < 3; ++u) {
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(gi.features.at(u, j) == (u == j ? 1.0 : 0.0));
    CHECK(gi.features.at(u, 3) == 2.0);
  }
  // aggregation weights: weight / degree
  CHECK(gi.norm_adj.at(0, 1) == doctest::Approx(0.25));
  CHECK(gi.norm_adj.at(1, 2) == doctest::Approx(-0.3));

  // path 0-1-2: degrees 1,2,1; average neighbor degree 2,1,2
  SubjectGraph path = graph_from(3, {0, 0.5, 0, 0.5, 0, 0.5, 0, 0.5, 0});
  GraphInputs pi = subject_inputs(path, cfg);
  CHECK(pi.features.at(0, 3) == 2.0);
  CHECK(pi.features.at(1, 3) == 1.0);
  CHECK(pi.features.at(2, 3) == 2.0);
  CHECK(pi.norm_adj.at(1, 0) == doctest::Approx(0.25));  // 0.5 / deg 2

  // sub-threshold edges leave nodes isolated with zero extra feature
  EncoderConfig cfg2;
  cfg2.atlas_size = 2;
  SubjectGraph weak = graph_from(2, {0, 0.2, 0.2, 0});
  GraphInputs wi = subject_inputs(weak, cfg2);
  CHECK(wi.features.at(0, 2) == 0.0);
  CHECK(wi.norm_adj.at(0, 1) == 0.0);
}

TEST_CASE("masked adjacency keeps weights, drops weak edges") {
  SubjectGraph g = graph_from(3, {0, 0.31, -0.29, 0.31, 0, 0.9, -0.29, 0.9, 0});
  Tensor m = masked_adjacency(g, 0.3);
  CHECK(m.at(0, 1) == 0.31);
  CHECK(m.at(0, 2) == 0.0);
  CHECK(m.at(1, 2) == 0.9);
  CHECK(m.at(0, 0) == 0.0);
}

TEST_CASE("concept subgraph is the bipartite block only") {
  // 4 nodes; strong edges everywhere
  SubjectGraph g = graph_from(4, {0,    0.8,  0.7, -0.6,  //
                                  0.8,  0,    0.5, 0.4,   //
                                  0.7,  0.5,  0,   0.9,   //
                                  -0.6, 0.4,  0.9, 0});
  Concept c = simple_concept({0, 1}, {2, 3});
  Tensor m = concept_masked_adjacency(g, c, 0.3);
  // within-side pairs (0,1) and (2,3) stay disconnected
  CHECK(m.at(0, 1) == 0.0);
  CHECK(m.at(2, 3) == 0.0);
  CHECK(m.at(0, 2) == 0.7);
  CHECK(m.at(2, 0) == 0.7);
  CHECK(m.at(1, 3) == 0.4);
  CHECK(m.at(0, 3) == -0.6);

  EncoderConfig cfg;
  cfg.atlas_size = 4;
  GraphInputs gi = concept_inputs(g, c, cfg);
  CHECK(gi.nodes() == 4);
  CHECK(gi.features.at(0, 0) == 1.0);  // node 0 -> atlas 0
  CHECK(gi.features.at(2, 2) == 1.0);  // third row is set_b[0] = atlas 2
  // all degrees 2 in the bipartite block
  CHECK(gi.features.at(0, 4) == 2.0);

  Concept bad = simple_concept({0}, {9});
  CHECK_THROWS_AS(concept_inputs(g, bad, cfg), DimensionError);
  Concept dangling = simple_concept({}, {});
  dangling.unresolved = "no-regions";
  CHECK_THROWS_AS(concept_masked_adjacency(g, dangling, 0.3), InputError);
}

TEST_CASE("two-node forward pass matches hand computation") {
  EncoderConfig cfg;
  cfg.atlas_size = 2;
  cfg.hidden = 2;
  EncoderParams p;
  p.cfg = cfg;
  p.w_m1 = Tensor::matrix(3, 2, {1, 0, 0, 1, 1, 1});
  p.w_s1 = Tensor::matrix(3, 2, {1, 1, 1, 1, 0, 0});
  p.bn1_gamma = Tensor::vector({2, 2});
  p.bn1_beta = Tensor::vector({0.1, 0.1});
  p.w_m2 = Tensor::matrix(2, 2, {0, 1, 1, 0});
  p.w_s2 = Tensor::matrix(2, 2, {1, 0, 0, 1});
  p.bn2_gamma = Tensor::vector({1, 1});
  p.bn2_beta = Tensor::vector({1, 1});
  p.attn_w = Tensor::vector({1, 0});
  p.bn1 = BatchNormState(2);
  p.bn1.running_mean = Tensor::vector({1.5, 1.5});
  p.bn1.running_var = Tensor::vector({1 - 1e-5, 1 - 1e-5});
  p.bn2 = BatchNormState(2);
  p.bn2.running_mean = Tensor::vector({0.9, 0.9});
  p.bn2.running_var = Tensor::vector({1 - 1e-5, 1 - 1e-5});

  SubjectGraph g = graph_from(2, {0, 0.5, 0.5, 0});
  GraphInputs gi = subject_inputs(g, cfg);
  // features: [1,0,1] and [0,1,1]; norm_adj entries 0.5
  CHECK(gi.features.at(0, 2) == 1.0);

  // layer 1: self [1,1]; message from the other node scaled by 0.5
  //   node0 pre = [1,1] + 0.5*[1,2] = [1.5, 2.0]
  //   node1 pre = [1,1] + 0.5*[2,1] = [2.0, 1.5]
  // bn1(eval): ((pre-1.5)/1)*2 + 0.1 -> node0 [0.1, 1.1], node1 [1.1, 0.1]
  // layer 2: node0 pre = [0.1,1.1] + 0.5*([1.1,0.1]*swap) = [0.15, 1.65]
  //   bn2 -> node0 [0.25, 1.75], node1 [1.75, 0.25]
  Tape t;
  EncoderRefs enc = lift(t, p, false);
  auto pooled = encode_graph(t, enc, gi, PoolMode::kMean, kEval);
  CHECK(t.value(pooled).at(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t.value(pooled).at(1) == doctest::Approx(1.0).epsilon(1e-9));

  auto full = encode_graph_full(t, enc, gi, PoolMode::kAttention, kEval);
  const double e15 = std::exp(1.5);
  const double a1 = e15 / (1.0 + e15);  // node1 scores higher on [1,0]
  const double a0 = 1.0 - a1;
  CHECK(t.value(full.alpha).at(0) == doctest::Approx(a0).epsilon(1e-9));
  CHECK(t.value(full.pooled).at(0) ==
        doctest::Approx(a0 * 0.25 + a1 * 1.75).epsilon(1e-9));
  CHECK(t.value(full.pooled).at(1) ==
        doctest::Approx(a0 * 1.75 + a1 * 0.25).epsilon(1e-9));
}

TEST_CASE("attention pooling edge cases") {
  RandomStream rng(5);
  EncoderConfig cfg;
  cfg.atlas_size = 6;
  cfg.hidden = 8;
  EncoderParams p = EncoderParams::init(cfg, rng);

  // single node: attention is a no-op average
  SubjectGraph one = graph_from(1, {0});
  std::vector<int> ids{3};
  GraphInputs gi = make_graph_inputs(masked_adjacency(one, cfg.tau), ids,
                                     cfg.atlas_size);
  Tape t;
  EncoderRefs enc = lift(t, p, false);
  auto full = encode_graph_full(t, enc, gi, PoolMode::kAttention, kEval);
  CHECK(t.value(full.alpha).size() == 1);
  CHECK(t.value(full.alpha).at(0) == 1.0);
  auto mean = encode_graph(t, enc, gi, PoolMode::kMean, kEval);
  for (std::size_t j = 0; j < cfg.hidden; ++j)
    CHECK(t.value(full.pooled).at(j) == doctest::Approx(t.value(mean).at(j)));

  // zero attention vector reduces attention pooling to the mean
  EncoderParams pz = p;
  pz.attn_w.fill(0.0);
  SubjectGraph g = random_graph(rng, 6, "s1");
  GraphInputs gi6 = subject_inputs(g, cfg);
  Tape t2;
  EncoderRefs enc2 = lift(t2, pz, false);
  auto att = encode_graph_full(t2, enc2, gi6, PoolMode::kAttention, kEval);
  auto avg = encode_graph(t2, enc2, gi6, PoolMode::kMean, kEval);
  double asum = 0.0;
  for (std::size_t i = 0; i < 6; ++i) asum += t2.value(att.alpha).at(i);
  CHECK(std::fabs(asum - 1.0) < 1e-12);
  for (std::size_t j = 0; j < cfg.hidden; ++j)
    CHECK(t2.value(att.pooled).at(j) ==
          doctest::Approx(t2.value(avg).at(j)).epsilon(1e-12));
}

TEST_CASE("attention weights always sum to one") {
  RandomStream rng(17);
  EncoderConfig cfg;
  cfg.atlas_size = 10;
  cfg.hidden = 16;
  EncoderParams p = EncoderParams::init(cfg, rng);
  for (int rep = 0; rep < 5; ++rep) {
    SubjectGraph g = random_graph(rng, 10, "s" + std::to_string(rep));
    Tape t;
    EncoderRefs enc = lift(t, p, false);
    auto full =
        encode_graph_full(t, enc, subject_inputs(g, cfg), PoolMode::kAttention, kEval);
    double s = 0.0;
    for (std::size_t i = 0; i < 10; ++i) s += t.value(full.alpha).at(i);
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("node order does not change the embeddings") {
  RandomStream rng(23);
  EncoderConfig cfg;
  cfg.atlas_size = 8;
  cfg.hidden = 12;
  EncoderParams p = EncoderParams::init(cfg, rng);
  SubjectGraph g = random_graph(rng, 8, "s0");

  std::vector<int> order(8);
  std::iota(order.begin(), order.end(), 0);
  RandomStream shuffler(99);
  shuffler.shuffle(order);

  SubjectGraph perm = g;
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t v = 0; v < 8; ++v)
      perm.a(u, v) = g.a(static_cast<std::size_t>(order[u]),
                         static_cast<std::size_t>(order[v]));

  GraphInputs a = subject_inputs(g, cfg);
  GraphInputs b = make_graph_inputs(masked_adjacency(perm, cfg.tau), order,
                                    cfg.atlas_size);
  for (PoolMode mode : {PoolMode::kMean, PoolMode::kAttention}) {
    Tape t;
    EncoderRefs enc = lift(t, p, false);
    auto ea = encode_graph(t, enc, a, mode, kEval);
    auto eb = encode_graph(t, enc, b, mode, kEval);
    for (std::size_t j = 0; j < cfg.hidden; ++j)
      CHECK(std::fabs(t.value(ea).at(j) - t.value(eb).at(j)) < 1e-10);
  }
}

TEST_CASE("encoder gradients match finite differences") {
  RandomStream rng(321);
  EncoderConfig cfg;
  cfg.atlas_size = 6;
  cfg.hidden = 8;
  auto base = std::make_shared<EncoderParams>(EncoderParams::init(cfg, rng));
  SubjectGraph g = random_graph(rng, 6, "s0");
  auto gi = std::make_shared<GraphInputs>(subject_inputs(g, cfg));
  Concept c = simple_concept({0, 1}, {3, 4});
  auto ci = std::make_shared<GraphInputs>(concept_inputs(g, c, cfg));
  Tensor probe(cfg.hidden);
  for (std::size_t j = 0; j < cfg.hidden; ++j)
    probe.at(j) = rng.uniform(-1.0, 1.0);

  GradCheckProblem problem;
  for (const Tensor* t : std::as_const(*base).trainable())
    problem.params.push_back(*t);
  problem.build = [base, gi, ci, probe](Tape& t,
                                        const std::vector<Tape::Ref>& r) {
    EncoderRefs enc;
    enc.w_m1 = r[0];
    enc.w_s1 = r[1];
    enc.bn1_gamma = r[2];
    enc.bn1_beta = r[3];
    enc.w_m2 = r[4];
    enc.w_s2 = r[5];
    enc.bn2_gamma = r[6];
    enc.bn2_beta = r[7];
    enc.attn_w = r[8];
    enc.bn1 = &base->bn1;
    enc.bn2 = &base->bn2;
    enc.cfg = &base->cfg;
    auto z = encode_graph(t, enc, *gi, PoolMode::kMean, EncodeOptions{});
    auto h = encode_graph(t, enc, *ci, PoolMode::kAttention, EncodeOptions{});
    auto pv = t.input(probe);
    return t.add(t.sum_all(t.mul(z, pv)), t.sum_all(t.mul(h, h)));
  };
  auto rep = grad_check(problem, 1e-5, 4);
  CAPTURE(rep.worst_param);
  CAPTURE(rep.worst_coord);
  CAPTURE(rep.worst_analytic);
  CAPTURE(rep.worst_numeric);
  CHECK(rep.min_kink_distance > 1e-4);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("concept scores and class heads compute the stated values") {
  BottleneckConfig cfg;
  cfg.num_classes = 2;
  cfg.num_concepts = 1;
  cfg.hidden = 2;
  BottleneckParams p;
  p.cfg = cfg;
  p.w = Tensor(2, 1);
  p.w_z = Tensor(2, 2);
  p.b = Tensor(2);

  Tape t;
  auto h = t.input(Tensor::matrix(1, 2, {3, -1}));
  auto z = t.input(Tensor::vector({1, 2}));
  auto s = concept_scores(t, h, z);
  CHECK(t.value(s).at(0) == 1.0);

  // all-zero head: sigmoid(0) = 0.5 on both logits, probs uniform
  BottleneckRefs head = lift(t, p, false);
  auto o = class_logits(t, head, s, z);
  CHECK(t.value(o).at(0) == 0.5);
  CHECK(t.value(o).at(1) == 0.5);
  auto probs = class_probs(t, o);
  CHECK(t.value(probs).at(0) == doctest::Approx(0.5).epsilon(1e-15));

  // linear mode: logits [ln 2, 0] -> probs [2/3, 1/3]
  BottleneckParams lin = p;
  lin.cfg.sigmoid_squash = false;
  lin.b = Tensor::vector({std::log(2.0), 0.0});
  BottleneckRefs lhead = lift(t, lin, false);
  auto lo = class_logits(t, lhead, s, z);
  auto lp = class_probs(t, lo);
  CHECK(t.value(lp).at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(t.value(lp).at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // softmax shift invariance
  BottleneckParams lin2 = lin;
  lin2.b = Tensor::vector({std::log(2.0) + 11.0, 11.0});
  BottleneckRefs lhead2 = lift(t, lin2, false);
  auto lp2 = class_probs(t, class_logits(t, lhead2, s, z));
  CHECK(std::fabs(t.value(lp2).at(0) - t.value(lp).at(0)) < 1e-12);
}

TEST_CASE("cross entropy values") {
  Tape t;
  auto half = t.input(Tensor::vector({0.5, 0.5}));
  CHECK(t.value(ce_loss(t, half, 0)).at(0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  auto quarter = t.input(Tensor::vector({0.25, 0.75}));
  CHECK(t.value(ce_loss(t, quarter, 0)).at(0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  auto perfect = t.input(Tensor::vector({1.0, 0.0}));
  CHECK(t.value(ce_loss(t, perfect, 0)).at(0) == 0.0);
  auto uniform4 = t.input(Tensor::vector({0.25, 0.25, 0.25, 0.25}));
  CHECK(t.value(ce_loss(t, uniform4, 3)).at(0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  // the floor keeps an impossible label finite and flags it
  CHECK(t.clamp_events() == 0);
  auto impossible = t.value(ce_loss(t, perfect, 1));
  CHECK(impossible.at(0) == doctest::Approx(-std::log(1e-12)));
  CHECK(t.clamp_events() == 1);
  CHECK_THROWS_AS(ce_loss(t, half, 2), InputError);
}

TEST_CASE("penalties match hand results") {
  BottleneckConfig cfg;
  cfg.num_classes = 2;
  cfg.num_concepts = 3;
  cfg.hidden = 4;
  BottleneckParams p;
  p.cfg = cfg;
  p.w = Tensor::matrix(2, 3, {0.5, -0.2, 7.0, -0.3, 0.1, -7.0});
  p.w_z = Tensor(2, 4);
  p.b = Tensor(2);

  Tape t;
  BottleneckRefs head = lift(t, p, false);
  CHECK(t.value(l1_penalty(t, head)).at(0) == doctest::Approx(15.1).epsilon(1e-12));

  // L1 homogeneity
  BottleneckParams p3 = p;
  for (std::size_t i = 0; i < p3.w.size(); ++i) p3.w.data()[i] *= 3.0;
  BottleneckRefs head3 = lift(t, p3, false);
  CHECK(t.value(l1_penalty(t, head3)).at(0) ==
        doctest::Approx(3.0 * 15.1).epsilon(1e-12));

  std::vector<Concept> concepts = {simple_concept({0}, {1}, "c0", 1),
                                   simple_concept({0}, {1}, "c1", -1),
                                   simple_concept({0}, {1}, "c2", 0)};
  DirectionPriors priors = DirectionPriors::from_concepts(concepts);
  CHECK(priors.cols == std::vector<std::size_t>{0, 1});
  // col0 wants >= 0: only -0.3 violates -> 0.09
  // col1 wants <= 0: only 0.1 violates -> 0.01
  CHECK(t.value(direction_penalty(t, head, priors)).at(0) ==
        doctest::Approx(0.1).epsilon(1e-12));

  DirectionPriors none = DirectionPriors::from_concepts({concepts[2]});
  CHECK(none.empty());
  CHECK_THROWS_AS(direction_penalty(t, head, none), InputError);

  // a loss built from the parts equals the sum of the parts
  auto ce = ce_loss(t, t.input(Tensor::vector({0.25, 0.75})), 1);
  LossWeights lw;
  lw.sparsity = 0.5;
  lw.direction = 2.0;
  auto total = t.add(ce, t.add(t.scale(l1_penalty(t, head), lw.sparsity),
                               t.scale(direction_penalty(t, head, priors),
                                       lw.direction)));
  CHECK(t.value(total).at(0) ==
        doctest::Approx(-std::log(0.75) + 0.5 * 15.1 + 2.0 * 0.1).epsilon(1e-12));
}

TEST_CASE("strong direction pressure drives violations to zero") {
  RandomStream rng(7);
  BottleneckConfig cfg;
  cfg.num_classes = 3;
  cfg.num_concepts = 5;
  cfg.hidden = 4;
  BottleneckParams p = BottleneckParams::init(cfg, rng);
  std::vector<Concept> concepts;
  for (int i = 0; i < 5; ++i)
    concepts.push_back(simple_concept({0}, {1}, "c" + std::to_string(i),
                                      i % 2 == 0 ? 1 : -1));
  DirectionPriors priors = DirectionPriors::from_concepts(concepts);

  double initial = 0.0;
  {
    Tape t;
    BottleneckRefs head = lift(t, p, false);
    initial = t.value(direction_penalty(t, head, priors)).at(0);
  }
  CHECK(initial > 0.0);

  AdamConfig acfg;
  acfg.lr = 0.01;
  Adam opt(acfg);
  for (int step = 0; step < 500; ++step) {
    Tape t;
    BottleneckRefs head = lift(t, p, true);
    auto loss = t.scale(direction_penalty(t, head, priors), 100.0);
    t.backward(loss);
    std::vector<const Tensor*> grads = {&t.grad(head.w), &t.grad(head.w_z),
                                        &t.grad(head.b)};
    opt.step(p.trainable(), grads);
  }
  Tape t;
  BottleneckRefs head = lift(t, p, false);
  const double final_pen = t.value(direction_penalty(t, head, priors)).at(0);
  CHECK(final_pen < 1e-4 * initial);
}

TEST_CASE("full model gradient agrees with finite differences") {
  RandomStream rng(1234);
  EncoderConfig ecfg;
  ecfg.atlas_size = 6;
  ecfg.hidden = 8;
  ecfg.dropout = 0.0;
  BottleneckConfig bcfg;
  bcfg.num_classes = 2;
  bcfg.num_concepts = 2;
  bcfg.hidden = ecfg.hidden;

  auto enc_params = std::make_shared<EncoderParams>(EncoderParams::init(ecfg, rng));
  auto head_params =
      std::make_shared<BottleneckParams>(BottleneckParams::init(bcfg, rng));
  std::vector<Concept> concepts = {simple_concept({0, 1}, {3, 4}, "c0", 1),
                                   simple_concept({2}, {5}, "c1", -1)};
  auto priors = std::make_shared<DirectionPriors>(
      DirectionPriors::from_concepts(concepts));

  auto subjects = std::make_shared<std::vector<SubjectGraph>>();
  auto labels = std::make_shared<std::vector<int>>();
  auto subj_in = std::make_shared<std::vector<GraphInputs>>();
  auto conc_in = std::make_shared<std::vector<std::vector<GraphInputs>>>();
  for (int i = 0; i < 2; ++i) {
    subjects->push_back(random_graph(rng, 6, "s" + std::to_string(i)));
    labels->push_back(i % 2);
    subj_in->push_back(subject_inputs(subjects->back(), ecfg));
    std::vector<GraphInputs> per;
    for (const Concept& c : concepts)
      per.push_back(concept_inputs(subjects->back(), c, ecfg));
    conc_in->push_back(std::move(per));
  }

  GradCheckProblem problem;
  for (const Tensor* t : std::as_const(*enc_params).trainable())
    problem.params.push_back(*t);
  for (const Tensor* t : std::as_const(*head_params).trainable())
    problem.params.push_back(*t);
  problem.build = [=](Tape& t, const std::vector<Tape::Ref>& r) {
    EncoderRefs enc;
    enc.w_m1 = r[0];
    enc.w_s1 = r[1];
    enc.bn1_gamma = r[2];
    enc.bn1_beta = r[3];
    enc.w_m2 = r[4];
    enc.w_s2 = r[5];
    enc.bn2_gamma = r[6];
    enc.bn2_beta = r[7];
    enc.attn_w = r[8];
    enc.bn1 = &enc_params->bn1;
    enc.bn2 = &enc_params->bn2;
    enc.cfg = &enc_params->cfg;
    BottleneckRefs head;
    head.w = r[9];
    head.w_z = r[10];
    head.b = r[11];
    head.cfg = &head_params->cfg;

    std::vector<BatchItem> items;
    for (std::size_t i = 0; i < subjects->size(); ++i)
      items.push_back({&(*subj_in)[i], &(*conc_in)[i], (*labels)[i]});
    EncodeOptions opt;
    opt.train = true;  // batch-stat path, no dropout
    return batch_loss(t, enc, head, items, *priors, 0.1, 0.5, opt);
  };
  auto rep = grad_check(problem, 1e-5, 4);
  CAPTURE(rep.worst_param);
  CAPTURE(rep.worst_coord);
  CAPTURE(rep.worst_analytic);
  CAPTURE(rep.worst_numeric);
  CHECK(rep.min_kink_distance > 1e-4);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("concept importance is the column norm") {
  BottleneckConfig cfg;
  cfg.num_classes = 2;
  cfg.num_concepts = 2;
  cfg.hidden = 4;
  BottleneckParams p;
  p.cfg = cfg;
  p.w = Tensor::matrix(2, 2, {3.0, 0.0, 4.0, 0.0});
  p.w_z = Tensor(2, 4);
  p.b = Tensor(2);
  auto imp = concept_importance(p);
  CHECK(imp[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(imp[1] == 0.0);
}

TEST_CASE("parameter construction rejects bad configs") {
  RandomStream rng(1);
  BottleneckConfig bad;
  bad.num_classes = 1;
  bad.num_concepts = 3;
  CHECK_THROWS_AS(BottleneckParams::init(bad, rng), InputError);
  EncoderConfig e;
  e.atlas_size = 0;
  CHECK_THROWS_AS(EncoderParams::init(e, rng), InputError);
}
