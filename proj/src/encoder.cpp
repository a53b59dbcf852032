#include "cneuro/encoder.hpp"

#include <cmath>

#include "cneuro/error.hpp"

namespace cneuro {

namespace {

Tensor xavier(RandomStream& rng, std::size_t fan_in, std::size_t fan_out,
              std::size_t rows, std::size_t cols) {
  const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-lim, lim);
  return t;
}

Tensor xavier_vec(RandomStream& rng, std::size_t fan_in, std::size_t n) {
  const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + 1));
  Tensor t(n);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-lim, lim);
  return t;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& cfg, RandomStream& rng) {
  if (cfg.atlas_size == 0) throw InputError("encoder: atlas size not set");
  if (cfg.hidden == 0) throw InputError("encoder: hidden width must be positive");
  if (!(cfg.tau >= 0.0)) throw InputError("encoder: tau must be non-negative");
  const std::size_t f = cfg.feature_dim();
  const std::size_t d = cfg.hidden;
  EncoderParams p;
  p.cfg = cfg;
  p.w_m1 = xavier(rng, f, d, f, d);
  p.w_s1 = xavier(rng, f, d, f, d);
  p.bn1_gamma = Tensor(d);
  p.bn1_gamma.fill(1.0);
  p.bn1_beta = Tensor(d);
  p.w_m2 = xavier(rng, d, d, d, d);
  p.w_s2 = xavier(rng, d, d, d, d);
  p.bn2_gamma = Tensor(d);
  p.bn2_gamma.fill(1.0);
  p.bn2_beta = Tensor(d);
  p.attn_w = xavier_vec(rng, d, d);
  p.bn1 = BatchNormState(d);
  p.bn2 = BatchNormState(d);
  return p;
}

std::vector<Tensor*> EncoderParams::trainable() {
  return {&w_m1, &w_s1, &bn1_gamma, &bn1_beta,
          &w_m2, &w_s2, &bn2_gamma, &bn2_beta, &attn_w};
}

std::vector<const Tensor*> EncoderParams::trainable() const {
  return {&w_m1, &w_s1, &bn1_gamma, &bn1_beta,
          &w_m2, &w_s2, &bn2_gamma, &bn2_beta, &attn_w};
}

Tensor masked_adjacency(const SubjectGraph& g, double tau) {
  const std::size_t n = g.num_rois;
  Tensor out(n, n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v) continue;
      const double w = g.a(u, v);
      if (std::fabs(w) >= tau) out.at(u, v) = w;
    }
  return out;
}

Tensor concept_masked_adjacency(const SubjectGraph& g, const Concept& c,
                                double tau) {
  if (!c.resolved())
    throw InputError("concept subgraph: concept " + c.id + " is unresolved");
  const std::size_t na = c.set_a.size(), nb = c.set_b.size();
  Tensor out(na + nb, na + nb);
  for (std::size_t i = 0; i < na; ++i) {
    const int u = c.set_a[i];
    if (u < 0 || static_cast<std::size_t>(u) >= g.num_rois)
      throw DimensionError("concept subgraph: ROI " + std::to_string(u) +
                           " outside graph of size " + std::to_string(g.num_rois));
    for (std::size_t j = 0; j < nb; ++j) {
      const int v = c.set_b[j];
      if (v < 0 || static_cast<std::size_t>(v) >= g.num_rois)
        throw DimensionError("concept subgraph: ROI " + std::to_string(v) +
                             " outside graph of size " + std::to_string(g.num_rois));
      const double w = g.a(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
      if (std::fabs(w) >= tau) {
        out.at(i, na + j) = w;
        out.at(na + j, i) = w;
      }
    }
  }
  return out;
}

GraphInputs make_graph_inputs(const Tensor& masked_adj,
                              const std::vector<int>& node_ids,
                              std::size_t atlas_size) {
  const std::size_t n = masked_adj.rows();
  if (masked_adj.rank() != 2 || masked_adj.cols() != n)
    throw DimensionError("graph inputs: adjacency must be square");
  if (node_ids.size() != n)
    throw DimensionError("graph inputs: " + std::to_string(node_ids.size()) +
                         " node ids for " + std::to_string(n) + " nodes");

  std::vector<std::size_t> deg(n, 0);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      if (masked_adj.at(u, v) != 0.0) ++deg[u];

  GraphInputs g;
  g.features = Tensor(n, atlas_size + 1);
  g.norm_adj = Tensor(n, n);
  for (std::size_t u = 0; u < n; ++u) {
    const int id = node_ids[u];
    if (id < 0 || static_cast<std::size_t>(id) >= atlas_size)
      throw DimensionError("graph inputs: node id " + std::to_string(id) +
                           " outside atlas of size " + std::to_string(atlas_size));
    g.features.at(u, static_cast<std::size_t>(id)) = 1.0;
    if (deg[u] > 0) {
      double nbr = 0.0;
      for (std::size_t v = 0; v < n; ++v)
        if (masked_adj.at(u, v) != 0.0) nbr += static_cast<double>(deg[v]);
      g.features.at(u, atlas_size) = nbr / static_cast<double>(deg[u]);
      for (std::size_t v = 0; v < n; ++v)
        g.norm_adj.at(u, v) = masked_adj.at(u, v) / static_cast<double>(deg[u]);
    }
  }
  return g;
}

GraphInputs subject_inputs(const SubjectGraph& g, const EncoderConfig& cfg) {
  if (g.num_rois != cfg.atlas_size)
    throw DimensionError("subject " + g.subject_id + " has " +
                         std::to_string(g.num_rois) + " ROIs, atlas has " +
                         std::to_string(cfg.atlas_size));
  std::vector<int> ids(g.num_rois);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return make_graph_inputs(masked_adjacency(g, cfg.tau), ids, cfg.atlas_size);
}

GraphInputs concept_inputs(const SubjectGraph& g, const Concept& c,
                           const EncoderConfig& cfg) {
  std::vector<int> ids = c.set_a;
  ids.insert(ids.end(), c.set_b.begin(), c.set_b.end());
  return make_graph_inputs(concept_masked_adjacency(g, c, cfg.tau), ids,
                           cfg.atlas_size);
}

EncoderRefs lift(Tape& tape, EncoderParams& params, bool trainable) {
  auto put = [&](const Tensor& t) {
    return trainable ? tape.param(t) : tape.input(t);
  };
  EncoderRefs r;
  r.w_m1 = put(params.w_m1);
  r.w_s1 = put(params.w_s1);
  r.bn1_gamma = put(params.bn1_gamma);
  r.bn1_beta = put(params.bn1_beta);
  r.w_m2 = put(params.w_m2);
  r.w_s2 = put(params.w_s2);
  r.bn2_gamma = put(params.bn2_gamma);
  r.bn2_beta = put(params.bn2_beta);
  r.attn_w = put(params.attn_w);
  r.bn1 = &params.bn1;
  r.bn2 = &params.bn2;
  r.cfg = &params.cfg;
  return r;
}

namespace {

// Last-layer node features for every graph. Batch-norm moments are computed
// over the stacked node rows of all graphs together, so training normalizes
// against the same distribution the running statistics converge to.
std::vector<Tape::Ref> encode_nodes(Tape& tape, const EncoderRefs& enc,
                                    const std::vector<const GraphInputs*>& gs,
                                    const EncodeOptions& opt) {
  if (gs.empty()) throw InputError("encode: no graphs");
  for (const GraphInputs* g : gs) {
    if (g == nullptr) throw InputError("encode: null graph");
    if (g->features.cols() != enc.cfg->feature_dim())
      throw DimensionError("encode: feature width " +
                           std::to_string(g->features.cols()) +
                           " does not match " +
                           std::to_string(enc.cfg->feature_dim()));
  }
  if (opt.train && enc.cfg->dropout > 0.0 && opt.rng == nullptr)
    throw InputError("encode: training with dropout needs a random stream");

  std::vector<Tape::Ref> h(gs.size()), adj(gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) {
    h[i] = tape.input(gs[i]->features);
    adj[i] = tape.input(gs[i]->norm_adj);
  }

  auto layer = [&](const std::vector<Tape::Ref>& hs, Tape::Ref wm, Tape::Ref ws,
                   Tape::Ref gamma, Tape::Ref beta, BatchNormState& state) {
    std::vector<Tape::Ref> pre(hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) {
      auto agg = tape.matmul(adj[i], tape.matmul(hs[i], wm));
      pre[i] = tape.add(tape.matmul(hs[i], ws), agg);
    }
    auto joint = pre.size() == 1 ? pre[0] : tape.concat_rows(pre);
    auto act = tape.relu(tape.batch_norm(joint, gamma, beta, state, opt.train));
    if (opt.train && enc.cfg->dropout > 0.0)
      act = tape.dropout_rows(act, enc.cfg->dropout, *opt.rng);
    if (hs.size() == 1) return std::vector<Tape::Ref>{act};
    std::vector<Tape::Ref> out(hs.size());
    std::size_t at = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      out[i] = tape.slice_rows(act, at, gs[i]->nodes());
      at += gs[i]->nodes();
    }
    return out;
  };

  auto h1 = layer(h, enc.w_m1, enc.w_s1, enc.bn1_gamma, enc.bn1_beta, *enc.bn1);
  return layer(h1, enc.w_m2, enc.w_s2, enc.bn2_gamma, enc.bn2_beta, *enc.bn2);
}

EncodeResult pool_nodes(Tape& tape, const EncoderRefs& enc, Tape::Ref h2,
                        PoolMode pool) {
  EncodeResult out;
  if (pool == PoolMode::kMean) {
    out.pooled = tape.mean_rows(h2);
  } else {
    out.alpha = tape.softmax_vec(tape.matvec(h2, enc.attn_w));
    out.pooled = tape.matvec(tape.transpose(h2), out.alpha);
  }
  return out;
}

}  // namespace

EncodeResult encode_graph_full(Tape& tape, const EncoderRefs& enc,
                               const GraphInputs& g, PoolMode pool,
                               const EncodeOptions& opt) {
  auto h2 = encode_nodes(tape, enc, {&g}, opt);
  return pool_nodes(tape, enc, h2[0], pool);
}

Tape::Ref encode_graph(Tape& tape, const EncoderRefs& enc, const GraphInputs& g,
                       PoolMode pool, const EncodeOptions& opt) {
  return encode_graph_full(tape, enc, g, pool, opt).pooled;
}

std::vector<Tape::Ref> encode_graphs(Tape& tape, const EncoderRefs& enc,
                                     const std::vector<const GraphInputs*>& gs,
                                     const std::vector<PoolMode>& pools,
                                     const EncodeOptions& opt) {
  if (gs.size() != pools.size())
    throw DimensionError("encode: one pool mode per graph");
  auto h2 = encode_nodes(tape, enc, gs, opt);
  std::vector<Tape::Ref> out(gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i)
    out[i] = pool_nodes(tape, enc, h2[i], pools[i]).pooled;
  return out;
}

}  // namespace cneuro
