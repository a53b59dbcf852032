#include "cneuro/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cneuro/error.hpp"
#include "cneuro/hash.hpp"

namespace cneuro {

using nlohmann::json;

namespace {

json config_to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batches_per_epoch"] = c.batches_per_epoch;
  j["pos_per_batch"] = c.pos_per_batch;
  j["neg_per_batch"] = c.neg_per_batch;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["dropout"] = c.dropout;
  j["validate_every"] = c.validate_every;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["lambda_sp"] = c.lambda_sp;
  j["lambda_dir"] = c.lambda_dir;
  j["tau"] = c.tau;
  if (c.n_c)
    j["n_c"] = *c.n_c;
  else
    j["n_c"] = nullptr;
  j["hidden"] = c.hidden;
  j["sigmoid_squash"] = c.sigmoid_squash;
  j["train_ratio"] = c.train_ratio;
  j["val_ratio"] = c.val_ratio;
  j["test_ratio"] = c.test_ratio;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
  c.pos_per_batch = j.value("pos_per_batch", c.pos_per_batch);
  c.neg_per_batch = j.value("neg_per_batch", c.neg_per_batch);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.dropout = j.value("dropout", c.dropout);
  c.validate_every = j.value("validate_every", c.validate_every);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.lambda_sp = j.value("lambda_sp", c.lambda_sp);
  c.lambda_dir = j.value("lambda_dir", c.lambda_dir);
  c.tau = j.value("tau", c.tau);
  if (j.contains("n_c") && !j.at("n_c").is_null())
    c.n_c = j.at("n_c").get<std::size_t>();
  c.hidden = j.value("hidden", c.hidden);
  c.sigmoid_squash = j.value("sigmoid_squash", c.sigmoid_squash);
  c.train_ratio = j.value("train_ratio", c.train_ratio);
  c.val_ratio = j.value("val_ratio", c.val_ratio);
  c.test_ratio = j.value("test_ratio", c.test_ratio);
  return c;
}

json tensor_to_json(const Tensor& t) {
  if (t.rank() == 2) {
    json j;
    j["rows"] = t.rows();
    j["cols"] = t.cols();
    j["data"] = t.values();
    return j;
  }
  return json(t.values());
}

Tensor matrix_from_json(const json& j, const char* name) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") ||
      !j.contains("data"))
    throw SchemaError(std::string("checkpoint: ") + name +
                      " is not a matrix object");
  std::size_t r = j.at("rows").get<std::size_t>();
  std::size_t c = j.at("cols").get<std::size_t>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  if (data.size() != r * c)
    throw SchemaError(std::string("checkpoint: ") + name +
                      " data length does not match rows*cols");
  return Tensor::matrix(r, c, std::move(data));
}

Tensor vector_from_json(const json& j, const char* name) {
  if (!j.is_array())
    throw SchemaError(std::string("checkpoint: ") + name + " is not an array");
  return Tensor::vector(j.get<std::vector<double>>());
}

// Forward pass for one subject on an existing tape: mean-pooled subject
// embedding, attention-pooled concept embeddings, scores, probabilities.
struct SubjectForward {
  Tape::Ref z, s, probs;
  Tape::Ref h_rows;
};

SubjectForward forward_subject(Tape& tape, const EncoderRefs& enc,
                               const BottleneckRefs& head,
                               const GraphInputs& subj,
                               const std::vector<GraphInputs>& conc,
                               const EncodeOptions& opt) {
  SubjectForward f;
  f.z = encode_graph(tape, enc, subj, PoolMode::kMean, opt);
  std::vector<Tape::Ref> hs;
  hs.reserve(conc.size());
  for (const GraphInputs& gi : conc)
    hs.push_back(encode_graph(tape, enc, gi, PoolMode::kAttention, opt));
  f.h_rows = tape.stack_rows(hs);
  f.s = concept_scores(tape, f.h_rows, f.z);
  f.probs = class_probs(tape, class_logits(tape, head, f.s, f.z));
  return f;
}

std::vector<std::size_t> sample_class(const std::vector<std::size_t>& members,
                                      std::size_t want, RandomStream& rng) {
  std::vector<std::size_t> out;
  out.reserve(want);
  if (members.size() >= want) {
    std::vector<std::size_t> pool = members;
    rng.shuffle(pool);
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
    return out;
  }
  out = members;
  while (out.size() < want)
    out.push_back(members[rng.below(members.size())]);
  return out;
}

std::vector<std::vector<std::size_t>> members_by_class(
    const Dataset& ds, const std::vector<std::size_t>& train_idx,
    int num_classes) {
  std::vector<std::vector<std::size_t>> byc(
      static_cast<std::size_t>(num_classes));
  for (std::size_t idx : train_idx) {
    if (idx >= ds.subjects.size())
      throw InputError("batching: train index out of range");
    int lab = ds.subjects[idx].label;
    if (lab < 0 || lab >= num_classes)
      throw InputError("batching: subject " + ds.subjects[idx].subject_id +
                       " has label outside [0, num_classes)");
    byc[static_cast<std::size_t>(lab)].push_back(idx);
  }
  return byc;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0)
      throw ConfigError(std::string("train config: ") + name +
                        " must be positive");
  };
  positive(epochs, "epochs");
  positive(batches_per_epoch, "batches_per_epoch");
  positive(pos_per_batch, "pos_per_batch");
  positive(neg_per_batch, "neg_per_batch");
  positive(validate_every, "validate_every");
  positive(patience, "patience");
  if (hidden == 0) throw ConfigError("train config: hidden must be positive");
  if (!(lr > 0.0)) throw ConfigError("train config: lr must be positive");
  if (weight_decay < 0.0)
    throw ConfigError("train config: weight_decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("train config: dropout must lie in [0, 1)");
  if (lambda_sp < 0.0 || lambda_dir < 0.0)
    throw ConfigError("train config: loss weights must be non-negative");
  if (tau < 0.0) throw ConfigError("train config: tau must be non-negative");
  if (n_c && *n_c == 0)
    throw ConfigError("train config: n_c must be positive when set");
  if (!(train_ratio > 0.0 && val_ratio > 0.0 && test_ratio > 0.0))
    throw ConfigError("train config: split ratios must be positive");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw ConfigError("train config: split ratios must sum to 1");
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open train config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("train config " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw SchemaError("train config " + path + ": top level must be an object");
  TrainConfig cfg;
  try {
    cfg = config_from_json(j);
  } catch (const json::exception& e) {
    throw SchemaError("train config " + path + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write train config " + path);
  out << config_to_json(cfg).dump(2) << "\n";
  if (!out) throw IoError("failed writing train config " + path);
}

std::string train_config_json(const TrainConfig& cfg) {
  return config_to_json(cfg).dump();
}

std::string train_config_hash(const TrainConfig& cfg) {
  return to_hex(fnv1a64(config_to_json(cfg).dump()));
}

std::vector<std::vector<std::size_t>> balanced_batches(
    const Dataset& ds, const std::vector<std::size_t>& train_idx,
    const TrainConfig& cfg, std::uint64_t seed, int epoch) {
  if (ds.num_classes != 2)
    throw InputError(
        "balanced batching is binary-only; use stratified batches");
  if (train_idx.empty()) throw InputError("batching: empty train split");
  auto byc = members_by_class(ds, train_idx, 2);
  if (byc[1].empty())
    throw InputError("batching: no positive subjects in train split");
  if (byc[0].empty())
    throw InputError("batching: no negative subjects in train split");

  RandomStream rng(RandomStream::mix(seed, static_cast<std::uint64_t>(epoch)));
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(static_cast<std::size_t>(cfg.batches_per_epoch));
  for (int b = 0; b < cfg.batches_per_epoch; ++b) {
    std::vector<std::size_t> batch = sample_class(
        byc[1], static_cast<std::size_t>(cfg.pos_per_batch), rng);
    std::vector<std::size_t> neg = sample_class(
        byc[0], static_cast<std::size_t>(cfg.neg_per_batch), rng);
    batch.insert(batch.end(), neg.begin(), neg.end());
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> stratified_batches(
    const Dataset& ds, const std::vector<std::size_t>& train_idx,
    const TrainConfig& cfg, std::uint64_t seed, int epoch) {
  if (ds.num_classes < 2)
    throw InputError("batching: need at least two classes");
  if (train_idx.empty()) throw InputError("batching: empty train split");
  auto byc = members_by_class(ds, train_idx, ds.num_classes);
  for (std::size_t c = 0; c < byc.size(); ++c)
    if (byc[c].empty())
      throw InputError("batching: class " + std::to_string(c) +
                       " absent from train split");

  const std::size_t total =
      static_cast<std::size_t>(cfg.pos_per_batch + cfg.neg_per_batch);
  const std::size_t nclass = byc.size();
  if (total < nclass)
    throw InputError("batching: batch size smaller than class count");

  // Proportional allocation by largest remainder, floored at one per class.
  std::size_t pool = train_idx.size();
  std::vector<std::size_t> want(nclass, 0);
  std::vector<double> frac(nclass, 0.0);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < nclass; ++c) {
    double exact = static_cast<double>(total) *
                   static_cast<double>(byc[c].size()) /
                   static_cast<double>(pool);
    want[c] = static_cast<std::size_t>(exact);
    frac[c] = exact - static_cast<double>(want[c]);
    assigned += want[c];
  }
  std::vector<std::size_t> order(nclass);
  for (std::size_t c = 0; c < nclass; ++c) order[c] = c;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a < b;
  });
  for (std::size_t k = 0; assigned < total; ++k, assigned += 1)
    want[order[k % nclass]] += 1;
  for (std::size_t c = 0; c < nclass; ++c) {
    if (want[c] > 0) continue;
    std::size_t donor = nclass;
    for (std::size_t d = 0; d < nclass; ++d)
      if (want[d] > 1 && (donor == nclass || want[d] > want[donor])) donor = d;
    if (donor == nclass)
      throw InputError("batching: cannot place one subject per class");
    want[donor] -= 1;
    want[c] += 1;
  }

  RandomStream rng(RandomStream::mix(seed, static_cast<std::uint64_t>(epoch)));
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(static_cast<std::size_t>(cfg.batches_per_epoch));
  for (int b = 0; b < cfg.batches_per_epoch; ++b) {
    std::vector<std::size_t> batch;
    batch.reserve(total);
    for (std::size_t c = 0; c < nclass; ++c) {
      auto part = sample_class(byc[c], want[c], rng);
      batch.insert(batch.end(), part.begin(), part.end());
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

TrainState init_train(const Dataset& ds, std::vector<Concept> concepts,
                      const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (!ds.atlas) throw InputError("train: dataset has no atlas");
  if (ds.subjects.empty()) throw InputError("train: dataset has no subjects");
  if (cfg.n_c) concepts = select_top(concepts, *cfg.n_c);
  if (concepts.empty()) throw InputError("train: no concepts to fit");
  for (const Concept& c : concepts) {
    if (!c.resolved())
      throw InputError("train: concept " + c.id + " is unresolved");
    c.validate(ds.atlas->size());
  }

  TrainState st;
  st.ds = &ds;
  st.concepts = std::move(concepts);
  st.cfg = cfg;

  EncoderConfig ec;
  ec.atlas_size = ds.atlas->size();
  ec.hidden = cfg.hidden;
  ec.tau = cfg.tau;
  ec.dropout = cfg.dropout;
  BottleneckConfig bc;
  bc.num_classes = ds.num_classes;
  bc.num_concepts = st.concepts.size();
  bc.hidden = cfg.hidden;
  bc.sigmoid_squash = cfg.sigmoid_squash;

  RandomStream init_rng(RandomStream::mix(cfg.seed, 0x1A17u));
  st.model.encoder = EncoderParams::init(ec, init_rng);
  st.model.head = BottleneckParams::init(bc, init_rng);

  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  st.opt = Adam(ac);

  st.priors = DirectionPriors::from_concepts(st.concepts);

  st.subject_in.reserve(ds.subjects.size());
  st.concept_in.reserve(ds.subjects.size());
  for (const SubjectGraph& g : ds.subjects) {
    st.subject_in.push_back(subject_inputs(g, ec));
    std::vector<GraphInputs> per;
    per.reserve(st.concepts.size());
    for (const Concept& c : st.concepts)
      per.push_back(concept_inputs(g, c, ec));
    st.concept_in.push_back(std::move(per));
  }
  return st;
}

Tape::Ref batch_loss(Tape& tape, const EncoderRefs& enc,
                     const BottleneckRefs& head,
                     const std::vector<BatchItem>& items,
                     const DirectionPriors& priors, double lambda_sp,
                     double lambda_dir, const EncodeOptions& opt) {
  if (items.empty()) throw InputError("batch loss: empty batch");
  std::vector<const GraphInputs*> gs;
  std::vector<PoolMode> pools;
  for (const BatchItem& it : items) {
    if (it.subject == nullptr || it.concepts == nullptr)
      throw InputError("batch loss: missing graph inputs");
    gs.push_back(it.subject);
    pools.push_back(PoolMode::kMean);
    for (const GraphInputs& gi : *it.concepts) {
      gs.push_back(&gi);
      pools.push_back(PoolMode::kAttention);
    }
  }
  std::vector<Tape::Ref> pooled = encode_graphs(tape, enc, gs, pools, opt);

  Tape::Ref total;
  std::size_t at = 0;
  for (const BatchItem& it : items) {
    Tape::Ref z = pooled[at++];
    std::vector<Tape::Ref> hs;
    hs.reserve(it.concepts->size());
    for (std::size_t c = 0; c < it.concepts->size(); ++c)
      hs.push_back(pooled[at++]);
    auto s = concept_scores(tape, tape.stack_rows(hs), z);
    auto probs = class_probs(tape, class_logits(tape, head, s, z));
    auto ce = ce_loss(tape, probs, it.label);
    total = total.valid() ? tape.add(total, ce) : ce;
  }
  if (lambda_sp != 0.0)
    total = tape.add(total, tape.scale(l1_penalty(tape, head), lambda_sp));
  if (lambda_dir != 0.0 && !priors.empty())
    total = tape.add(
        total, tape.scale(direction_penalty(tape, head, priors), lambda_dir));
  return total;
}

double train_step(TrainState& st, const std::vector<std::size_t>& batch,
                  RandomStream* dropout_rng) {
  if (batch.empty()) throw InputError("train step: empty batch");
  Tape tape;
  EncoderRefs enc = lift(tape, st.model.encoder, true);
  BottleneckRefs head = lift(tape, st.model.head, true);
  EncodeOptions opt;
  opt.train = true;
  opt.rng = dropout_rng;

  std::vector<BatchItem> items;
  items.reserve(batch.size());
  for (std::size_t idx : batch) {
    if (idx >= st.ds->subjects.size())
      throw InputError("train step: subject index out of range");
    items.push_back({&st.subject_in[idx], &st.concept_in[idx],
                     st.ds->subjects[idx].label});
  }
  Tape::Ref total = batch_loss(tape, enc, head, items, st.priors,
                               st.cfg.lambda_sp, st.cfg.lambda_dir, opt);

  tape.backward(total);
  double loss = tape.value(total).at(0);

  std::vector<Tensor*> params = st.model.encoder.trainable();
  for (Tensor* t : st.model.head.trainable()) params.push_back(t);
  std::vector<Tape::Ref> refs = {enc.w_m1,      enc.w_s1,  enc.bn1_gamma,
                                 enc.bn1_beta,  enc.w_m2,  enc.w_s2,
                                 enc.bn2_gamma, enc.bn2_beta, enc.attn_w,
                                 head.w,        head.w_z,  head.b};
  std::vector<const Tensor*> grads;
  grads.reserve(refs.size());
  for (Tape::Ref r : refs) grads.push_back(&tape.grad(r));
  st.opt.step(params, grads);
  return loss;
}

SubjectEval evaluate_subject(Model& model, const SubjectGraph& g,
                             const std::vector<Concept>& concepts) {
  if (concepts.size() != model.head.cfg.num_concepts)
    throw DimensionError("eval: concept count " +
                         std::to_string(concepts.size()) +
                         " does not match model (" +
                         std::to_string(model.head.cfg.num_concepts) + ")");
  const EncoderConfig& ec = model.encoder.cfg;
  GraphInputs subj = subject_inputs(g, ec);
  std::vector<GraphInputs> conc;
  conc.reserve(concepts.size());
  for (const Concept& c : concepts) conc.push_back(concept_inputs(g, c, ec));

  Tape tape;
  EncoderRefs enc = lift(tape, model.encoder, false);
  BottleneckRefs head = lift(tape, model.head, false);
  SubjectForward f =
      forward_subject(tape, enc, head, subj, conc, EncodeOptions{});

  SubjectEval ev;
  ev.probs = tape.value(f.probs).values();
  ev.scores = tape.value(f.s).values();
  ev.z = tape.value(f.z).values();
  ev.h = tape.value(f.h_rows);
  ev.predicted = 0;
  for (std::size_t k = 1; k < ev.probs.size(); ++k)
    if (ev.probs[k] > ev.probs[static_cast<std::size_t>(ev.predicted)])
      ev.predicted = static_cast<int>(k);
  return ev;
}

double split_accuracy(Model& model, const Dataset& ds,
                      const std::vector<Concept>& concepts,
                      const std::string& split_name, int jobs) {
  const std::vector<std::size_t>& idx = ds.split(split_name);
  if (idx.empty()) throw InputError("split " + split_name + " is empty");
  std::size_t nt = jobs > 1 ? std::min<std::size_t>(
                                  static_cast<std::size_t>(jobs), idx.size())
                            : 1;
  std::vector<std::size_t> correct(nt, 0);
  if (nt == 1) {
    for (std::size_t i : idx) {
      SubjectEval ev = evaluate_subject(model, ds.subjects[i], concepts);
      if (ev.predicted == ds.subjects[i].label) ++correct[0];
    }
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr fault;
    std::mutex fault_mu;
    for (std::size_t t = 0; t < nt; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t p = t; p < idx.size(); p += nt) {
            SubjectEval ev =
                evaluate_subject(model, ds.subjects[idx[p]], concepts);
            if (ev.predicted == ds.subjects[idx[p]].label) ++correct[t];
          }
        } catch (...) {
          std::lock_guard<std::mutex> lk(fault_mu);
          if (!fault) fault = std::current_exception();
        }
      });
    }
    for (std::thread& th : pool) th.join();
    if (fault) std::rethrow_exception(fault);
  }
  std::size_t total = 0;
  for (std::size_t c : correct) total += c;
  return static_cast<double>(total) / static_cast<double>(idx.size());
}

TrainResult train(const Dataset& ds, const std::vector<Concept>& concepts,
                  const TrainConfig& cfg, int jobs) {
  TrainState st = init_train(ds, concepts, cfg);
  const std::vector<std::size_t>& train_idx = ds.split("train");
  ds.split("val");

  TrainResult res;
  Model best_model = st.model;
  double best_acc = -1.0;
  int best_epoch = 0;
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> batches =
        ds.num_classes == 2
            ? balanced_batches(ds, train_idx, cfg, cfg.seed, epoch)
            : stratified_batches(ds, train_idx, cfg, cfg.seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      RandomStream drop(RandomStream::mix(
          RandomStream::mix(cfg.seed, static_cast<std::uint64_t>(epoch)),
          b + 1));
      double loss;
      try {
        loss = train_step(st, batches[b], &drop);
      } catch (const NumericFault& e) {
        throw NumericFault("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(b + 1) + ": " + e.what());
      }
      epoch_loss += loss;
      res.final_train_loss = loss;
    }
    res.stopped_epoch = epoch;

    if (epoch % cfg.validate_every == 0 || epoch == cfg.epochs) {
      double acc = split_accuracy(st.model, ds, st.concepts, "val", jobs);
      ValidationPoint pt;
      pt.epoch = epoch;
      pt.train_loss = epoch_loss / static_cast<double>(batches.size());
      pt.val_acc = acc;
      pt.improved = acc > best_acc;
      if (pt.improved) {
        best_acc = acc;
        best_epoch = epoch;
        best_model = st.model;
        stale = 0;
      } else {
        ++stale;
      }
      res.history.push_back(pt);
      if (stale >= cfg.patience) break;
    }
  }

  res.checkpoint.version = "1";
  res.checkpoint.model = std::move(best_model);
  res.checkpoint.concept_ids.reserve(st.concepts.size());
  for (const Concept& c : st.concepts)
    res.checkpoint.concept_ids.push_back(c.id);
  res.checkpoint.concepts_hash = concepts_hash(st.concepts);
  res.checkpoint.config = cfg;
  res.checkpoint.config_hash = train_config_hash(cfg);
  res.checkpoint.best_val_acc = best_acc;
  res.checkpoint.epoch = best_epoch;
  return res;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const EncoderParams& e = ckpt.model.encoder;
  const BottleneckParams& h = ckpt.model.head;
  json je;
  je["atlas_size"] = e.cfg.atlas_size;
  je["hidden"] = e.cfg.hidden;
  je["tau"] = e.cfg.tau;
  je["dropout"] = e.cfg.dropout;
  je["w_m1"] = tensor_to_json(e.w_m1);
  je["w_s1"] = tensor_to_json(e.w_s1);
  je["bn1_gamma"] = tensor_to_json(e.bn1_gamma);
  je["bn1_beta"] = tensor_to_json(e.bn1_beta);
  je["w_m2"] = tensor_to_json(e.w_m2);
  je["w_s2"] = tensor_to_json(e.w_s2);
  je["bn2_gamma"] = tensor_to_json(e.bn2_gamma);
  je["bn2_beta"] = tensor_to_json(e.bn2_beta);
  je["attn_w"] = tensor_to_json(e.attn_w);
  je["bn1_mean"] = e.bn1.running_mean.values();
  je["bn1_var"] = e.bn1.running_var.values();
  je["bn2_mean"] = e.bn2.running_mean.values();
  je["bn2_var"] = e.bn2.running_var.values();
  json jh;
  jh["num_classes"] = h.cfg.num_classes;
  jh["num_concepts"] = h.cfg.num_concepts;
  jh["hidden"] = h.cfg.hidden;
  jh["sigmoid_squash"] = h.cfg.sigmoid_squash;
  jh["w"] = tensor_to_json(h.w);
  jh["w_z"] = tensor_to_json(h.w_z);
  jh["b"] = tensor_to_json(h.b);

  json j;
  j["version"] = ckpt.version;
  j["config_hash"] = ckpt.config_hash;
  j["concepts_hash"] = ckpt.concepts_hash;
  j["concept_ids"] = ckpt.concept_ids;
  j["config"] = config_to_json(ckpt.config);
  j["best_val_acc"] = ckpt.best_val_acc;
  j["epoch"] = ckpt.epoch;
  j["encoder"] = je;
  j["bottleneck"] = jh;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  try {
    Checkpoint ck;
    ck.version = j.at("version").get<std::string>();
    if (ck.version != "1")
      throw SchemaError("checkpoint " + path + ": unsupported version " +
                        ck.version);
    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.concepts_hash = j.at("concepts_hash").get<std::string>();
    ck.concept_ids = j.at("concept_ids").get<std::vector<std::string>>();
    ck.config = config_from_json(j.at("config"));
    ck.best_val_acc = j.at("best_val_acc").get<double>();
    ck.epoch = j.at("epoch").get<int>();

    const json& je = j.at("encoder");
    EncoderParams& e = ck.model.encoder;
    e.cfg.atlas_size = je.at("atlas_size").get<std::size_t>();
    e.cfg.hidden = je.at("hidden").get<std::size_t>();
    e.cfg.tau = je.at("tau").get<double>();
    e.cfg.dropout = je.at("dropout").get<double>();
    e.w_m1 = matrix_from_json(je.at("w_m1"), "w_m1");
    e.w_s1 = matrix_from_json(je.at("w_s1"), "w_s1");
    e.bn1_gamma = vector_from_json(je.at("bn1_gamma"), "bn1_gamma");
    e.bn1_beta = vector_from_json(je.at("bn1_beta"), "bn1_beta");
    e.w_m2 = matrix_from_json(je.at("w_m2"), "w_m2");
    e.w_s2 = matrix_from_json(je.at("w_s2"), "w_s2");
    e.bn2_gamma = vector_from_json(je.at("bn2_gamma"), "bn2_gamma");
    e.bn2_beta = vector_from_json(je.at("bn2_beta"), "bn2_beta");
    e.attn_w = vector_from_json(je.at("attn_w"), "attn_w");
    e.bn1 = BatchNormState(e.cfg.hidden);
    e.bn2 = BatchNormState(e.cfg.hidden);
    e.bn1.running_mean = vector_from_json(je.at("bn1_mean"), "bn1_mean");
    e.bn1.running_var = vector_from_json(je.at("bn1_var"), "bn1_var");
    e.bn2.running_mean = vector_from_json(je.at("bn2_mean"), "bn2_mean");
    e.bn2.running_var = vector_from_json(je.at("bn2_var"), "bn2_var");
    if (e.bn1.running_mean.size() != e.cfg.hidden ||
        e.bn1.running_var.size() != e.cfg.hidden ||
        e.bn2.running_mean.size() != e.cfg.hidden ||
        e.bn2.running_var.size() != e.cfg.hidden)
      throw SchemaError("checkpoint " + path +
                        ": batch-norm stats have the wrong width");

    const json& jh = j.at("bottleneck");
    BottleneckParams& h = ck.model.head;
    h.cfg.num_classes = jh.at("num_classes").get<int>();
    h.cfg.num_concepts = jh.at("num_concepts").get<std::size_t>();
    h.cfg.hidden = jh.at("hidden").get<std::size_t>();
    h.cfg.sigmoid_squash = jh.at("sigmoid_squash").get<bool>();
    h.w = matrix_from_json(jh.at("w"), "w");
    h.w_z = matrix_from_json(jh.at("w_z"), "w_z");
    h.b = vector_from_json(jh.at("b"), "b");

    if (e.w_m1.rows() != e.cfg.feature_dim() || e.w_m1.cols() != e.cfg.hidden)
      throw SchemaError("checkpoint " + path + ": w_m1 shape mismatch");
    if (h.w.rows() != static_cast<std::size_t>(h.cfg.num_classes) ||
        h.w.cols() != h.cfg.num_concepts)
      throw SchemaError("checkpoint " + path + ": head shape mismatch");
    if (ck.concept_ids.size() != h.cfg.num_concepts)
      throw SchemaError("checkpoint " + path +
                        ": concept id list does not match head width");
    return ck;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
}

void require_concepts_match(const Checkpoint& ckpt,
                            const std::vector<Concept>& concepts) {
  std::string have = concepts_hash(concepts);
  if (have != ckpt.concepts_hash)
    throw ConfigError(
        "concept list does not match the one the checkpoint was trained on "
        "(hash " +
        have + " vs " + ckpt.concepts_hash + ")");
}

void save_metrics_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics " + path);
  out << "epoch,train_loss,val_acc,best_val_acc,improved\n";
  double best = -1.0;
  for (const ValidationPoint& pt : result.history) {
    if (pt.val_acc > best) best = pt.val_acc;
    out << pt.epoch << "," << pt.train_loss << "," << pt.val_acc << "," << best
        << "," << (pt.improved ? 1 : 0) << "\n";
  }
  if (!out) throw IoError("failed writing metrics " + path);
}

}  // namespace cneuro
