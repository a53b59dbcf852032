// Command line front end. One subcommand per pipeline stage, file based
// inputs and outputs, a run manifest next to every artifact producing run.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cneuro/atlas.hpp"
#include "cneuro/conceptgen.hpp"
#include "cneuro/concepts.hpp"
#include "cneuro/dataset.hpp"
#include "cneuro/error.hpp"
#include "cneuro/evalkit.hpp"
#include "cneuro/hash.hpp"
#include "cneuro/report.hpp"
#include "cneuro/synthcohort.hpp"
#include "cneuro/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cneuro;

namespace {

std::string single_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ';';
  return s;
}

std::string repr(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string hash_file(const std::string& path) {
  return to_hex(fnv1a64(read_text(path)));
}

void write_text_atomic(const std::string& path, const std::string& body) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out << body;
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

// Records the command, effective config, input digests and output paths.
// Written atomically once the run succeeds.
class RunManifest {
 public:
  RunManifest(const std::string& command, std::string path)
      : path_(std::move(path)) {
    body_["command"] = command;
    body_["started"] = now_seconds();
    body_["inputs"] = json::object();
    body_["outputs"] = json::array();
  }

  void input(const std::string& p) { body_["inputs"][p] = hash_file(p); }
  void output(const std::string& p) { body_["outputs"].push_back(p); }
  void config(json c) { body_["config"] = std::move(c); }
  void seed(std::uint64_t s) { body_["seed"] = s; }
  const std::string& path() const { return path_; }

  void write() {
    body_["finished"] = now_seconds();
    write_text_atomic(path_, body_.dump(2) + "\n");
  }

 private:
  json body_;
  std::string path_;
};

// Removes declared outputs if the run dies before disarm(). Directories are
// only removed wholesale when this run created them.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (disarmed_) return;
    std::error_code ec;
    for (const std::string& f : files_) fs::remove(f, ec);
    for (const std::string& d : dirs_) fs::remove_all(d, ec);
  }

  void file(std::string p) { files_.push_back(std::move(p)); }
  void dir_if_new(const std::string& d) {
    if (!d.empty() && !fs::exists(d)) dirs_.push_back(d);
  }
  void disarm() { disarmed_ = true; }

 private:
  std::vector<std::string> files_;
  std::vector<std::string> dirs_;
  bool disarmed_ = false;
};

std::vector<SubjectEval> eval_subjects(Model& model, const Dataset& ds,
                                       const std::vector<Concept>& concepts,
                                       const std::vector<std::size_t>& idx,
                                       int jobs) {
  std::vector<SubjectEval> out(idx.size());
  int workers = std::max(1, jobs);
  if (workers == 1 || idx.size() < 2) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      out[i] = evaluate_subject(model, ds.subjects[idx[i]], concepts);
    return out;
  }
  std::vector<std::thread> pool;
  std::mutex fail_mu;
  std::exception_ptr fail;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < idx.size();
             i += static_cast<std::size_t>(workers))
          out[i] = evaluate_subject(model, ds.subjects[idx[i]], concepts);
      } catch (...) {
        std::lock_guard<std::mutex> lock(fail_mu);
        if (!fail) fail = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (fail) std::rethrow_exception(fail);
  return out;
}

// The concepts file may be the full ranked pool the training run capped with
// n_c; retry with the same cap before rejecting.
std::vector<Concept> checkpoint_concepts(const Checkpoint& ck,
                                         std::vector<Concept> concepts) {
  if (concepts_hash(concepts) != ck.concepts_hash &&
      concepts.size() > ck.concept_ids.size())
    concepts = select_top(concepts, ck.concept_ids.size());
  require_concepts_match(ck, concepts);
  return concepts;
}

// ---- atlas validate ----

struct AtlasArgs {
  std::string path;
};

void run_atlas_validate(const AtlasArgs& a) {
  Atlas atlas = load_atlas(a.path);
  std::size_t left = 0, right = 0, mid = 0, aliases = 0;
  std::set<std::string> groups;
  for (const RoiRecord& r : atlas.rois()) {
    aliases += r.aliases.size();
    if (r.group) groups.insert(*r.group);
    switch (r.hemisphere) {
      case Hemisphere::kLeft: ++left; break;
      case Hemisphere::kRight: ++right; break;
      case Hemisphere::kMidline: ++mid; break;
    }
  }
  std::cout << "atlas ok: " << atlas.size() << " rois (" << left << " left, "
            << right << " right, " << mid << " midline), " << aliases
            << " aliases, " << groups.size() << " groups\n";
}

// ---- fc compute ----

struct FcArgs {
  std::string manifest;
  std::string out;
};

void run_fc_compute(const FcArgs& a) {
  Dataset ds = load_dataset(a.manifest);
  OutputGuard guard;
  guard.dir_if_new(a.out);
  fs::create_directories(a.out);
  std::string atlas_path = (fs::path(a.out) / "atlas.json").string();
  std::string manifest_path = (fs::path(a.out) / "manifest.json").string();
  std::string run_path = (fs::path(a.out) / "run.json").string();
  guard.file(atlas_path);
  guard.file(manifest_path);
  guard.file(run_path);
  for (const SubjectGraph& g : ds.subjects)
    guard.file((fs::path(a.out) / (g.subject_id + "_fc.csv")).string());

  save_atlas(*ds.atlas, atlas_path);
  save_dataset_fc(ds, "atlas.json", a.out);

  RunManifest m("fc compute", run_path);
  m.input(a.manifest);
  m.config(json{{"out", a.out}});
  m.output(manifest_path);
  m.output(atlas_path);
  m.write();
  guard.disarm();
  std::cout << "fc matrices for " << ds.subjects.size() << " subjects -> "
            << a.out << "\n";
}

// ---- synth ----

struct SynthArgs {
  std::string spec;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  CohortSpec spec = a.spec.empty() ? default_cohort_spec() : load_cohort_spec(a.spec);
  SynthCohort cohort = generate_cohort(spec);

  OutputGuard guard;
  guard.dir_if_new(a.out);
  fs::create_directories(a.out);
  auto at = [&](const char* name) { return (fs::path(a.out) / name).string(); };
  guard.file(at("atlas.json"));
  guard.file(at("manifest.json"));
  guard.file(at("concepts.jsonl"));
  guard.file(at("ground_truth.json"));
  guard.file(at("spec.json"));
  guard.file(at("run.json"));
  for (const SubjectGraph& g : cohort.dataset.subjects)
    guard.file((fs::path(a.out) / (g.subject_id + "_fc.csv")).string());

  save_atlas(*cohort.dataset.atlas, at("atlas.json"));
  save_dataset_fc(cohort.dataset, "atlas.json", a.out);
  save_concepts_jsonl(at("concepts.jsonl"), cohort.pool);
  save_ground_truth(cohort, spec, at("ground_truth.json"));
  save_cohort_spec(spec, at("spec.json"));

  RunManifest m("synth", at("run.json"));
  if (!a.spec.empty()) m.input(a.spec);
  m.seed(spec.seed);
  m.config(json{{"out", a.out}});
  m.output(at("manifest.json"));
  m.output(at("concepts.jsonl"));
  m.output(at("ground_truth.json"));
  m.write();
  guard.disarm();
  std::cout << "cohort: " << spec.subjects << " subjects, " << spec.num_rois
            << " rois, " << spec.classes << " classes, pool " << cohort.pool.size()
            << " (" << cohort.planted_ids.size() << " planted) -> " << a.out << "\n";
}

// ---- concepts generate ----

struct GenerateArgs {
  std::string disorder;
  std::string provider;
  std::string out;
  std::string records;
  std::string template_file;
};

void run_generate(const GenerateArgs& a) {
  ProviderConfig pc = load_provider_config(a.provider);
  std::unique_ptr<Provider> provider = make_provider(pc);

  PromptSpec prompt;
  prompt.disorder = a.disorder;
  prompt.terms = disorder_terms(a.disorder);
  if (!a.template_file.empty()) prompt.template_text = read_text(a.template_file);

  std::string records_path = a.records.empty() ? a.out + ".records.jsonl" : a.records;
  RecordStore store(records_path);

  OutputGuard guard;
  guard.file(a.out);  // the audit log is append only and survives failures

  std::vector<std::string> lines = generate_concepts(*provider, prompt, &store);
  std::vector<Concept> concepts;
  std::string prefix = lowercase(a.disorder);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Concept c;
    char buf[16];
    std::snprintf(buf, sizeof buf, "-%03zu", i);
    c.id = prefix + buf;
    c.disorder = a.disorder;
    c.raw_text = lines[i];
    concepts.push_back(std::move(c));
  }
  save_concepts_jsonl(a.out, concepts);

  RunManifest m("concepts generate", a.out + ".run.json");
  guard.file(m.path());
  m.input(a.provider);
  if (!a.template_file.empty()) m.input(a.template_file);
  m.config(json{{"disorder", a.disorder},
                {"provider", provider->name()},
                {"records", records_path}});
  m.output(a.out);
  m.output(records_path);
  m.write();
  guard.disarm();
  std::cout << "generated " << concepts.size() << " candidate lines for '"
            << a.disorder << "' via " << provider->name() << " -> " << a.out << "\n";
}

// ---- concepts parse ----

struct ParseArgs {
  std::string in;
  std::string atlas;
  std::string lexicon;
  std::string out;
};

void run_parse(const ParseArgs& a) {
  Atlas atlas = load_atlas(a.atlas);
  Lexicon lex = load_lexicon(a.lexicon);
  lex.validate(atlas);
  std::vector<Concept> raw = load_concepts_jsonl(a.in);

  std::vector<Concept> parsed;
  std::size_t resolved = 0;
  for (const Concept& c : raw) {
    Concept p = parse_concept(c.raw_text, lex, atlas);
    p.id = c.id;
    p.disorder = c.disorder;
    if (p.resolved()) ++resolved;
    parsed.push_back(std::move(p));
  }

  OutputGuard guard;
  guard.file(a.out);
  save_concepts_jsonl(a.out, parsed);

  RunManifest m("concepts parse", a.out + ".run.json");
  guard.file(m.path());
  m.input(a.in);
  m.input(a.atlas);
  m.input(a.lexicon);
  m.config(json::object());
  m.output(a.out);
  m.write();
  guard.disarm();
  std::cout << "parsed " << parsed.size() << " candidates, " << resolved
            << " resolved -> " << a.out << "\n";
}

// ---- concepts filter ----

struct FilterArgs {
  std::string in;
  std::string out;
  double jaccard = 0.8;
};

void run_filter(const FilterArgs& a) {
  std::vector<Concept> raw = load_concepts_jsonl(a.in);
  std::vector<Concept> kept = filter_concepts(raw, a.jaccard);

  OutputGuard guard;
  guard.file(a.out);
  save_concepts_jsonl(a.out, kept);

  RunManifest m("concepts filter", a.out + ".run.json");
  guard.file(m.path());
  m.input(a.in);
  m.config(json{{"jaccard", a.jaccard}});
  m.output(a.out);
  m.write();
  guard.disarm();
  std::cout << "kept " << kept.size() << " of " << raw.size() << " concepts -> "
            << a.out << "\n";
}

// ---- concepts rank ----

struct RankArgs {
  std::string in;
  std::string dataset;
  std::string out;
  std::string split = "all";
  bool absolute = false;
  std::uint64_t seed = 0;
  double train_ratio = 0.7, val_ratio = 0.1, test_ratio = 0.2;
};

void run_rank(const RankArgs& a) {
  Dataset ds = load_dataset(a.dataset);
  if (a.split == "all") {
    std::vector<std::size_t> all(ds.subjects.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    ds.splits["all"] = std::move(all);
  } else {
    split_dataset(ds, a.train_ratio, a.val_ratio, a.test_ratio, a.seed);
  }
  std::vector<Concept> concepts = load_concepts_jsonl(a.in);
  std::vector<Concept> ranked = rank_concepts(ds, a.split, concepts, a.absolute);

  OutputGuard guard;
  guard.file(a.out);
  save_concepts_jsonl(a.out, ranked);

  RunManifest m("concepts rank", a.out + ".run.json");
  guard.file(m.path());
  m.input(a.in);
  m.input(a.dataset);
  m.seed(a.seed);
  m.config(json{{"split", a.split}, {"absolute", a.absolute}});
  m.output(a.out);
  m.write();
  guard.disarm();
  std::cout << "ranked " << ranked.size() << " concepts over split '" << a.split
            << "' (" << ds.split(a.split).size() << " subjects) -> " << a.out << "\n";
}

// ---- train ----

struct TrainArgs {
  std::string dataset;
  std::string concepts;
  std::string config;
  std::string out;
  int jobs = 1;
  TrainConfig flag;     // holds flag values; applied only when the flag was set
  std::size_t n_c = 0;
  bool linear_logits = false;
  CLI::App* cmd = nullptr;
};

void apply_overrides(TrainConfig& cfg, const TrainArgs& a) {
  const CLI::App& c = *a.cmd;
  if (c.count("--seed")) cfg.seed = a.flag.seed;
  if (c.count("--epochs")) cfg.epochs = a.flag.epochs;
  if (c.count("--batches-per-epoch")) cfg.batches_per_epoch = a.flag.batches_per_epoch;
  if (c.count("--pos-per-batch")) cfg.pos_per_batch = a.flag.pos_per_batch;
  if (c.count("--neg-per-batch")) cfg.neg_per_batch = a.flag.neg_per_batch;
  if (c.count("--lr")) cfg.lr = a.flag.lr;
  if (c.count("--weight-decay")) cfg.weight_decay = a.flag.weight_decay;
  if (c.count("--dropout")) cfg.dropout = a.flag.dropout;
  if (c.count("--validate-every")) cfg.validate_every = a.flag.validate_every;
  if (c.count("--patience")) cfg.patience = a.flag.patience;
  if (c.count("--lambda-sp")) cfg.lambda_sp = a.flag.lambda_sp;
  if (c.count("--lambda-dir")) cfg.lambda_dir = a.flag.lambda_dir;
  if (c.count("--tau")) cfg.tau = a.flag.tau;
  if (c.count("--n-c")) cfg.n_c = a.n_c;
  if (c.count("--hidden")) cfg.hidden = a.flag.hidden;
  if (c.count("--linear-logits")) cfg.sigmoid_squash = false;
  if (c.count("--train-ratio")) cfg.train_ratio = a.flag.train_ratio;
  if (c.count("--val-ratio")) cfg.val_ratio = a.flag.val_ratio;
  if (c.count("--test-ratio")) cfg.test_ratio = a.flag.test_ratio;
}

void run_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  apply_overrides(cfg, a);
  cfg.validate();

  Dataset ds = load_dataset(a.dataset);
  split_dataset(ds, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, cfg.seed);
  std::vector<Concept> concepts = load_concepts_jsonl(a.concepts);

  OutputGuard guard;
  std::string metrics_path = a.out + ".metrics.csv";
  guard.file(a.out);
  guard.file(metrics_path);

  TrainResult res = train(ds, concepts, cfg, a.jobs);
  save_checkpoint(res.checkpoint, a.out);
  save_metrics_csv(res, metrics_path);

  RunManifest m("train", a.out + ".run.json");
  guard.file(m.path());
  m.input(a.dataset);
  m.input(a.concepts);
  if (!a.config.empty()) m.input(a.config);
  m.seed(cfg.seed);
  m.config(json::parse(train_config_json(cfg)));
  m.output(a.out);
  m.output(metrics_path);
  m.write();
  guard.disarm();
  std::cout << "best val acc " << repr(res.checkpoint.best_val_acc) << " at epoch "
            << res.checkpoint.epoch << ", stopped at " << res.stopped_epoch
            << ", final train loss " << repr(res.final_train_loss) << "\n"
            << "checkpoint -> " << a.out << "\n";
}

// ---- eval ----

struct EvalArgs {
  std::string ckpt;
  std::string dataset;
  std::string concepts;
  std::string expert;
  std::string split = "test";
  std::string out;  // prefix for CSV artifacts
  int jobs = 1;
};

void run_eval(const EvalArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  std::vector<Concept> concepts =
      checkpoint_concepts(ck, load_concepts_jsonl(a.concepts));

  Dataset ds = load_dataset(a.dataset);
  split_dataset(ds, ck.config.train_ratio, ck.config.val_ratio,
                ck.config.test_ratio, ck.config.seed);
  const std::vector<std::size_t>& idx = ds.split(a.split);

  Model model = ck.model;
  std::vector<SubjectEval> evals = eval_subjects(model, ds, concepts, idx, a.jobs);

  std::vector<int> preds, labels;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    preds.push_back(evals[i].predicted);
    labels.push_back(ds.subjects[idx[i]].label);
  }
  double acc = accuracy(preds, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hits;
  std::cout << "accuracy " << a.split << " = " << repr(acc) << " (" << hits << "/"
            << preds.size() << ")\n";

  OutputGuard guard;
  std::vector<std::size_t> order = importance_order(model.head, ck.concept_ids);
  std::vector<double> weight = concept_importance(model.head);

  if (!a.out.empty()) {
    std::string pred_path = a.out + ".predictions.csv";
    std::string score_path = a.out + ".scores.csv";
    std::string imp_path = a.out + ".importance.csv";
    guard.file(pred_path);
    guard.file(score_path);
    guard.file(imp_path);

    std::ostringstream pred;
    pred << "subject_id,label,predicted";
    std::size_t num_classes = evals.empty() ? 0 : evals[0].probs.size();
    for (std::size_t c = 0; c < num_classes; ++c) pred << ",prob_" << c;
    pred << "\n";
    for (std::size_t i = 0; i < idx.size(); ++i) {
      pred << ds.subjects[idx[i]].subject_id << "," << labels[i] << "," << preds[i];
      for (double p : evals[i].probs) pred << "," << repr(p);
      pred << "\n";
    }
    write_text_atomic(pred_path, pred.str());

    std::ostringstream sc;
    sc << "subject_id";
    for (const Concept& c : concepts) sc << "," << c.id;
    sc << "\n";
    for (std::size_t i = 0; i < idx.size(); ++i) {
      sc << ds.subjects[idx[i]].subject_id;
      for (double s : evals[i].scores) sc << "," << repr(s);
      sc << "\n";
    }
    write_text_atomic(score_path, sc.str());

    std::ostringstream imp;
    imp << "rank,concept_id,weight\n";
    for (std::size_t r = 0; r < order.size(); ++r)
      imp << r + 1 << "," << ck.concept_ids[order[r]] << ","
          << repr(weight[order[r]]) << "\n";
    write_text_atomic(imp_path, imp.str());
  }

  if (!a.expert.empty()) {
    ExpertList expert = load_expert_list(a.expert);
    AgreementReport rep = agreement_report(model, ds, concepts, a.split, expert);
    for (std::size_t i = 0; i < rep.ks.size(); ++i)
      std::cout << "agreement k=" << rep.ks[i] << ": concept "
                << repr(rep.concept_agreement[i]) << ", ranking "
                << repr(rep.ranking_agreement[i]) << "\n";
    if (!a.out.empty()) {
      guard.file(a.out + ".agreement.csv");
      guard.file(a.out + ".agreement.json");
      write_agreement_csv(rep, a.out + ".agreement.csv");
      write_agreement_json(rep, a.out + ".agreement.json");
    }
  }

  if (!a.out.empty()) {
    RunManifest m("eval", a.out + ".run.json");
    guard.file(m.path());
    m.input(a.ckpt);
    m.input(a.dataset);
    m.input(a.concepts);
    if (!a.expert.empty()) m.input(a.expert);
    m.seed(ck.config.seed);
    m.config(json{{"split", a.split}, {"jobs", a.jobs}});
    m.output(a.out + ".predictions.csv");
    m.output(a.out + ".scores.csv");
    m.output(a.out + ".importance.csv");
    m.write();
    std::cout << "artifacts -> " << a.out << ".{predictions,scores,importance}.csv\n";
  }
  guard.disarm();
}

// ---- ablate ----

struct AblateArgs {
  std::string dataset;
  std::string concepts;
  std::string config;
  std::string mode = "full";
  std::size_t k = 0;
  std::vector<std::uint64_t> seeds;
  std::string out;
  int jobs = 1;
};

void run_ablate(const AblateArgs& a) {
  AblateMode mode = ablate_mode_from_string(a.mode);
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  Dataset ds = load_dataset(a.dataset);
  std::vector<Concept> pool = load_concepts_jsonl(a.concepts);

  std::vector<AblateResult> rows(a.seeds.size());
  int workers = std::max(1, std::min<int>(a.jobs, static_cast<int>(a.seeds.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < a.seeds.size(); ++i)
      rows[i] = ablate(ds, pool, cfg, mode, a.k, a.seeds[i]);
  } else {
    std::vector<std::thread> threads;
    std::mutex fail_mu;
    std::exception_ptr fail;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (std::size_t i = static_cast<std::size_t>(w); i < a.seeds.size();
               i += static_cast<std::size_t>(workers))
            rows[i] = ablate(ds, pool, cfg, mode, a.k, a.seeds[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(fail_mu);
          if (!fail) fail = std::current_exception();
        }
      });
    }
    for (std::thread& t : threads) t.join();
    if (fail) std::rethrow_exception(fail);
  }

  OutputGuard guard;
  guard.file(a.out);
  write_ablation_csv(rows, a.out);

  double mean = 0.0;
  for (const AblateResult& r : rows) {
    std::cout << "seed " << r.seed << ": test acc " << repr(r.test_acc)
              << " (best val " << repr(r.best_val_acc) << ")\n";
    mean += r.test_acc;
  }
  mean /= rows.empty() ? 1.0 : static_cast<double>(rows.size());

  RunManifest m("ablate", a.out + ".run.json");
  guard.file(m.path());
  m.input(a.dataset);
  m.input(a.concepts);
  if (!a.config.empty()) m.input(a.config);
  m.config(json{{"mode", a.mode}, {"k", a.k}, {"seeds", a.seeds}});
  m.output(a.out);
  m.write();
  guard.disarm();
  std::cout << "mode " << a.mode << ": mean test acc " << repr(mean) << " over "
            << rows.size() << " seeds -> " << a.out << "\n";
}

// ---- report ----

struct ReportArgs {
  std::string ckpt;
  std::string dataset;
  std::string concepts;
  std::string concept_id;
  std::string split = "test";
  std::string out;  // prefix
};

void run_report(const ReportArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  std::vector<Concept> concepts =
      checkpoint_concepts(ck, load_concepts_jsonl(a.concepts));
  Dataset ds = load_dataset(a.dataset);
  split_dataset(ds, ck.config.train_ratio, ck.config.val_ratio,
                ck.config.test_ratio, ck.config.seed);

  Model model = ck.model;
  SimilarityDistribution d =
      similarity_distribution(model, ds, concepts, a.split, a.concept_id);

  OutputGuard guard;
  std::string csv_path = a.out + ".csv";
  std::string svg_path = a.out + ".svg";
  guard.file(csv_path);
  guard.file(svg_path);
  write_histogram_csv(d, csv_path);
  write_histogram_svg(d, "subject vs concept similarity (" + a.split + "): " + a.concept_id,
                      svg_path);

  double mean = 0.0;
  for (double v : d.similarities) mean += v;
  if (!d.similarities.empty()) mean /= static_cast<double>(d.similarities.size());

  RunManifest m("report", a.out + ".run.json");
  guard.file(m.path());
  m.input(a.ckpt);
  m.input(a.dataset);
  m.input(a.concepts);
  m.seed(ck.config.seed);
  m.config(json{{"concept", a.concept_id}, {"split", a.split}});
  m.output(csv_path);
  m.output(svg_path);
  m.write();
  guard.disarm();
  std::cout << "similarity of " << d.similarities.size() << " subjects to '"
            << a.concept_id << "', mean " << repr(mean) << " -> " << csv_path
            << ", " << svg_path << "\n";
}

void add_train_flags(CLI::App* sc, TrainArgs& a) {
  sc->add_option("--seed", a.flag.seed, "rng seed for splits, init, batches");
  sc->add_option("--epochs", a.flag.epochs, "max training epochs");
  sc->add_option("--batches-per-epoch", a.flag.batches_per_epoch, "batches per epoch");
  sc->add_option("--pos-per-batch", a.flag.pos_per_batch, "positive subjects per batch");
  sc->add_option("--neg-per-batch", a.flag.neg_per_batch, "negative subjects per batch");
  sc->add_option("--lr", a.flag.lr, "learning rate");
  sc->add_option("--weight-decay", a.flag.weight_decay, "decoupled weight decay");
  sc->add_option("--dropout", a.flag.dropout, "node dropout rate in [0,1)");
  sc->add_option("--validate-every", a.flag.validate_every, "epochs between validations");
  sc->add_option("--patience", a.flag.patience,
                 "consecutive non-improving validations before stopping");
  sc->add_option("--lambda-sp", a.flag.lambda_sp, "L1 sparsity weight on the readout");
  sc->add_option("--lambda-dir", a.flag.lambda_dir, "direction prior hinge weight");
  sc->add_option("--tau", a.flag.tau, "binarization threshold for graph structure");
  sc->add_option("--n-c", a.n_c, "keep only the first N concepts of the input list");
  sc->add_option("--hidden", a.flag.hidden, "embedding width");
  sc->add_flag("--linear-logits", a.linear_logits,
               "skip the sigmoid squash on concept scores before the readout");
  sc->add_option("--train-ratio", a.flag.train_ratio, "train split fraction");
  sc->add_option("--val-ratio", a.flag.val_ratio, "validation split fraction");
  sc->add_option("--test-ratio", a.flag.test_ratio, "test split fraction");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "conceptneuro: functional connectivity graphs, text-derived concept "
      "subgraphs, and concept-bottleneck classification"};
  app.require_subcommand(1);

  auto atlas_cmd = app.add_subcommand("atlas", "atlas utilities");
  atlas_cmd->require_subcommand(1);
  auto atlas_args = std::make_shared<AtlasArgs>();
  auto* atlas_validate = atlas_cmd->add_subcommand("validate", "check an atlas file and print a schema report");
  atlas_validate->add_option("atlas", atlas_args->path, "atlas JSON file")->required();
  atlas_validate->callback([atlas_args] { run_atlas_validate(*atlas_args); });

  auto fc_cmd = app.add_subcommand("fc", "functional connectivity utilities");
  fc_cmd->require_subcommand(1);
  auto fc_args = std::make_shared<FcArgs>();
  auto* fc_compute = fc_cmd->add_subcommand("compute", "compute per-subject FC matrices from a cohort manifest");
  fc_compute->add_option("--manifest", fc_args->manifest, "cohort manifest JSON")->required();
  fc_compute->add_option("--out", fc_args->out, "output directory")->required();
  fc_compute->callback([fc_args] { run_fc_compute(*fc_args); });

  auto concepts_cmd = app.add_subcommand("concepts", "concept generation and processing");
  concepts_cmd->require_subcommand(1);

  auto gen_args = std::make_shared<GenerateArgs>();
  auto* gen = concepts_cmd->add_subcommand("generate", "ask a provider for raw concept lines (reads CONCEPTNEURO_LLM_API_KEY for http providers)");
  gen->add_option("--disorder", gen_args->disorder, "disorder name")->required();
  gen->add_option("--provider", gen_args->provider, "provider config JSON")->required();
  gen->add_option("--out", gen_args->out, "output concepts JSONL")->required();
  gen->add_option("--records", gen_args->records, "generation audit log path (default <out>.records.jsonl)");
  gen->add_option("--template", gen_args->template_file, "custom prompt template file");
  gen->callback([gen_args] { run_generate(*gen_args); });

  auto parse_args = std::make_shared<ParseArgs>();
  auto* parse = concepts_cmd->add_subcommand("parse", "resolve raw concept text into ROI sets");
  parse->add_option("--in", parse_args->in, "input concepts JSONL")->required();
  parse->add_option("--atlas", parse_args->atlas, "atlas JSON")->required();
  parse->add_option("--lexicon", parse_args->lexicon, "region lexicon JSON")->required();
  parse->add_option("--out", parse_args->out, "output concepts JSONL")->required();
  parse->callback([parse_args] { run_parse(*parse_args); });

  auto filter_args = std::make_shared<FilterArgs>();
  auto* filter = concepts_cmd->add_subcommand("filter", "drop unresolved, undersized and near-duplicate concepts");
  filter->add_option("--in", filter_args->in, "input concepts JSONL")->required();
  filter->add_option("--out", filter_args->out, "output concepts JSONL")->required();
  filter->add_option("--jaccard", filter_args->jaccard, "edge-set overlap above which a concept is a duplicate");
  filter->callback([filter_args] { run_filter(*filter_args); });

  auto rank_args = std::make_shared<RankArgs>();
  auto* rank = concepts_cmd->add_subcommand("rank", "order concepts by mean bipartite FC over a split");
  rank->add_option("--in", rank_args->in, "input concepts JSONL")->required();
  rank->add_option("--dataset", rank_args->dataset, "cohort manifest JSON")->required();
  rank->add_option("--out", rank_args->out, "output concepts JSONL")->required();
  rank->add_option("--split", rank_args->split, "subject split to score on: all, train, val or test");
  rank->add_flag("--absolute", rank_args->absolute, "rank by absolute edge weight");
  rank->add_option("--seed", rank_args->seed, "split seed (ignored for --split all)");
  rank->add_option("--train-ratio", rank_args->train_ratio, "train split fraction");
  rank->add_option("--val-ratio", rank_args->val_ratio, "validation split fraction");
  rank->add_option("--test-ratio", rank_args->test_ratio, "test split fraction");
  rank->callback([rank_args] { run_rank(*rank_args); });

  auto train_args = std::make_shared<TrainArgs>();
  auto* train_cmd = app.add_subcommand("train", "train the concept bottleneck classifier");
  train_cmd->add_option("--dataset", train_args->dataset, "cohort manifest JSON")->required();
  train_cmd->add_option("--concepts", train_args->concepts, "ranked concepts JSONL")->required();
  train_cmd->add_option("--config", train_args->config, "train config JSON; flags override file values");
  train_cmd->add_option("--out", train_args->out, "checkpoint output path")->required();
  train_cmd->add_option("--jobs", train_args->jobs, "validation worker threads; >1 is outside the determinism guarantee");
  add_train_flags(train_cmd, *train_args);
  train_args->cmd = train_cmd;
  train_cmd->callback([train_args] { run_train(*train_args); });

  auto eval_args = std::make_shared<EvalArgs>();
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a split");
  eval_cmd->add_option("--ckpt", eval_args->ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval_args->dataset, "cohort manifest JSON")->required();
  eval_cmd->add_option("--concepts", eval_args->concepts, "concepts JSONL the checkpoint was trained on")->required();
  eval_cmd->add_option("--expert", eval_args->expert, "expert top-k JSON for agreement metrics");
  eval_cmd->add_option("--split", eval_args->split, "split to score: train, val or test");
  eval_cmd->add_option("--out", eval_args->out, "prefix for predictions/scores/importance CSVs");
  eval_cmd->add_option("--jobs", eval_args->jobs, "evaluation worker threads; >1 is outside the determinism guarantee");
  eval_cmd->callback([eval_args] { run_eval(*eval_args); });

  auto ablate_args = std::make_shared<AblateArgs>();
  auto* ablate_cmd = app.add_subcommand("ablate", "retrain under full, random or top-k concept sets");
  ablate_cmd->add_option("--dataset", ablate_args->dataset, "cohort manifest JSON")->required();
  ablate_cmd->add_option("--concepts", ablate_args->concepts, "concept pool JSONL")->required();
  ablate_cmd->add_option("--config", ablate_args->config, "train config JSON (defaults when omitted)");
  ablate_cmd->add_option("--mode", ablate_args->mode, "full, random or topk")->required();
  ablate_cmd->add_option("--k", ablate_args->k, "concepts kept in topk mode");
  ablate_cmd->add_option("--seeds", ablate_args->seeds, "comma separated run seeds")->required()->delimiter(',');
  ablate_cmd->add_option("--out", ablate_args->out, "ablation CSV path")->required();
  ablate_cmd->add_option("--jobs", ablate_args->jobs, "parallel runs across seeds");
  ablate_cmd->callback([ablate_args] { run_ablate(*ablate_args); });

  auto report_args = std::make_shared<ReportArgs>();
  auto* report_cmd = app.add_subcommand("report", "similarity histogram for one concept as CSV and SVG");
  report_cmd->add_option("--ckpt", report_args->ckpt, "checkpoint file")->required();
  report_cmd->add_option("--dataset", report_args->dataset, "cohort manifest JSON")->required();
  report_cmd->add_option("--concepts", report_args->concepts, "concepts JSONL the checkpoint was trained on")->required();
  report_cmd->add_option("--concept", report_args->concept_id, "concept id to plot")->required();
  report_cmd->add_option("--split", report_args->split, "split to score: train, val or test");
  report_cmd->add_option("--out", report_args->out, "output prefix for .csv and .svg")->required();
  report_cmd->callback([report_args] { run_report(*report_args); });

  auto synth_args = std::make_shared<SynthArgs>();
  auto* synth_cmd = app.add_subcommand("synth", "generate a labeled cohort with planted connectivity effects");
  synth_cmd->add_option("--spec", synth_args->spec, "cohort spec JSON (bundled default when omitted)");
  synth_cmd->add_option("--out", synth_args->out, "output directory")->required();
  synth_cmd->callback([synth_args] { run_synth(*synth_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << single_line(e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << single_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal-error: " << single_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
