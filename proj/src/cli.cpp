#include "causalrec/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "causalrec/errors.hpp"
#include "causalrec/pipeline.hpp"
#include "causalrec/scmlab.hpp"

namespace causalrec::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  // data
  std::string input;
  std::size_t n_max = 200;
  std::size_t toy_users = 50;
  int toy_items = 20;
  std::size_t toy_min_len = 6;
  std::size_t toy_max_len = 12;
  std::string out = "causalrec_out";
  std::uint64_t seed = 42;
  bool deterministic = false;
  // model
  std::size_t hidden = 64;
  std::size_t layers = 2;
  Real dropout = 0.2;
  Real alpha = 1.0;
  Real filter_threshold = 0.9;
  bool value_norm = false;
  // training
  std::size_t epochs = 20;
  Real lr = 0.001;
  std::size_t batch = 256;
  Real lambda = 1e-4;
  Real tau = 0.3;
  std::string variant = "full";
  bool freeze_causal = false;
  bool centered_cov = false;
  bool select_best = false;
  // evaluation
  std::string checkpoint;
  std::size_t negatives = 100;
  int z = 10;
  std::string split = "test";
  std::string ndcg_norm = "per_user";
  // explain
  std::vector<std::string> users;
  std::size_t top_k = 5;
  std::size_t top_n = 10;
  // scmlab
  std::string mode = "all";
  std::size_t trials = 20;
  std::size_t samples = 10000;
  std::size_t nodes = 5;
  std::size_t edges = 8;
};

void add_data(CLI::App* app, Options& o) {
  app->add_option("--input", o.input, "Interaction log (.tsv/.csv) or .crseq cache; omit for the planted toy log");
  app->add_option("--nmax", o.n_max, "Maximum sequence length")->capture_default_str()->check(CLI::Range(2, 100000));
  app->add_option("--toy-users", o.toy_users, "Users in the toy log")->capture_default_str();
  app->add_option("--toy-items", o.toy_items, "Items in the toy log (even)")->capture_default_str();
  app->add_option("--toy-min-len", o.toy_min_len, "Shortest toy sequence")->capture_default_str();
  app->add_option("--toy-max-len", o.toy_max_len, "Longest toy sequence")->capture_default_str();
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
  app->add_option("--seed", o.seed, "Root seed")->capture_default_str();
  app->add_flag("--deterministic", o.deterministic, "Require bit-reproducible execution (always the case here)");
  app->fallthrough();
}

void add_model(CLI::App* app, Options& o) {
  app->add_option("--hidden", o.hidden, "Hidden size D (= d_k = d_v)")->capture_default_str();
  app->add_option("--layers", o.layers, "Number of attention layers")->capture_default_str();
  app->add_option("--dropout", o.dropout, "Dropout probability")->capture_default_str();
  app->add_option("--alpha", o.alpha, "Causal boost strength")->capture_default_str();
  app->add_option("--filter-threshold", o.filter_threshold, "Relation threshold of the filter variant")
      ->capture_default_str();
  app->add_flag("--value-norm", o.value_norm, "LayerNorm the value rows before attention");
}

void add_train(CLI::App* app, Options& o) {
  app->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  app->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--batch", o.batch, "Batch size")->capture_default_str();
  app->add_option("--lambda", o.lambda, "L1 weight on the relation matrix")->capture_default_str();
  app->add_option("--tau", o.tau, "Relation threshold relative to max |W|")->capture_default_str();
  app->add_option("--variant", o.variant, "full, no_causality, no_sparse, no_attention or filter")
      ->capture_default_str()
      ->check(CLI::IsMember({"full", "no_causality", "no_sparse", "no_attention", "filter"}));
  app->add_flag("--freeze-causal", o.freeze_causal, "Keep the causal losses out of the objective");
  app->add_flag("--centered-cov", o.centered_cov, "Center representations before the covariance");
  app->add_flag("--select-best", o.select_best, "Keep the epoch with the best validation NDCG");
}

void add_eval(CLI::App* app, Options& o) {
  app->add_option("--negatives", o.negatives, "Sampled negatives per user")->capture_default_str();
  app->add_option("--z", o.z, "Cutoff for HR@Z and NDCG@Z")->capture_default_str();
  app->add_option("--ndcg-norm", o.ndcg_norm, "per_user or max_over_users")
      ->capture_default_str()
      ->check(CLI::IsMember({"per_user", "max_over_users"}));
}

pipeline::DataSource data_source(const Options& o) {
  pipeline::DataSource src;
  src.input = o.input;
  src.n_max = o.n_max;
  src.seed = o.seed;
  src.toy = {o.toy_users, o.toy_items, o.toy_min_len, o.toy_max_len};
  return src;
}

std::string dataset_name(const Options& o) { return o.input.empty() ? "toy" : fs::path(o.input).stem().string(); }

model::ModelConfig model_config(const Options& o, const data::SplitDataset& ds) {
  model::ModelConfig m;
  m.n_max = ds.n_max;
  m.num_items = ds.num_items();
  m.set_hidden(o.hidden);
  m.L = o.layers;
  m.dropout = o.dropout;
  m.alpha = o.alpha;
  m.filter_threshold = o.filter_threshold;
  m.value_norm = o.value_norm;
  m.validate();
  return m;
}

train::TrainConfig train_config(const Options& o) {
  train::TrainConfig t;
  t.learning_rate = o.lr;
  t.batch_size = o.batch;
  t.epochs = o.epochs;
  t.lambda = o.lambda;
  t.tau = o.tau;
  t.seed = o.seed;
  t.variant = train::variant_from_string(o.variant);
  t.freeze_causal = o.freeze_causal;
  t.centered_covariance = o.centered_cov;
  t.validate();
  return t;
}

eval::EvalConfig eval_config(const Options& o) {
  eval::EvalConfig e;
  e.z = o.z;
  e.negatives = o.negatives;
  e.seed = o.seed;
  e.split = o.split == "valid" ? data::EvalSplit::valid : data::EvalSplit::test;
  e.norm = o.ndcg_norm == "max_over_users" ? eval::NdcgNorm::max_over_users : eval::NdcgNorm::per_user;
  return e;
}

fs::path out_dir(const Options& o) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + o.out + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(p, mode);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

void write_resolved(const CLI::App* sub, const fs::path& dir) {
  open_out(dir / "resolved_config.ini") << "[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
}

void check_compatible(const model::ModelConfig& m, const data::SplitDataset& ds) {
  if (m.n_max != ds.n_max || m.num_items != ds.num_items()) {
    throw ParameterError("checkpoint was trained with n_max=" + std::to_string(m.n_max) + " and " +
                         std::to_string(m.num_items) + " items; the data has n_max=" + std::to_string(ds.n_max) +
                         " and " + std::to_string(ds.num_items()) + " items");
  }
}

int cmd_prepare(const Options& o, const CLI::App* sub, std::ostream& out) {
  const pipeline::LoadedData d = pipeline::load_data(data_source(o));
  const fs::path dir = out_dir(o);
  auto f = open_out(dir / "sequences.crseq", std::ios::binary);
  data::write_cache(f, d.sequences);
  write_resolved(sub, dir);
  out << pipeline::summary_line(d) << "\n";
  out << "cache: " << (dir / "sequences.crseq").string() << "\n";
  return 0;
}

struct TrainOutcome {
  model::ModelConfig mcfg;
  model::ModelParams params;
  causal::CausalState state;
  std::vector<train::StepRecord> records;
  std::size_t best_epoch = 0;
};

TrainOutcome train_model(const Options& o, const data::SplitDataset& ds, std::ostream* log) {
  const train::TrainConfig tcfg = train_config(o);
  train::Trainer trainer(ds, model_config(o, ds), tcfg);
  TrainOutcome r;
  if (o.select_best) {
    eval::EvalConfig vc = eval_config(o);
    pipeline::SelectedFit fit = pipeline::fit_select_best(trainer, ds, vc, &r.records);
    if (log)
      for (std::size_t e = 0; e < fit.epochs.size(); ++e) {
        const auto& s = fit.epochs[e];
        *log << "epoch " << s.epoch << " L_rec=" << s.L_rec << " h=" << s.h_mean << " rho=" << s.rho
             << " relations=" << s.relations << " valid " << fit.valid[e].to_line() << "\n";
      }
    r.params = std::move(fit.params);
    r.state = std::move(fit.state);
    r.best_epoch = fit.best_epoch;
  } else {
    for (std::size_t e = 0; e < tcfg.epochs; ++e) {
      const auto s = trainer.train_epoch(&r.records);
      if (log)
        *log << "epoch " << s.epoch << " L_rec=" << s.L_rec << " h=" << s.h_mean << " rho=" << s.rho
             << " relations=" << s.relations << "\n";
    }
    r.params = trainer.params();
    r.state = trainer.causal_state();
    r.best_epoch = tcfg.epochs;
  }
  r.mcfg = trainer.model_config();
  return r;
}

int cmd_train(const Options& o, const CLI::App* sub, std::ostream& out) {
  const pipeline::LoadedData d = pipeline::load_data(data_source(o));
  out << pipeline::summary_line(d) << "\n";
  const fs::path dir = out_dir(o);
  write_resolved(sub, dir);
  TrainOutcome r = train_model(o, d.split, &out);

  auto steps = open_out(dir / "steps.jsonl");
  train::write_step_records(steps, r.records);
  pipeline::save_model((dir / "model.ckpt").string(), r.mcfg, r.params, r.state,
                       pipeline::train_config_json(train_config(o)));
  auto wf = open_out(dir / "W.txt");
  causal::write_dense_matrix(wf, r.state.W);
  auto rf = open_out(dir / "R.txt");
  causal::write_dense_matrix(rf, r.state.R);
  auto ef = open_out(dir / "edges.txt");
  causal::write_edge_list(ef, r.state.W, r.state.R);

  const eval::MetricsReport rep = eval::evaluate(r.params, r.mcfg, r.state.R, d.split, eval_config(o));
  out << "selected epoch " << r.best_epoch << "\n" << rep.to_line() << "\n";
  auto mf = open_out(dir / "metrics.csv");
  mf << eval::MetricsReport::csv_header() << "\n" << rep.csv_row(dataset_name(o), o.variant, o.seed) << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  pipeline::TrainedModel m = pipeline::load_model(o.checkpoint);
  pipeline::DataSource src = data_source(o);
  src.n_max = m.mcfg.n_max;
  const pipeline::LoadedData d = pipeline::load_data(src);
  check_compatible(m.mcfg, d.split);
  const eval::MetricsReport rep = eval::evaluate(m.params, m.mcfg, m.state.R, d.split, eval_config(o));
  out << rep.to_line() << "\n";
  out << eval::MetricsReport::csv_header() << "\n" << rep.csv_row(dataset_name(o), model::to_string(m.mcfg.mode), o.seed)
      << "\n";
  return 0;
}

int cmd_ablate(const Options& o, const CLI::App* sub, std::ostream& out) {
  const pipeline::LoadedData d = pipeline::load_data(data_source(o));
  const fs::path dir = out_dir(o);
  write_resolved(sub, dir);
  std::ostringstream table;
  table << eval::MetricsReport::csv_header() << "\n";
  for (train::Variant v : train::kAllVariants) {
    Options ov = o;
    ov.variant = train::to_string(v);
    TrainOutcome r = train_model(ov, d.split, nullptr);
    const eval::MetricsReport rep = eval::evaluate(r.params, r.mcfg, r.state.R, d.split, eval_config(o));
    table << rep.csv_row(dataset_name(o), ov.variant, o.seed) << "\n";
  }
  out << table.str();
  open_out(dir / "ablation.csv") << table.str();
  return 0;
}

int cmd_explain(const Options& o, std::ostream& out) {
  pipeline::TrainedModel m = pipeline::load_model(o.checkpoint);
  pipeline::DataSource src = data_source(o);
  src.n_max = m.mcfg.n_max;
  const pipeline::LoadedData d = pipeline::load_data(src);
  check_compatible(m.mcfg, d.split);
  std::vector<std::size_t> targets;
  if (o.users.empty()) {
    for (std::size_t u = 0; u < std::min<std::size_t>(3, d.split.num_users()); ++u) targets.push_back(u);
  } else {
    for (const std::string& name : o.users) {
      const auto it = std::find(d.split.users.begin(), d.split.users.end(), name);
      if (it == d.split.users.end()) throw ParameterError("unknown user: " + name);
      targets.push_back(static_cast<std::size_t>(it - d.split.users.begin()));
    }
  }
  for (std::size_t u : targets) out << eval::explain(m.params, m.mcfg, m.state, d.split, u, o.top_k, o.top_n).to_text();
  return 0;
}

int cmd_scmlab(const Options& o, std::ostream& out) {
  const bool all = o.mode == "all";
  if (all || o.mode == "cov") {
    out << "# covariance: seed,n,scm_within,scm_entries,scm_max_z,attention_within,attention_entries,attention_max_z\n";
    for (std::size_t t = 0; t < o.trials; ++t) {
      const auto tr = scm::run_cov_trial(o.seed + t, o.nodes, o.samples);
      out << o.seed + t << "," << o.nodes << "," << tr.scm.within << "," << tr.scm.entries << "," << tr.scm.max_z
          << "," << tr.attention.check.within << "," << tr.attention.check.entries << "," << tr.attention.check.max_z
          << "\n";
    }
  }
  if (all || o.mode == "identify") {
    const std::size_t n = std::min<std::size_t>(o.nodes, 4);
    out << "# brute-force identification\n" << scm::trial_csv_header() << "\n";
    for (std::size_t t = 0; t < o.trials; ++t) {
      const auto r = scm::run_identify_trial(o.seed + t, n, o.samples);
      out << scm::to_csv({o.seed + t, n, r.shd, 0.0, true}) << "\n";
    }
    const scm::ScmInstance pair = scm::nonidentifiable_pair();
    const Tensor c = scm::closed_form_cov(pair);
    const Tensor fwd = Tensor::from_rows({{0, 1}, {0, 0}});
    out << "# unequal-variance pair: score(x0->x1)=" << scm::equal_variance_score(c, o.samples, fwd)
        << " score(x1->x0)=" << scm::equal_variance_score(c, o.samples, fwd.transposed()) << "\n";
  }
  if (all || o.mode == "notears") {
    out << "# notears recovery (" << o.edges << " edges)\n" << scm::trial_csv_header() << "\n";
    for (std::size_t t = 0; t < o.trials; ++t)
      out << scm::to_csv(scm::run_notears_trial(o.seed + t, o.nodes, o.edges, o.samples)) << "\n";
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causality-boosted self-attention recommender and linear SCM lab", "causalrec"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file with a [subcommand] section; command-line flags override it");
  Options o;

  CLI::App* prepare = app.add_subcommand("prepare", "Parse, split and cache an interaction log");
  add_data(prepare, o);
  add_common(prepare, o);

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model; writes step records, checkpoint and matrices");
  add_data(train_cmd, o);
  add_common(train_cmd, o);
  add_model(train_cmd, o);
  add_train(train_cmd, o);
  add_eval(train_cmd, o);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint with sampled-negative HR/NDCG");
  add_data(eval_cmd, o);
  add_common(eval_cmd, o);
  add_eval(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  eval_cmd->add_option("--split", o.split, "valid or test")->capture_default_str()->check(CLI::IsMember({"valid", "test"}));

  CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate every variant under one seed");
  add_data(ablate, o);
  add_common(ablate, o);
  add_model(ablate, o);
  add_train(ablate, o);
  add_eval(ablate, o);

  CLI::App* explain = app.add_subcommand("explain", "Report top causal edges and recommendations per user");
  add_data(explain, o);
  add_common(explain, o);
  explain->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  explain->add_option("--user", o.users, "User id (repeatable); default the first three users");
  explain->add_option("--top-k", o.top_k, "Edges per user")->capture_default_str();
  explain->add_option("--top-n", o.top_n, "Recommendations per user")->capture_default_str();

  CLI::App* lab = app.add_subcommand("scmlab", "Covariance, identifiability and recovery trials on linear SCMs");
  add_common(lab, o);
  lab->add_option("--mode", o.mode, "cov, identify, notears or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"cov", "identify", "notears", "all"}));
  lab->add_option("--trials", o.trials, "Trials per experiment")->capture_default_str();
  lab->add_option("--samples", o.samples, "Samples per trial")->capture_default_str();
  lab->add_option("--nodes", o.nodes, "Variables per SCM")->capture_default_str();
  lab->add_option("--edges", o.edges, "Edges for the recovery trials")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(o, prepare, out);
    if (train_cmd->parsed()) return cmd_train(o, train_cmd, out);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (ablate->parsed()) return cmd_ablate(o, ablate, out);
    if (explain->parsed()) return cmd_explain(o, out);
    if (lab->parsed()) return cmd_scmlab(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace causalrec::cli
