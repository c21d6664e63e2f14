#include "causalrec/pipeline.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "causalrec/errors.hpp"

namespace causalrec::pipeline {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

nlohmann::ordered_json model_json(const model::ModelConfig& c) {
  nlohmann::ordered_json j;
  j["n_max"] = c.n_max;
  j["num_items"] = c.num_items;
  j["D"] = c.D;
  j["d_k"] = c.d_k;
  j["d_v"] = c.d_v;
  j["L"] = c.L;
  j["dropout"] = c.dropout;
  j["alpha"] = c.alpha;
  j["mode"] = model::to_string(c.mode);
  j["filter_threshold"] = c.filter_threshold;
  j["value_norm"] = c.value_norm;
  j["ln_eps"] = c.ln_eps;
  return j;
}

model::ModelConfig model_from(const nlohmann::json& j) {
  try {
    model::ModelConfig c;
    c.n_max = j.at("n_max").get<std::size_t>();
    c.num_items = j.at("num_items").get<int>();
    c.D = j.at("D").get<std::size_t>();
    c.d_k = j.at("d_k").get<std::size_t>();
    c.d_v = j.at("d_v").get<std::size_t>();
    c.L = j.at("L").get<std::size_t>();
    c.dropout = j.at("dropout").get<Real>();
    c.alpha = j.at("alpha").get<Real>();
    c.mode = model::attention_mode_from_string(j.at("mode").get<std::string>());
    c.filter_threshold = j.at("filter_threshold").get<Real>();
    c.value_norm = j.at("value_norm").get<bool>();
    c.ln_eps = j.at("ln_eps").get<Real>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

}  // namespace

LoadedData load_data(const DataSource& src) {
  LoadedData out;
  if (src.input.empty()) {
    Rng rng(derive_seed(src.seed, "toy"));
    const auto records =
        data::planted_pairs_dataset(src.toy.users, src.toy.items, src.toy.min_len, src.toy.max_len, rng);
    out.records = records.size();
    out.sequences = data::build_sequences(records, src.n_max);
  } else if (ends_with(src.input, ".crseq")) {
    std::ifstream in(src.input, std::ios::binary);
    if (!in) throw IngestionError("cannot open " + src.input);
    out.sequences = data::read_cache(in);
    if (src.n_max < 2) throw ParameterError("n_max must be >= 2");
    for (auto& s : out.sequences.sequences) {
      out.records += s.size();
      if (s.size() > src.n_max) s.erase(s.begin(), s.end() - static_cast<long>(src.n_max));
    }
    out.sequences.n_max = src.n_max;
  } else {
    std::ifstream in(src.input);
    if (!in) throw IngestionError("cannot open " + src.input);
    const data::ParseResult parsed = data::parse_interactions(in, data::format_from_path(src.input));
    out.records = parsed.records.size();
    out.malformed = parsed.malformed;
    out.sequences = data::build_sequences(parsed.records, src.n_max);
  }
  out.split = data::split_leave_last_two(out.sequences);
  return out;
}

std::string summary_line(const LoadedData& d) {
  std::ostringstream os;
  os << "records=" << d.records << " malformed=" << d.malformed << " users=" << d.split.num_users()
     << " items=" << d.split.num_items() << " eval_users=" << d.split.num_eval_users()
     << " n_max=" << d.split.n_max;
  return os.str();
}

std::string model_config_json(const model::ModelConfig& c) { return model_json(c).dump(); }

model::ModelConfig model_config_from_json(const std::string& text) {
  try {
    return model_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

std::string train_config_json(const train::TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.learning_rate;
  j["batch"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lambda"] = c.lambda;
  j["tau"] = c.tau;
  j["seed"] = c.seed;
  j["variant"] = train::to_string(c.variant);
  j["freeze_causal"] = c.freeze_causal;
  j["centered_covariance"] = c.centered_covariance;
  j["rho0"] = c.rho0;
  j["gamma1"] = c.gamma1;
  j["gamma2"] = c.gamma2;
  return j.dump();
}

Checkpoint to_checkpoint(const model::ModelConfig& mcfg, const model::ModelParams& params,
                         const causal::CausalState& state, const std::string& train_json) {
  Checkpoint ck;
  nlohmann::ordered_json cfg;
  cfg["model"] = model_json(mcfg);
  if (!train_json.empty()) cfg["train"] = nlohmann::ordered_json::parse(train_json);
  ck.config = cfg.dump();
  params.for_each([&](const std::string& name, const Tensor& t) { ck.tensors.emplace_back(name, t); });
  ck.tensors.emplace_back("causal.W", state.W);
  ck.tensors.emplace_back("causal.R", state.R);
  ck.tensors.emplace_back("causal.scalars",
                          Tensor::vector({state.rho, state.beta_mult, state.kappa, state.kappa_prev, state.lambda,
                                          state.gamma1, state.gamma2, state.rho_max, state.tau}));
  return ck;
}

TrainedModel from_checkpoint(const Checkpoint& ck) {
  TrainedModel m;
  m.config_json = ck.config;
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(ck.config);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  if (!cfg.contains("model")) throw FormatError("checkpoint config has no model entry");
  m.mcfg = model_from(cfg["model"]);
  m.mcfg.validate();
  Rng unused(0);
  m.params = model::ModelParams::init(m.mcfg, unused);
  m.params.for_each([&](const std::string& name, Tensor& t) {
    const Tensor& src = ck.get(name);
    if (src.shape() != t.shape()) throw FormatError("checkpoint tensor " + name + " has the wrong shape");
    t = Tensor(src.shape(), std::vector<Real>(src.data().begin(), src.data().end()));
  });
  m.state = causal::CausalState::initial(m.mcfg.n_max);
  m.state.W = ck.get("causal.W");
  m.state.R = ck.get("causal.R");
  const Tensor& s = ck.get("causal.scalars");
  if (s.size() != 9) throw FormatError("checkpoint causal.scalars must hold 9 values");
  m.state.rho = s[0];
  m.state.beta_mult = s[1];
  m.state.kappa = s[2];
  m.state.kappa_prev = s[3];
  m.state.lambda = s[4];
  m.state.gamma1 = s[5];
  m.state.gamma2 = s[6];
  m.state.rho_max = s[7];
  m.state.tau = s[8];
  return m;
}

void save_model(const std::string& path, const model::ModelConfig& mcfg, const model::ModelParams& params,
                const causal::CausalState& state, const std::string& train_json) {
  save_checkpoint(path, to_checkpoint(mcfg, params, state, train_json));
}

TrainedModel load_model(const std::string& path) { return from_checkpoint(load_checkpoint(path)); }

SelectedFit fit_select_best(train::Trainer& trainer, const data::SplitDataset& ds, eval::EvalConfig valid_cfg,
                            std::vector<train::StepRecord>* records) {
  valid_cfg.split = data::EvalSplit::valid;
  SelectedFit out;
  Real best = -1.0;
  for (std::size_t e = 0; e < trainer.train_config().epochs; ++e) {
    out.epochs.push_back(trainer.train_epoch(records));
    out.valid.push_back(
        eval::evaluate(trainer.params(), trainer.model_config(), trainer.causal_state().R, ds, valid_cfg));
    if (out.valid.back().ndcg > best) {
      best = out.valid.back().ndcg;
      out.best_epoch = e + 1;
      out.params = trainer.params();
      out.state = trainer.causal_state();
    }
  }
  if (out.best_epoch == 0) throw ContractError("fit_select_best: no epochs to select from");
  return out;
}

}  // namespace causalrec::pipeline
