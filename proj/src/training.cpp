#include "causalrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <unordered_set>

#include "causalrec/errors.hpp"

namespace causalrec::train {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_causality: return "no_causality";
    case Variant::no_sparse: return "no_sparse";
    case Variant::no_attention: return "no_attention";
    case Variant::filter: return "filter";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : kAllVariants)
    if (s == to_string(v)) return v;
  throw ParameterError("unknown variant: " + s);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("TrainConfig: learning_rate must be > 0");
  if (batch_size < 1) throw ParameterError("TrainConfig: batch_size must be >= 1");
  if (!(lambda >= 0.0)) throw ParameterError("TrainConfig: lambda must be >= 0");
  if (!(tau > 0.0)) throw ParameterError("TrainConfig: tau must be > 0");
  if (!(rho0 > 0.0) || !(gamma1 >= 1.0) || !(gamma2 >= 0.0))
    throw ParameterError("TrainConfig: need rho0 > 0, gamma1 >= 1, gamma2 >= 0");
}

model::ModelConfig apply_variant(model::ModelConfig cfg, Variant v) {
  switch (v) {
    case Variant::full:
    case Variant::no_sparse: cfg.mode = model::AttentionMode::boost; break;
    case Variant::no_causality: cfg.mode = model::AttentionMode::plain; break;
    case Variant::no_attention: cfg.mode = model::AttentionMode::causal_only; break;
    case Variant::filter: cfg.mode = model::AttentionMode::filter; break;
  }
  return cfg;
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["L_rec"] = r.L_rec;
  j["L_L1"] = r.L_L1;
  j["L_DAG"] = r.L_DAG;
  j["total"] = r.total;
  j["h_mean"] = r.h_mean;
  j["grad_norm"] = r.grad_norm;
  return j.dump();
}

void write_step_records(std::ostream& out, std::span<const StepRecord> records) {
  for (const StepRecord& r : records) out << to_json_line(r) << '\n';
}

std::vector<int> sample_negatives(std::span<const int> exclude, int num_items, std::size_t count, Rng& rng,
                                  bool distinct) {
  if (count < 1) throw ParameterError("sample_negatives: count must be >= 1");
  const std::unordered_set<int> banned(exclude.begin(), exclude.end());
  std::vector<int> pool;
  pool.reserve(static_cast<std::size_t>(std::max(num_items, 0)));
  for (int i = 1; i <= num_items; ++i)
    if (!banned.contains(i)) pool.push_back(i);
  const std::size_t need = distinct ? count : 1;
  if (pool.size() < need) {
    throw SamplingError("sample_negatives: " + std::to_string(pool.size()) + " admissible items, need " +
                        std::to_string(need));
  }
  std::vector<int> out;
  out.reserve(count);
  if (distinct) {
    for (std::size_t k = 0; k < count; ++k) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k),
                                                              static_cast<std::int64_t>(pool.size()) - 1));
      std::swap(pool[k], pool[j]);
      out.push_back(pool[k]);
    }
  } else {
    for (std::size_t k = 0; k < count; ++k)
      out.push_back(pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))]);
  }
  return out;
}

namespace {

// -sum[log sigma(pos) + log sigma(-neg)]
Var rec_loss_sum(const Var& pos, const Var& neg) {
  return scale(add(sum(log_sigmoid(pos)), sum(log_sigmoid(scale(neg, -1.0)))), -1.0);
}

Real log_sigmoid_value(Real x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace

Var rec_loss(const Var& positive_scores, const Var& negative_scores) {
  require_same_shape(positive_scores.value(), negative_scores.value(), "rec_loss");
  return scale(rec_loss_sum(positive_scores, negative_scores), 1.0 / static_cast<Real>(positive_scores.value().size()));
}

Real rec_loss(std::span<const Real> positive_scores, std::span<const Real> negative_scores) {
  if (positive_scores.size() != negative_scores.size() || positive_scores.empty())
    throw DimensionError("rec_loss: need equally many positive and negative scores");
  Real s = 0.0;
  for (std::size_t i = 0; i < positive_scores.size(); ++i)
    s -= log_sigmoid_value(positive_scores[i]) + log_sigmoid_value(-negative_scores[i]);
  return s / static_cast<Real>(positive_scores.size());
}

Real total_loss(Real l_rec, Real l_l1, Real l_dag, Real lambda) { return l_rec + lambda * l_l1 + l_dag; }

Var total_loss(const Var& l_rec, const Var& l_l1, const Var& l_dag, Real lambda) {
  return add(add(l_rec, scale(l_l1, lambda)), l_dag);
}

void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: parameter list changed between steps");
  for (Tensor* p : params)
    for (Real g : p->grad())
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient, step aborted");
  ++state.t;
  const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(state.t));
  const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const auto g = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

Trainer::Trainer(const data::SplitDataset& ds, model::ModelConfig mcfg, TrainConfig tcfg)
    : ds_(ds),
      mcfg_(apply_variant(std::move(mcfg), tcfg.variant)),
      tcfg_(tcfg),
      shuffle_rng_(derive_seed(tcfg.seed, "shuffle")),
      dropout_rng_(derive_seed(tcfg.seed, "dropout")),
      negative_rng_(derive_seed(tcfg.seed, "negatives")) {
  tcfg_.validate();
  if (mcfg_.num_items == 0) mcfg_.num_items = ds.num_items();
  if (mcfg_.n_max != ds.n_max) throw ParameterError("Trainer: model n_max differs from the dataset's n_max");
  if (mcfg_.num_items != ds.num_items()) throw ParameterError("Trainer: model num_items differs from the dataset");
  Rng init_rng(derive_seed(tcfg.seed, "init"));
  params_ = model::ModelParams::init(mcfg_, init_rng);
  params_.set_requires_grad(true);
  params_.for_each([this](const std::string&, Tensor& t) { param_ptrs_.push_back(&t); });
  state_ = causal::CausalState::initial(mcfg_.n_max);
  state_.rho = tcfg_.rho0;
  state_.lambda = tcfg_.effective_lambda();
  state_.gamma1 = tcfg_.gamma1;
  state_.gamma2 = tcfg_.gamma2;
  state_.tau = tcfg_.tau;
  examples_ = data::training_examples(ds);
  if (examples_.empty()) throw ContractError("Trainer: no user has at least two training items");
  w_sum_ = Tensor::zeros({mcfg_.n_max, mcfg_.n_max});
}

StepRecord Trainer::step(std::span<const std::size_t> batch) {
  params_.zero_grad();
  Tape tape;
  const model::BoundParams bound = model::bind(tape, params_);
  std::vector<Var> finals;
  std::vector<Var> terms;
  std::size_t positions_total = 0;
  for (std::size_t idx : batch) {
    const data::TrainingExample& ex = examples_[idx];
    const Var final_repr = model::forward(ex.input, bound, state_.R, mcfg_, true, dropout_rng_);
    finals.push_back(final_repr);
    std::vector<int> positions, targets;
    for (std::size_t t = 0; t < ex.targets.size(); ++t) {
      if (ex.targets[t] == 0) continue;
      positions.push_back(static_cast<int>(t));
      targets.push_back(ex.targets[t]);
    }
    const std::vector<int> negatives =
        sample_negatives(ds_.splits[ex.user].train, mcfg_.num_items, positions.size(), negative_rng_);
    const Var h = gather_rows(final_repr, positions);
    const Var pos = rowwise_dot(h, gather_rows(bound.M, targets));
    const Var neg = rowwise_dot(h, gather_rows(bound.M, negatives));
    terms.push_back(rec_loss_sum(pos, neg));
    positions_total += positions.size();
  }
  const Var l_rec = scale(add_n(terms), 1.0 / static_cast<Real>(positions_total));

  StepRecord rec;
  rec.epoch = epoch_ + 1;
  rec.step = ++global_step_;
  rec.L_rec = l_rec.value().item();
  Var loss = l_rec;
  Tensor w_off;
  if (tcfg_.causal_frozen()) {
    std::vector<Tensor> values;
    for (const Var& f : finals) values.push_back(f.value());
    w_off = causal::off_diagonal(causal::batch_covariance(values, tcfg_.centered_covariance).W);
    rec.h_mean = causal::acyclicity_penalty(w_off);
    rec.total = rec.L_rec;
  } else {
    const Var w = causal::off_diagonal(causal::batch_covariance(finals, tcfg_.centered_covariance));
    const Var h = causal::acyclicity_penalty(w);
    const Var l1 = causal::l1_penalty(w);
    const Var dag = causal::dag_loss(h, state_);
    loss = total_loss(l_rec, l1, dag, state_.lambda);
    w_off = w.value();
    rec.h_mean = h.value().item();
    rec.L_L1 = l1.value().item();
    rec.L_DAG = dag.value().item();
    rec.total = loss.value().item();
  }
  if (!std::isfinite(rec.total))
    throw NumericError("training step " + std::to_string(rec.step) + ": non-finite loss");

  tape.backward(loss);
  params_.mask_padding_grad();
  Real g2 = 0.0;
  for (Tensor* p : param_ptrs_)
    for (Real g : p->grad()) g2 += g * g;
  rec.grad_norm = std::sqrt(g2);
  adam_step(param_ptrs_, adam_, AdamConfig{tcfg_.learning_rate});

  for (std::size_t i = 0; i < w_sum_.size(); ++i) w_sum_[i] += w_off[i];
  ++w_count_;
  epoch_h_.push_back(rec.h_mean);
  return rec;
}

EpochSummary Trainer::train_epoch(std::vector<StepRecord>* records) {
  std::vector<std::size_t> order(examples_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(shuffle_rng_.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  w_sum_ = Tensor::zeros({mcfg_.n_max, mcfg_.n_max});
  w_count_ = 0;
  epoch_h_.clear();

  EpochSummary summary;
  summary.epoch = epoch_ + 1;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < order.size(); start += tcfg_.batch_size) {
    const std::size_t end = std::min(order.size(), start + tcfg_.batch_size);
    StepRecord r;
    try {
      r = step(std::span<const std::size_t>(order).subspan(start, end - start));
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch_ + 1) + " aborted: " + e.what());
    }
    summary.L_rec += r.L_rec;
    summary.h_mean += r.h_mean;
    ++steps;
    if (records) records->push_back(r);
  }
  summary.L_rec /= static_cast<Real>(steps);
  summary.h_mean /= static_cast<Real>(steps);

  if (!tcfg_.causal_frozen()) state_ = causal::update_multipliers(state_, epoch_h_);
  state_.W = scaled(w_sum_, 1.0 / static_cast<Real>(w_count_));
  state_.R = causal::extract_relation_matrix(state_.W, state_.tau);
  ++epoch_;

  summary.rho = state_.rho;
  summary.beta_mult = state_.beta_mult;
  for (Real v : state_.R.data()) summary.relations += v != 0.0;
  return summary;
}

std::vector<EpochSummary> Trainer::fit(std::vector<StepRecord>* records) {
  std::vector<EpochSummary> out;
  for (std::size_t e = 0; e < tcfg_.epochs; ++e) out.push_back(train_epoch(records));
  return out;
}

}  // namespace causalrec::train
