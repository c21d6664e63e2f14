#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "causalrec/autograd.hpp"
#include "causalrec/causal.hpp"
#include "causalrec/dataio.hpp"
#include "causalrec/model.hpp"
#include "causalrec/rng.hpp"

namespace causalrec::train {

enum class Variant { full, no_causality, no_sparse, no_attention, filter };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);
inline constexpr Variant kAllVariants[] = {Variant::full, Variant::no_causality, Variant::no_sparse,
                                           Variant::no_attention, Variant::filter};

struct TrainConfig {
  Real learning_rate = 0.001;
  std::size_t batch_size = 256;
  std::size_t epochs = 20;
  Real lambda = 1e-4;
  Real tau = 0.3;
  std::uint64_t seed = 42;
  Variant variant = Variant::full;
  // Causal losses stay out of the objective and the multiplier state is not
  // updated. Implied by no_causality.
  bool freeze_causal = false;
  bool centered_covariance = false;
  Real rho0 = 1.0;
  Real gamma1 = 10.0;
  Real gamma2 = 0.25;

  void validate() const;
  bool causal_frozen() const { return freeze_causal || variant == Variant::no_causality; }
  Real effective_lambda() const { return variant == Variant::no_sparse ? 0.0 : lambda; }
};

// Attention mode implied by the variant.
model::ModelConfig apply_variant(model::ModelConfig cfg, Variant v);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  Real L_rec = 0.0;
  Real L_L1 = 0.0;
  Real L_DAG = 0.0;
  Real total = 0.0;
  Real h_mean = 0.0;
  Real grad_norm = 0.0;
};

// One JSON object per line, fields in declaration order.
std::string to_json_line(const StepRecord& r);
void write_step_records(std::ostream& out, std::span<const StepRecord> records);

/// Uniform draws from items 1..num_items that are not in `exclude`. With
/// `distinct` the result has no repeats. Throws SamplingError when fewer
/// admissible items exist than required (one, or `count` when distinct).
std::vector<int> sample_negatives(std::span<const int> exclude, int num_items, std::size_t count, Rng& rng,
                                  bool distinct = false);

/// Mean over positions of -[log sigma(pos) + log(1 - sigma(neg))].
Var rec_loss(const Var& positive_scores, const Var& negative_scores);
Real rec_loss(std::span<const Real> positive_scores, std::span<const Real> negative_scores);

Real total_loss(Real l_rec, Real l_l1, Real l_dag, Real lambda);
Var total_loss(const Var& l_rec, const Var& l_l1, const Var& l_dag, Real lambda);

struct AdamConfig {
  Real lr = 0.001;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<Real>> m, v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update over every tensor's grad(). A non-finite
/// gradient raises NumericError before any parameter is touched.
void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamConfig& cfg);

struct EpochSummary {
  std::size_t epoch = 0;
  Real L_rec = 0.0;  // mean over steps
  Real h_mean = 0.0;
  Real rho = 0.0;
  Real beta_mult = 0.0;
  std::size_t relations = 0;  // number of ones in R after the refresh
};

/// Owns the parameters, optimizer and causal state of one training run.
class Trainer {
 public:
  Trainer(const data::SplitDataset& ds, model::ModelConfig mcfg, TrainConfig tcfg);

  // One pass over the shuffled training examples, then the epoch-end
  // multiplier update and R refresh.
  EpochSummary train_epoch(std::vector<StepRecord>* records = nullptr);
  std::vector<EpochSummary> fit(std::vector<StepRecord>* records = nullptr);

  model::ModelParams& params() { return params_; }
  const model::ModelParams& params() const { return params_; }
  causal::CausalState& causal_state() { return state_; }
  const causal::CausalState& causal_state() const { return state_; }
  const model::ModelConfig& model_config() const { return mcfg_; }
  const TrainConfig& train_config() const { return tcfg_; }
  std::size_t epochs_done() const { return epoch_; }

 private:
  StepRecord step(std::span<const std::size_t> batch);

  const data::SplitDataset& ds_;
  model::ModelConfig mcfg_;
  TrainConfig tcfg_;
  model::ModelParams params_;
  causal::CausalState state_;
  AdamState adam_;
  std::vector<Tensor*> param_ptrs_;
  std::vector<data::TrainingExample> examples_;
  Rng shuffle_rng_, dropout_rng_, negative_rng_;
  Tensor w_sum_;
  std::size_t w_count_ = 0;
  std::vector<Real> epoch_h_;
  std::size_t epoch_ = 0;
  std::size_t global_step_ = 0;
};

}  // namespace causalrec::train
