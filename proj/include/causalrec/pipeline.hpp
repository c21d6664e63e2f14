#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "causalrec/causal.hpp"
#include "causalrec/checkpoint.hpp"
#include "causalrec/dataio.hpp"
#include "causalrec/eval.hpp"
#include "causalrec/model.hpp"
#include "causalrec/training.hpp"

namespace causalrec::pipeline {

/// Planted-pairs toy log (see data::planted_pairs_dataset).
struct ToySpec {
  std::size_t users = 50;
  int items = 20;
  std::size_t min_len = 6;
  std::size_t max_len = 12;
};

struct DataSource {
  std::string input;  // .tsv, .csv or a .crseq cache; empty selects the toy log
  ToySpec toy;
  std::uint64_t seed = 42;  // toy generation only
  std::size_t n_max = 200;
};

struct LoadedData {
  data::UserSequences sequences;
  data::SplitDataset split;
  std::size_t records = 0;
  std::size_t malformed = 0;
};

/// Sequences are re-truncated to n_max when read from a cache built with a
/// larger one.
LoadedData load_data(const DataSource& src);

std::string summary_line(const LoadedData& d);

/// Everything needed to score with a trained model.
struct TrainedModel {
  model::ModelConfig mcfg;
  model::ModelParams params;
  causal::CausalState state;
  std::string config_json;  // run configuration recorded at save time
};

std::string model_config_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const std::string& text);
std::string train_config_json(const train::TrainConfig& c);

/// Checkpoint layout: every parameter under its ModelParams name plus
/// "causal.W", "causal.R" and "causal.scalars" (rho, beta_mult, kappa,
/// kappa_prev, lambda, gamma1, gamma2, rho_max, tau). The config string is a
/// JSON object with "model" and, when given, "train" entries.
Checkpoint to_checkpoint(const model::ModelConfig& mcfg, const model::ModelParams& params,
                         const causal::CausalState& state, const std::string& train_json = "");
TrainedModel from_checkpoint(const Checkpoint& ck);

void save_model(const std::string& path, const model::ModelConfig& mcfg, const model::ModelParams& params,
                const causal::CausalState& state, const std::string& train_json = "");
TrainedModel load_model(const std::string& path);

/// Trains for the configured number of epochs, scoring the validation split
/// after each one, and keeps the parameters and causal state of the epoch
/// with the highest validation NDCG (earliest on ties).
struct SelectedFit {
  std::vector<train::EpochSummary> epochs;
  std::vector<eval::MetricsReport> valid;
  std::size_t best_epoch = 0;  // 1-based
  model::ModelParams params;
  causal::CausalState state;
};
SelectedFit fit_select_best(train::Trainer& trainer, const data::SplitDataset& ds, eval::EvalConfig valid_cfg,
                            std::vector<train::StepRecord>* records = nullptr);

}  // namespace causalrec::pipeline
