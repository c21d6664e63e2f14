#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "causalrec/causal.hpp"
#include "causalrec/dataio.hpp"
#include "causalrec/model.hpp"

namespace causalrec::eval {

/// 1 + #(negatives scoring above the ground truth) + #(ties): ties count
/// against the ground truth.
int rank_of(Real gt_score, std::span<const Real> negative_scores);

// Fraction of ranks <= Z. Empty input is a MetricError.
Real hit_rate(std::span<const int> ranks, int z);

enum class NdcgNorm {
  per_user,        // ideal DCG of a single relevant item, i.e. 1
  max_over_users,  // divide by the largest per-user DCG in the set
};

// Mean of 1 / log2(rank + 1) for ranks <= Z, else 0, under the chosen normalization.
Real ndcg(std::span<const int> ranks, int z, NdcgNorm norm = NdcgNorm::per_user);

struct MetricsReport {
  Real hr = 0.0;
  Real ndcg = 0.0;
  int z = 10;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::size_t negatives_per_user = 0;  // requested
  std::size_t min_negatives = 0;       // smallest count actually drawn

  std::string to_line() const;
  static std::string csv_header();
  std::string csv_row(const std::string& dataset, const std::string& variant, std::uint64_t seed) const;
};

struct EvalConfig {
  int z = 10;
  std::size_t negatives = 100;
  std::uint64_t seed = 42;
  data::EvalSplit split = data::EvalSplit::test;
  NdcgNorm norm = NdcgNorm::per_user;
};

// Scores for every item; element i - 1 belongs to item i.
using Scorer = std::function<std::vector<Real>(const data::EvalCase&)>;

/// Ranks each evaluable user's held-out item against negatives drawn
/// uniformly from items outside the user's full history. When fewer than
/// `negatives` such items exist, all of them are used.
MetricsReport evaluate_scorer(const Scorer& scorer, const data::SplitDataset& ds, const EvalConfig& cfg);

MetricsReport evaluate(model::ModelParams& params, const model::ModelConfig& mcfg, const Tensor& r,
                       const data::SplitDataset& ds, const EvalConfig& cfg);

struct ExplanationEdge {
  std::size_t source_pos = 0;
  std::string source_item;
  std::size_t target_pos = 0;
  std::string target_item;
  Real weight = 0.0;
};

struct ExplanationRecord {
  std::string user;
  std::string target_item;  // held-out test item, empty when the user has none
  std::vector<std::pair<std::string, Real>> recommendations;
  std::vector<ExplanationEdge> edges;

  std::string to_text() const;
};

/// Top `top_k` edges with R = 1 that end at the last input position, ordered
/// by |W| (ties by source position), plus the `top_n` highest scoring items
/// not already in the input.
ExplanationRecord explain(model::ModelParams& params, const model::ModelConfig& mcfg,
                          const causal::CausalState& state, const data::SplitDataset& ds, std::size_t user,
                          std::size_t top_k, std::size_t top_n = 10);

}  // namespace causalrec::eval
