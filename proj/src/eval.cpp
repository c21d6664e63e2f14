#include "causalrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "causalrec/errors.hpp"
#include "causalrec/training.hpp"

namespace causalrec::eval {

namespace {

void check_ranks(std::span<const int> ranks, int z, const char* op) {
  if (ranks.empty()) throw MetricError(std::string(op) + ": no users to average over");
  if (z < 1) throw ParameterError(std::string(op) + ": Z must be >= 1");
  for (int r : ranks)
    if (r < 1) throw MetricError(std::string(op) + ": ranks start at 1");
}

Real gain(int rank, int z) { return rank <= z ? 1.0 / std::log2(static_cast<Real>(rank) + 1.0) : 0.0; }

std::string fmt(Real v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

int rank_of(Real gt_score, std::span<const Real> negative_scores) {
  int rank = 1;
  for (Real s : negative_scores)
    if (s >= gt_score) ++rank;
  return rank;
}

Real hit_rate(std::span<const int> ranks, int z) {
  check_ranks(ranks, z, "hit_rate");
  std::size_t hits = 0;
  for (int r : ranks) hits += r <= z;
  return static_cast<Real>(hits) / static_cast<Real>(ranks.size());
}

Real ndcg(std::span<const int> ranks, int z, NdcgNorm norm) {
  check_ranks(ranks, z, "ndcg");
  Real total = 0.0, best = 0.0;
  for (int r : ranks) {
    total += gain(r, z);
    best = std::max(best, gain(r, z));
  }
  const Real mean = total / static_cast<Real>(ranks.size());
  if (norm == NdcgNorm::per_user) return mean;
  return best > 0.0 ? mean / best : 0.0;
}

std::string MetricsReport::to_line() const {
  std::ostringstream os;
  os << "HR@" << z << "=" << fmt(hr) << " NDCG@" << z << "=" << fmt(ndcg) << " users=" << users_evaluated
     << " skipped=" << users_skipped << " negatives=" << negatives_per_user << " min_negatives=" << min_negatives;
  return os.str();
}

std::string MetricsReport::csv_header() { return "dataset,variant,hr@10,ndcg@10,seed"; }

std::string MetricsReport::csv_row(const std::string& dataset, const std::string& variant,
                                   std::uint64_t seed) const {
  return dataset + "," + variant + "," + fmt(hr) + "," + fmt(ndcg) + "," + std::to_string(seed);
}

MetricsReport evaluate_scorer(const Scorer& scorer, const data::SplitDataset& ds, const EvalConfig& cfg) {
  if (cfg.negatives < 1) throw ParameterError("evaluate: need at least one negative per user");
  Rng rng(derive_seed(cfg.seed, "eval-negatives"));
  MetricsReport report;
  report.z = cfg.z;
  report.negatives_per_user = cfg.negatives;
  report.min_negatives = cfg.negatives;
  std::vector<int> ranks;
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    const auto c = data::eval_case(ds, u, cfg.split);
    if (!c) {
      ++report.users_skipped;
      continue;
    }
    const std::vector<int> history = ds.history(u);
    const std::unordered_set<int> seen(history.begin(), history.end());
    const std::size_t available = static_cast<std::size_t>(ds.num_items()) - seen.size();
    if (available == 0) {
      ++report.users_skipped;
      continue;
    }
    const std::size_t count = std::min(cfg.negatives, available);
    const std::vector<int> negatives = train::sample_negatives(history, ds.num_items(), count, rng, true);
    const std::vector<Real> scores = scorer(*c);
    if (scores.size() != static_cast<std::size_t>(ds.num_items()))
      throw DimensionError("evaluate: scorer returned the wrong number of scores");
    std::vector<Real> neg_scores;
    neg_scores.reserve(count);
    for (int i : negatives) neg_scores.push_back(scores[static_cast<std::size_t>(i - 1)]);
    ranks.push_back(rank_of(scores[static_cast<std::size_t>(c->target - 1)], neg_scores));
    report.min_negatives = std::min(report.min_negatives, count);
  }
  if (ranks.empty()) throw MetricError("evaluate: no user has a held-out item");
  report.users_evaluated = ranks.size();
  report.hr = hit_rate(ranks, cfg.z);
  report.ndcg = ndcg(ranks, cfg.z, cfg.norm);
  return report;
}

MetricsReport evaluate(model::ModelParams& params, const model::ModelConfig& mcfg, const Tensor& r,
                       const data::SplitDataset& ds, const EvalConfig& cfg) {
  return evaluate_scorer(
      [&](const data::EvalCase& c) {
        const Tensor final_repr = model::infer(c.input, params, r, mcfg);
        return model::predict_scores(final_repr, params, c.input, c.input.last_position());
      },
      ds, cfg);
}

std::string ExplanationRecord::to_text() const {
  std::ostringstream os;
  os << "user " << user << "\n";
  os << "  held-out item: " << (target_item.empty() ? "-" : target_item) << "\n";
  os << "  recommendations:";
  for (const auto& [item, score] : recommendations) os << " " << item << "(" << fmt(score) << ")";
  os << "\n  causal edges into the last position:";
  if (edges.empty()) os << " none";
  os << "\n";
  for (const ExplanationEdge& e : edges) {
    os << "    pos " << e.source_pos << " [" << e.source_item << "] -> pos " << e.target_pos << " ["
       << e.target_item << "]  w=" << fmt(e.weight) << "\n";
  }
  return os.str();
}

ExplanationRecord explain(model::ModelParams& params, const model::ModelConfig& mcfg,
                          const causal::CausalState& state, const data::SplitDataset& ds, std::size_t user,
                          std::size_t top_k, std::size_t top_n) {
  if (user >= ds.num_users()) throw ParameterError("explain: user index out of range");
  const data::UserSplit& s = ds.splits[user];
  std::vector<int> input = s.train;
  if (s.valid) input.push_back(*s.valid);
  if (input.empty()) throw ContractError("explain: user has no interactions");
  const data::PaddedSequence seq = data::pad_left(input, ds.n_max, static_cast<int>(user));

  ExplanationRecord rec;
  rec.user = ds.users[user];
  if (s.test) rec.target_item = ds.vocab.items[static_cast<std::size_t>(*s.test)];

  const Tensor final_repr = model::infer(seq, params, state.R, mcfg);
  const std::vector<Real> scores = model::predict_scores(final_repr, params, seq, seq.last_position());
  const std::unordered_set<int> seen(input.begin(), input.end());
  std::vector<int> candidates;
  for (int i = 1; i <= ds.num_items(); ++i)
    if (!seen.contains(i)) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a - 1)] > scores[static_cast<std::size_t>(b - 1)];
  });
  for (std::size_t k = 0; k < std::min(top_n, candidates.size()); ++k) {
    const int i = candidates[k];
    rec.recommendations.emplace_back(ds.vocab.items[static_cast<std::size_t>(i)], scores[static_cast<std::size_t>(i - 1)]);
  }

  const std::size_t last = seq.last_position();
  std::vector<ExplanationEdge> edges;
  for (std::size_t y = seq.first_real(); y < last; ++y) {
    if (state.R(last, y) == 0.0) continue;
    edges.push_back({y, ds.vocab.items[static_cast<std::size_t>(seq.items[y])], last,
                     ds.vocab.items[static_cast<std::size_t>(seq.items[last])], state.W(last, y)});
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const ExplanationEdge& a, const ExplanationEdge& b) { return std::abs(a.weight) > std::abs(b.weight); });
  if (edges.size() > top_k) edges.resize(top_k);
  rec.edges = std::move(edges);
  return rec;
}

}  // namespace causalrec::eval
