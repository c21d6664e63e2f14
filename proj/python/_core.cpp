#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "causalrec/causal.hpp"
#include "causalrec/errors.hpp"
#include "causalrec/eval.hpp"
#include "causalrec/linalg.hpp"
#include "causalrec/pipeline.hpp"
#include "causalrec/scmlab.hpp"
#include "causalrec/training.hpp"

namespace py = pybind11;
using namespace causalrec;

namespace {

using Array = py::array_t<Real, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) return Tensor::vector(std::vector<Real>(a.data(), a.data() + a.size()));
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
  return Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                std::vector<Real>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const eval::MetricsReport& m) {
  py::dict d;
  d["hr"] = m.hr;
  d["ndcg"] = m.ndcg;
  d["z"] = m.z;
  d["users_evaluated"] = m.users_evaluated;
  d["users_skipped"] = m.users_skipped;
  d["min_negatives"] = m.min_negatives;
  return d;
}

py::dict step_dict(const train::StepRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["step"] = r.step;
  d["L_rec"] = r.L_rec;
  d["L_L1"] = r.L_L1;
  d["L_DAG"] = r.L_DAG;
  d["total"] = r.total;
  d["h_mean"] = r.h_mean;
  d["grad_norm"] = r.grad_norm;
  return d;
}

eval::EvalConfig eval_config(const std::string& split, std::size_t negatives, int z, std::uint64_t seed) {
  eval::EvalConfig c;
  c.split = split == "valid" ? data::EvalSplit::valid : data::EvalSplit::test;
  if (split != "valid" && split != "test") throw ParameterError("split must be 'valid' or 'test'");
  c.negatives = negatives;
  c.z = z;
  c.seed = seed;
  return c;
}

struct Model {
  pipeline::TrainedModel m;
  std::string train_json;  // empty for models read from disk
  std::vector<train::StepRecord> records;
  std::size_t best_epoch = 0;
};

Model train_model(const pipeline::LoadedData& d, std::size_t hidden, std::size_t layers, Real dropout, Real alpha,
                  std::size_t epochs, Real lr, std::size_t batch, Real lambda, Real tau, const std::string& variant,
                  bool freeze_causal, std::uint64_t seed, bool select_best) {
  model::ModelConfig mc;
  mc.n_max = d.split.n_max;
  mc.num_items = d.split.num_items();
  mc.set_hidden(hidden);
  mc.L = layers;
  mc.dropout = dropout;
  mc.alpha = alpha;
  train::TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = lr;
  tc.batch_size = batch;
  tc.lambda = lambda;
  tc.tau = tau;
  tc.variant = train::variant_from_string(variant);
  tc.freeze_causal = freeze_causal;
  tc.seed = seed;
  train::Trainer trainer(d.split, mc, tc);
  Model out;
  if (select_best) {
    eval::EvalConfig ec;
    ec.seed = seed;
    auto fit = pipeline::fit_select_best(trainer, d.split, ec, &out.records);
    out.m.params = std::move(fit.params);
    out.m.state = std::move(fit.state);
    out.best_epoch = fit.best_epoch;
  } else {
    trainer.fit(&out.records);
    out.m.params = trainer.params();
    out.m.state = trainer.causal_state();
    out.best_epoch = epochs;
  }
  out.m.mcfg = trainer.model_config();
  out.train_json = pipeline::train_config_json(tc);
  out.m.config_json = pipeline::to_checkpoint(out.m.mcfg, out.m.params, out.m.state, out.train_json).config;
  return out;
}

py::dict identify_dict(const scm::IdentifiabilityResult& r) {
  py::dict d;
  d["recovered"] = to_array(r.recovered);
  d["shd"] = r.shd;
  py::list scores;
  for (const auto& s : r.scores) scores.append(py::make_tuple(to_array(s.support), s.score));
  d["scores"] = scores;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Causality-boosted self-attention recommender and linear SCM lab";

  py::register_exception<Error>(m, "CausalRecError");

  // numerics and causal discovery
  m.def("expm", [](const Array& a) { return to_array(expm(to_tensor(a))); }, py::arg("m"));
  m.def("acyclicity_penalty", [](const Array& w) { return causal::acyclicity_penalty(to_tensor(w)); }, py::arg("w"));
  m.def("acyclicity_gradient", [](const Array& w) { return to_array(causal::acyclicity_gradient(to_tensor(w))); },
        py::arg("w"));
  m.def("l1_penalty", [](const Array& w) { return causal::l1_penalty(to_tensor(w)); }, py::arg("w"));
  m.def(
      "batch_covariance",
      [](const std::vector<Array>& reprs, bool centered) {
        std::vector<Tensor> ts;
        for (const auto& r : reprs) ts.push_back(to_tensor(r));
        return to_array(causal::batch_covariance(ts, centered).W);
      },
      py::arg("reprs"), py::arg("centered") = false);
  m.def(
      "extract_relation_matrix",
      [](const Array& w, Real tau) { return to_array(causal::extract_relation_matrix(to_tensor(w), tau)); },
      py::arg("w"), py::arg("tau") = 0.3);

  // metrics
  m.def(
      "rank_of", [](Real gt, const std::vector<Real>& neg) { return eval::rank_of(gt, neg); }, py::arg("gt_score"),
      py::arg("negative_scores"));
  m.def(
      "hit_rate", [](const std::vector<int>& ranks, int z) { return eval::hit_rate(ranks, z); }, py::arg("ranks"),
      py::arg("z") = 10);
  m.def(
      "ndcg", [](const std::vector<int>& ranks, int z) { return eval::ndcg(ranks, z); }, py::arg("ranks"),
      py::arg("z") = 10);

  // data
  py::class_<pipeline::LoadedData>(m, "Dataset")
      .def_property_readonly("num_users", [](const pipeline::LoadedData& d) { return d.split.num_users(); })
      .def_property_readonly("num_items", [](const pipeline::LoadedData& d) { return d.split.num_items(); })
      .def_property_readonly("n_max", [](const pipeline::LoadedData& d) { return d.split.n_max; })
      .def_property_readonly("users", [](const pipeline::LoadedData& d) { return d.split.users; })
      .def("summary", &pipeline::summary_line);
  m.def(
      "load_data",
      [](const std::string& input, std::size_t n_max, std::uint64_t seed, std::size_t toy_users, int toy_items,
         std::size_t toy_min_len, std::size_t toy_max_len) {
        pipeline::DataSource src;
        src.input = input;
        src.n_max = n_max;
        src.seed = seed;
        src.toy = {toy_users, toy_items, toy_min_len, toy_max_len};
        return pipeline::load_data(src);
      },
      py::arg("input") = "", py::arg("n_max") = 200, py::arg("seed") = 42, py::arg("toy_users") = 50,
      py::arg("toy_items") = 20, py::arg("toy_min_len") = 6, py::arg("toy_max_len") = 12,
      "Reads a .tsv/.csv log or a .crseq cache; an empty input generates the planted-pairs toy log.");

  // model
  py::class_<Model>(m, "Model")
      .def_property_readonly("W", [](const Model& x) { return to_array(x.m.state.W); })
      .def_property_readonly("R", [](const Model& x) { return to_array(x.m.state.R); })
      .def_property_readonly("rho", [](const Model& x) { return x.m.state.rho; })
      .def_property_readonly("best_epoch", [](const Model& x) { return x.best_epoch; })
      .def_property_readonly("config", [](const Model& x) { return x.m.config_json; })
      .def_property_readonly("steps", [](const Model& x) {
        py::list out;
        for (const auto& r : x.records) out.append(step_dict(r));
        return out;
      })
      .def(
          "evaluate",
          [](Model& x, const pipeline::LoadedData& d, const std::string& split, std::size_t negatives, int z,
             std::uint64_t seed) {
            return metrics_dict(
                eval::evaluate(x.m.params, x.m.mcfg, x.m.state.R, d.split, eval_config(split, negatives, z, seed)));
          },
          py::arg("data"), py::arg("split") = "test", py::arg("negatives") = 100, py::arg("z") = 10,
          py::arg("seed") = 42)
      .def(
          "explain",
          [](Model& x, const pipeline::LoadedData& d, std::size_t user, std::size_t top_k, std::size_t top_n) {
            if (user >= d.split.num_users()) throw ParameterError("user index out of range");
            return eval::explain(x.m.params, x.m.mcfg, x.m.state, d.split, user, top_k, top_n).to_text();
          },
          py::arg("data"), py::arg("user"), py::arg("top_k") = 5, py::arg("top_n") = 10)
      .def(
          "save",
          [](const Model& x, const std::string& path) {
            pipeline::save_model(path, x.m.mcfg, x.m.params, x.m.state, x.train_json);
          },
          py::arg("path"));
  m.def("train", &train_model, py::arg("data"), py::arg("hidden") = 64, py::arg("layers") = 2,
        py::arg("dropout") = 0.2, py::arg("alpha") = 1.0, py::arg("epochs") = 20, py::arg("lr") = 0.001,
        py::arg("batch") = 256, py::arg("lambda_") = 1e-4, py::arg("tau") = 0.3, py::arg("variant") = "full",
        py::arg("freeze_causal") = false, py::arg("seed") = 42, py::arg("select_best") = false);
  m.def(
      "load_model",
      [](const std::string& path) {
        Model x;
        x.m = pipeline::load_model(path);
        return x;
      },
      py::arg("path"));

  // SCM lab
  py::class_<scm::ScmInstance>(m, "ScmInstance")
      .def_property_readonly("n", [](const scm::ScmInstance& s) { return s.n; })
      .def_property_readonly("B", [](const scm::ScmInstance& s) { return to_array(s.B); })
      .def_property_readonly("noise_scale", [](const scm::ScmInstance& s) { return s.lambda; })
      .def_property_readonly("order", [](const scm::ScmInstance& s) { return s.order; })
      .def("support", [](const scm::ScmInstance& s) { return to_array(s.support()); })
      .def("edge_count", &scm::ScmInstance::edge_count);
  m.def(
      "generate_random_dag",
      [](std::size_t n, Real p, std::uint64_t seed) {
        Rng rng(seed);
        return scm::generate_random_dag(n, p, rng);
      },
      py::arg("n"), py::arg("edge_prob"), py::arg("seed") = 0);
  m.def(
      "generate_dag_with_edges",
      [](std::size_t n, std::size_t edges, std::uint64_t seed) {
        Rng rng(seed);
        return scm::generate_dag_with_edges(n, edges, rng);
      },
      py::arg("n"), py::arg("edges"), py::arg("seed") = 0);
  m.def(
      "sample_scm",
      [](const scm::ScmInstance& s, std::size_t samples, std::uint64_t seed) {
        Rng rng(seed);
        return to_array(scm::sample_scm(s, samples, rng));
      },
      py::arg("scm"), py::arg("samples"), py::arg("seed") = 0);
  m.def("closed_form_cov", [](const scm::ScmInstance& s) { return to_array(scm::closed_form_cov(s)); });
  m.def("nonidentifiable_pair", &scm::nonidentifiable_pair);
  m.def(
      "shd", [](const Array& a, const Array& b) { return scm::shd(to_tensor(a), to_tensor(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "brute_force_identify",
      [](const Array& data, const Array& truth) {
        return identify_dict(scm::brute_force_identify(to_tensor(data), to_tensor(truth)));
      },
      py::arg("data"), py::arg("truth"));
  m.def(
      "equal_variance_score",
      [](const Array& cov, std::size_t samples, const Array& support) {
        return scm::equal_variance_score(to_tensor(cov), samples, to_tensor(support));
      },
      py::arg("cov"), py::arg("samples"), py::arg("support"));
  m.def(
      "notears_recover",
      [](const Array& data, Real lambda_l1, Real threshold) {
        scm::NotearsConfig c;
        c.lambda_l1 = lambda_l1;
        c.threshold = threshold;
        const scm::NotearsResult r = scm::notears_recover(to_tensor(data), c);
        py::dict d;
        d["W"] = to_array(r.W);
        d["support"] = to_array(r.support);
        d["h_final"] = r.h_final;
        d["converged"] = r.converged;
        d["rounds"] = r.rounds;
        return d;
      },
      py::arg("data"), py::arg("lambda_l1") = 0.1, py::arg("threshold") = 0.3);
}
