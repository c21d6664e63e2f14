#include "causalrec/model.hpp"

#include <cmath>
#include <limits>

#include "causalrec/errors.hpp"

namespace causalrec::model {

namespace {

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

Tensor uniform_tensor(Shape shape, Real bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (Real& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

// 1 on real rows, 0 on padding rows.
Tensor timeline_mask(const data::PaddedSequence& seq, std::size_t d) {
  Tensor m({seq.n_max(), d});
  for (std::size_t t = seq.first_real(); t < seq.n_max(); ++t)
    for (std::size_t j = 0; j < d; ++j) m(t, j) = 1.0;
  return m;
}

void check_square(const Tensor& a, const Tensor& r, const char* op) {
  require_square(a, op);
  require_same_shape(a, r, op);
}

Tensor filter_mask(const Tensor& r, Real threshold, const Tensor& mask) {
  Tensor m = mask;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (r[i] <= threshold) m[i] = kNegInf;
  return m;
}

}  // namespace

const char* to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::boost: return "boost";
    case AttentionMode::plain: return "plain";
    case AttentionMode::filter: return "filter";
    case AttentionMode::causal_only: return "causal_only";
  }
  return "?";
}

AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "boost") return AttentionMode::boost;
  if (s == "plain") return AttentionMode::plain;
  if (s == "filter") return AttentionMode::filter;
  if (s == "causal_only") return AttentionMode::causal_only;
  throw ParameterError("unknown attention mode: " + s);
}

void ModelConfig::validate() const {
  if (L < 1) throw ParameterError("ModelConfig: L must be >= 1");
  if (D < 2 || d_k < 1 || d_v < 1) throw ParameterError("ModelConfig: D must be >= 2 and d_k, d_v >= 1");
  if (n_max < 2) throw ParameterError("ModelConfig: n_max must be >= 2");
  if (num_items < 1) throw ParameterError("ModelConfig: num_items must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("ModelConfig: dropout must lie in [0, 1)");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("ModelConfig: alpha must be finite and >= 0");
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(cfg.D));
  const std::size_t D = cfg.D;
  ModelParams p;
  p.M = uniform_tensor({static_cast<std::size_t>(cfg.num_items) + 1, D}, bound, rng);
  for (Real& v : p.M.row(0)) v = 0.0;
  p.P = uniform_tensor({cfg.n_max, D}, bound, rng);
  for (std::size_t l = 0; l < cfg.L; ++l) {
    LayerParams lp;
    lp.W_Q = uniform_tensor({D, cfg.d_k}, bound, rng);
    lp.W_K = uniform_tensor({D, cfg.d_k}, bound, rng);
    lp.W_V = uniform_tensor({D, cfg.d_v}, bound, rng);
    lp.W_O = cfg.d_v == D ? Tensor::identity(D) : uniform_tensor({cfg.d_v, D}, bound, rng);
    lp.W1 = uniform_tensor({D, D}, bound, rng);
    lp.b1 = Tensor::zeros({D});
    lp.W2 = uniform_tensor({D, D}, bound, rng);
    lp.b2 = Tensor::zeros({D});
    lp.ln_gain = Tensor::ones({D});
    lp.ln_bias = Tensor::zeros({D});
    p.layers.push_back(std::move(lp));
  }
  return p;
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("M", M);
  fn("P", P);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerParams& lp = layers[l];
    fn(pre + "W_Q", lp.W_Q);
    fn(pre + "W_K", lp.W_K);
    fn(pre + "W_V", lp.W_V);
    fn(pre + "W_O", lp.W_O);
    fn(pre + "W1", lp.W1);
    fn(pre + "b1", lp.b1);
    fn(pre + "W2", lp.W2);
    fn(pre + "b2", lp.b2);
    fn(pre + "ln_gain", lp.ln_gain);
    fn(pre + "ln_bias", lp.ln_bias);
  }
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each([&](const std::string& name, Tensor& t) { fn(name, t); });
}

void ModelParams::set_requires_grad(bool flag) {
  for_each([flag](const std::string&, Tensor& t) { t.set_requires_grad(flag); });
}

void ModelParams::zero_grad() {
  for_each([](const std::string&, Tensor& t) {
    if (t.requires_grad()) t.zero_grad();
  });
}

void ModelParams::mask_padding_grad() {
  if (!M.requires_grad()) return;
  auto g = M.grad();
  for (std::size_t j = 0; j < M.cols(); ++j) g[j] = 0.0;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

BoundParams bind(Tape& tape, ModelParams& params) {
  BoundParams b;
  b.M = tape.parameter(params.M);
  b.P = tape.parameter(params.P);
  for (LayerParams& lp : params.layers) {
    b.layers.push_back({tape.parameter(lp.W_Q), tape.parameter(lp.W_K), tape.parameter(lp.W_V),
                        tape.parameter(lp.W_O), tape.parameter(lp.W1), tape.parameter(lp.b1),
                        tape.parameter(lp.W2), tape.parameter(lp.b2), tape.parameter(lp.ln_gain),
                        tape.parameter(lp.ln_bias)});
  }
  return b;
}

Tensor attention_mask(const data::PaddedSequence& seq) {
  const std::size_t n = seq.n_max();
  Tensor m({n, n}, kNegInf);
  for (std::size_t x = seq.first_real(); x < n; ++x)
    for (std::size_t y = seq.first_real(); y <= x; ++y) m(x, y) = 0.0;
  return m;
}

Tensor prefix_mask(std::size_t n) {
  Tensor m({n, n}, kNegInf);
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y <= x; ++y) m(x, y) = 0.0;
  return m;
}

Var embed_sequence(const data::PaddedSequence& seq, const BoundParams& params, const ModelConfig& cfg,
                   bool training, Rng& rng) {
  if (seq.n_max() != params.P.value().rows())
    throw DimensionError("embed_sequence: sequence length does not match the positional table");
  const Var items = gather_rows(params.M, seq.items);
  return dropout(add(items, params.P), cfg.dropout, training, rng);
}

Var attention_logits(const Var& x, const BoundLayer& layer) {
  const Var q = matmul(x, layer.W_Q);
  const Var k = matmul(x, layer.W_K);
  const Real dk = static_cast<Real>(layer.W_Q.value().cols());
  return scale(matmul_nt(q, k), 1.0 / std::sqrt(dk));
}

Tensor causal_boost(const Tensor& logits, const Tensor& r, Real alpha) {
  check_square(logits, r, "causal_boost");
  Tensor out = logits;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= 1.0 + alpha * r[i];
  return out;
}

Var causal_boost(const Var& logits, const Tensor& r, Real alpha) {
  check_square(logits.value(), r, "causal_boost");
  Tensor factor = r;
  for (Real& v : factor.data()) v = 1.0 + alpha * v;
  return mul_const(logits, factor);
}

Tensor filter_attention(const Tensor& logits, const Tensor& r, Real threshold, const Tensor& mask) {
  Tape tape;
  return filter_attention(tape.constant(logits), r, threshold, mask).value();
}

Var filter_attention(const Var& logits, const Tensor& r, Real threshold, const Tensor& mask) {
  check_square(logits.value(), r, "filter_attention");
  require_same_shape(logits.value(), mask, "filter_attention");
  return softmax_rows(add_const(logits, filter_mask(r, threshold, mask)));
}

Tensor causal_only_weights(const Tensor& r, const Tensor& mask) {
  check_square(mask, r, "causal_only_weights");
  const std::size_t n = mask.rows();
  Tensor w({n, n});
  for (std::size_t x = 0; x < n; ++x) {
    std::size_t allowed = 0, related = 0;
    for (std::size_t y = 0; y < n; ++y) {
      if (mask(x, y) != 0.0) continue;
      ++allowed;
      if (r(x, y) > 0.0) ++related;
    }
    if (allowed == 0) continue;
    const bool use_r = related > 0;
    const Real share = 1.0 / static_cast<Real>(use_r ? related : allowed);
    for (std::size_t y = 0; y < n; ++y)
      if (mask(x, y) == 0.0 && (!use_r || r(x, y) > 0.0)) w(x, y) = share;
  }
  return w;
}

Var cba_layer_forward(const Var& x, const BoundLayer& layer, const Tensor& r, const Tensor& mask,
                      const ModelConfig& cfg, bool training, Rng& rng, LayerArtifacts* artifacts) {
  Tape& tape = x.tape();
  Var v = matmul(x, layer.W_V);
  if (cfg.value_norm) {
    const std::size_t dv = v.value().cols();
    v = layer_norm(v, tape.constant(Tensor::ones({dv})), tape.constant(Tensor::zeros({dv})), cfg.ln_eps);
  }

  Var weights;
  if (cfg.mode == AttentionMode::causal_only) {
    Tensor w = causal_only_weights(r, mask);
    if (artifacts) *artifacts = {Tensor::zeros(mask.shape()), Tensor::zeros(mask.shape()), w};
    weights = tape.constant(std::move(w));
  } else {
    const Var logits = attention_logits(x, layer);
    Var adjusted = logits;
    Tensor extra_mask = mask;
    switch (cfg.mode) {
      case AttentionMode::boost: adjusted = causal_boost(logits, r, cfg.alpha); break;
      case AttentionMode::filter: extra_mask = filter_mask(r, cfg.filter_threshold, mask); break;
      default: break;
    }
    weights = softmax_rows(add_const(adjusted, extra_mask));
    if (artifacts) *artifacts = {logits.value(), adjusted.value(), weights.value()};
  }

  const Var z = matmul(matmul(weights, v), layer.W_O);
  const Var hidden = relu(add_bias(matmul(z, layer.W1), layer.b1));
  const Var ffn = add_bias(matmul(hidden, layer.W2), layer.b2);
  return layer_norm(add(x, dropout(ffn, cfg.dropout, training, rng)), layer.ln_gain, layer.ln_bias, cfg.ln_eps);
}

Var forward(const data::PaddedSequence& seq, const BoundParams& params, const Tensor& r, const ModelConfig& cfg,
            bool training, Rng& rng, std::vector<LayerArtifacts>* artifacts) {
  if (r.rank() != 2 || r.rows() != seq.n_max() || r.cols() != seq.n_max())
    throw DimensionError("forward: R must be [n_max x n_max]");
  const Tensor mask = attention_mask(seq);
  const Tensor keep = timeline_mask(seq, cfg.D);
  Var x = mul_const(embed_sequence(seq, params, cfg, training, rng), keep);
  if (artifacts) artifacts->assign(params.layers.size(), {});
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    x = cba_layer_forward(x, params.layers[l], r, mask, cfg, training, rng, artifacts ? &(*artifacts)[l] : nullptr);
    x = mul_const(x, keep);
  }
  return x;
}

Tensor infer(const data::PaddedSequence& seq, ModelParams& params, const Tensor& r, const ModelConfig& cfg,
             std::vector<LayerArtifacts>* artifacts) {
  Tape tape;
  Rng unused(0);
  const BoundParams b = bind(tape, params);
  return forward(seq, b, r, cfg, false, unused, artifacts).value();
}

std::vector<Real> predict_scores(const Tensor& final_repr, const ModelParams& params,
                                 const data::PaddedSequence& seq, std::size_t position) {
  if (position >= final_repr.rows()) throw ContractError("predict_scores: position out of range");
  if (seq.is_padding(position)) throw ContractError("predict_scores: position holds a padding item");
  if (final_repr.cols() != params.M.cols()) throw DimensionError("predict_scores: hidden size mismatch");
  const auto h = final_repr.row(position);
  std::vector<Real> scores(params.M.rows() - 1);
  for (std::size_t i = 1; i < params.M.rows(); ++i) {
    const auto e = params.M.row(i);
    Real s = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) s += e[j] * h[j];
    scores[i - 1] = s;
  }
  return scores;
}

}  // namespace causalrec::model
