#pragma once

#include <functional>
#include <string>
#include <vector>

#include "causalrec/autograd.hpp"
#include "causalrec/dataio.hpp"
#include "causalrec/rng.hpp"
#include "causalrec/tensor.hpp"

namespace causalrec::model {

enum class AttentionMode {
  boost,        // softmax(mask + A .* (1 + alpha R))
  plain,        // softmax(mask + A); R is never read
  filter,       // softmax(mask + M_R + A), M_R = -inf where R <= threshold
  causal_only,  // row-normalized R inside the mask; logits unused
};

const char* to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(const std::string& s);

struct ModelConfig {
  std::size_t n_max = 200;
  int num_items = 0;  // real items; embedding table has num_items + 1 rows
  std::size_t D = 64;
  std::size_t d_k = 64;
  std::size_t d_v = 64;
  std::size_t L = 2;
  Real dropout = 0.2;
  Real alpha = 1.0;
  AttentionMode mode = AttentionMode::boost;
  Real filter_threshold = 0.9;
  // LayerNorm (no affine) on the value rows before attention mixes them.
  bool value_norm = false;
  Real ln_eps = 1e-8;

  void set_hidden(std::size_t d) { D = d_k = d_v = d; }
  void validate() const;
};

struct LayerParams {
  Tensor W_Q, W_K, W_V, W_O;
  Tensor W1, b1, W2, b2;
  Tensor ln_gain, ln_bias;
};

struct ModelParams {
  Tensor M;  // [(num_items + 1) x D], row 0 is the padding item and stays zero
  Tensor P;  // [n_max x D]
  std::vector<LayerParams> layers;

  static ModelParams init(const ModelConfig& cfg, Rng& rng);

  // Visits every parameter with a stable dotted name ("M", "layer0.W_Q", ...).
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void set_requires_grad(bool flag);
  void zero_grad();
  // Drops any gradient that reached the padding row of M.
  void mask_padding_grad();
  std::size_t parameter_count() const;
};

struct BoundLayer {
  Var W_Q, W_K, W_V, W_O, W1, b1, W2, b2, ln_gain, ln_bias;
};

struct BoundParams {
  Var M, P;
  std::vector<BoundLayer> layers;
};

// Registers every parameter on the tape (by reference).
BoundParams bind(Tape& tape, ModelParams& params);

/// Per-layer attention tensors captured during a forward pass.
struct LayerArtifacts {
  Tensor logits;   // QK^T / sqrt(d_k)
  Tensor boosted;  // logits after the causal booster (or filter mask)
  Tensor weights;  // post-softmax attention, zero outside the mask
};

// 0 where query x may attend key y (y <= x, key not padding), -inf elsewhere.
Tensor attention_mask(const data::PaddedSequence& seq);
// Mask for a sequence without padding.
Tensor prefix_mask(std::size_t n);

Var embed_sequence(const data::PaddedSequence& seq, const BoundParams& params, const ModelConfig& cfg,
                   bool training, Rng& rng);

Var attention_logits(const Var& x, const BoundLayer& layer);

/// A .* (1 + alpha R). R receives no gradient.
Tensor causal_boost(const Tensor& logits, const Tensor& r, Real alpha);
Var causal_boost(const Var& logits, const Tensor& r, Real alpha);

/// softmax(mask + M_R + A) with M_R(x, y) = -inf where R(x, y) <= threshold.
/// Rows left without any admissible entry are zero.
Tensor filter_attention(const Tensor& logits, const Tensor& r, Real threshold, const Tensor& mask);
Var filter_attention(const Var& logits, const Tensor& r, Real threshold, const Tensor& mask);

/// Attention weights built from R alone: uniform over R = 1 entries inside
/// the mask, or uniform over the whole admissible prefix when a row of R has
/// none. Fully masked rows are zero.
Tensor causal_only_weights(const Tensor& r, const Tensor& mask);

/// One CausalBoost Attention layer followed by the point-wise FFN:
///   Z = softmax(mask + boost(QK^T / sqrt(d_k))) V,  Z' = Z W_O
///   out = LayerNorm(X + Dropout(ReLU(Z' W1 + b1) W2 + b2))
Var cba_layer_forward(const Var& x, const BoundLayer& layer, const Tensor& r, const Tensor& mask,
                      const ModelConfig& cfg, bool training, Rng& rng, LayerArtifacts* artifacts = nullptr);

/// Embedding plus L layers. Padding rows are zeroed after the embedding and
/// after every layer. Returns the final [n_max x D] representation.
Var forward(const data::PaddedSequence& seq, const BoundParams& params, const Tensor& r, const ModelConfig& cfg,
            bool training, Rng& rng, std::vector<LayerArtifacts>* artifacts = nullptr);

// Eval-mode forward on a fresh tape.
Tensor infer(const data::PaddedSequence& seq, ModelParams& params, const Tensor& r, const ModelConfig& cfg,
             std::vector<LayerArtifacts>* artifacts = nullptr);

/// score[i - 1] = dot(M[i], final_repr[position]) for items i = 1..num_items.
std::vector<Real> predict_scores(const Tensor& final_repr, const ModelParams& params,
                                 const data::PaddedSequence& seq, std::size_t position);

}  // namespace causalrec::model
