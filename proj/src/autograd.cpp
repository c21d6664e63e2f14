#include "causalrec/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace causalrec {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("var: use of unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  Node& node = nodes_.emplace_back();
  node.owned = std::move(value);
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& param) {
  Node& node = nodes_.emplace_back();
  node.bound = &param;
  node.param = &param;
  node.needs_grad = param.requires_grad();
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError("tape: inputs recorded on a different tape");
    needs = needs || nodes_[in.id()].needs_grad;
  }
  Node& node = nodes_.emplace_back();
  node.owned = std::move(value);
  node.needs_grad = needs;
  if (needs) node.backward = std::move(fn);
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  return node.bound ? *node.bound : node.owned;
}

std::span<Real> Tape::adjoint(std::size_t id) {
  Node& node = nodes_.at(id);
  if (node.adjoint.empty()) node.adjoint.assign(value(id).size(), 0.0);
  return node.adjoint;
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to a different tape");
  if (backward_done_) throw ContractError("backward: already run on this tape; record a new forward first");
  if (value(loss.id()).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(value(loss.id()).shape()));
  }
  backward_done_ = true;
  backward_order_.clear();
  if (!nodes_[loss.id()].needs_grad) return;
  adjoint(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    backward_order_.push_back(id);
    Node& node = nodes_[id];
    if (!node.needs_grad || node.adjoint.empty()) continue;
    if (node.param) {
      auto g = node.param->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.adjoint[i];
    }
    if (node.backward) node.backward(*this, id);
  }
}

void Tape::clear() {
  nodes_.clear();
  backward_done_ = false;
  backward_order_.clear();
}

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected matrix, got " + shape_string(t.shape()));
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value in output");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = causalrec::matmul(av, bv);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    const auto g = t.adjoint(self);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (t.needs_grad(ia)) {
      auto ga = t.adjoint(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          Real s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B(p, j);
          ga[i * k + p] += s;
        }
    }
    if (t.needs_grad(ib)) {
      auto gb = t.adjoint(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const Real av = A(i, p);
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul_nt");
  require_rank2(B, "matmul_nt");
  if (A.cols() != B.cols()) {
    throw DimensionError("matmul_nt: cannot multiply " + shape_string(A.shape()) + " by transpose of " +
                         shape_string(B.shape()));
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A(i, p) * B(j, p);
      out(i, j) = s;
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    const auto g = t.adjoint(self);
    if (t.needs_grad(ia)) {
      auto ga = t.adjoint(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const Real gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * B(j, p);
        }
    }
    if (t.needs_grad(ib)) {
      auto gb = t.adjoint(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const Real gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * A(i, p);
        }
    }
  });
}

Var transpose(const Var& a) {
  const Tensor& A = a.value();
  Tensor out = A.transposed();
  const std::size_t ia = a.id(), r = A.rows(), c = A.cols();
  return a.tape().record(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto ga = t.adjoint(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var add(const Var& a, const Var& b) {
  Tensor out = causalrec::add(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.needs_grad(in)) continue;
      auto gi = t.adjoint(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    if (t.needs_grad(ia)) {
      auto ga = t.adjoint(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      auto gb = t.adjoint(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const Tensor& X = x.value();
  const Tensor& b = bias.value();
  const std::size_t d = X.shape().back();
  if (b.size() != d) {
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " does not match " + shape_string(X.shape()));
  }
  Tensor out = X;
  const std::size_t rows = X.size() / d;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += b[j];
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, bias}, [ix, ib, rows, d](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    if (t.needs_grad(ix)) {
      auto gx = t.adjoint(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      auto gb = t.adjoint(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
  });
}

Var scale(const Var& a, Real s) {
  Tensor out = scaled(a.value(), s);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = hadamard(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.needs_grad(ia)) {
      auto ga = t.adjoint(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.needs_grad(ib)) {
      auto gb = t.adjoint(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var mul_const(const Var& a, const Tensor& c) {
  Tensor out = hadamard(a.value(), c);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, c](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
  });
}

Var add_const(const Var& a, const Tensor& c) {
  Tensor out = causalrec::add(a.value(), c);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var relu(const Var& a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const Tensor& A = t.value(ia);
    auto ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (A[i] > 0.0) ga[i] += g[i];
  });
}

Var softmax_rows(const Var& x) {
  const Tensor& X = x.value();
  require_rank2(X, "softmax_rows");
  const std::size_t m = X.rows(), n = X.cols();
  constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Real mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      const Real v = X(i, j);
      if (std::isnan(v) || v == std::numeric_limits<Real>::infinity()) {
        throw NumericError("softmax_rows: NaN or +inf input at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
      mx = std::max(mx, v);
    }
    if (mx == kNegInf) continue;  // fully masked row stays zero
    Real total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const Real v = X(i, j);
      const Real e = v == kNegInf ? 0.0 : std::exp(v - mx);
      out(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= total;
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, m, n](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const Tensor& Y = t.value(self);
    auto gx = t.adjoint(ix);
    for (std::size_t i = 0; i < m; ++i) {
      Real dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * Y(i, j);
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += Y(i, j) * (g[i * n + j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, Real eps) {
  const Tensor& X = x.value();
  const std::size_t d = X.shape().back();
  if (d < 2) throw ContractError("layer_norm: last dimension must be >= 2 (variance is degenerate)");
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: affine parameters must have length " + std::to_string(d));
  }
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  const std::size_t rows = X.size() / d;
  Tensor out(X.shape());
  std::vector<Real> xhat(X.size());
  std::vector<Real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = X.data().data() + r * d;
    Real mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<Real>(d);
    Real var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<Real>(d);
    const Real inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = (xr[j] - mean) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = G[j] * h + B[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const auto g = t.adjoint(self);
        const Tensor& G = t.value(ig);
        if (t.needs_grad(ig)) {
          auto gg = t.adjoint(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        }
        if (t.needs_grad(ib)) {
          auto gb = t.adjoint(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (t.needs_grad(ix)) {
          auto gx = t.adjoint(ix);
          const Real inv_d = 1.0 / static_cast<Real>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            Real mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const Real dh = g[r * d + j] * G[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const Real dh = g[r * d + j] * G[j];
              gx[r * d + j] += inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      });
}

Var dropout(const Var& x, Real p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: probability must satisfy 0 <= p < 1");
  if (!training || p == 0.0) return x;
  const Tensor& X = x.value();
  const Real keep_scale = 1.0 / (1.0 - p);
  std::vector<Real> mask(X.size());
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = X[i] * mask[i];
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto gx = t.adjoint(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var gather_rows(const Var& table, std::span<const int> idx) {
  const Tensor& T = table.value();
  require_rank2(T, "gather_rows");
  const std::size_t d = T.cols();
  Tensor out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= T.rows()) {
      throw ContractError("gather_rows: index " + std::to_string(idx[r]) + " out of range for table with " +
                          std::to_string(T.rows()) + " rows");
    }
    const auto src = T.row(static_cast<std::size_t>(idx[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t it = table.id();
  std::vector<int> rows(idx.begin(), idx.end());
  return table.tape().record(std::move(out), {table}, [it, d, rows = std::move(rows)](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    auto gt = t.adjoint(it);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t base = static_cast<std::size_t>(rows[r]) * d;
      for (std::size_t j = 0; j < d; ++j) gt[base + j] += g[r * d + j];
    }
  });
}

Var rowwise_dot(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "rowwise_dot");
  require_rank2(A, "rowwise_dot");
  const std::size_t n = A.rows(), d = A.cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    Real s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += A(i, j) * B(i, j);
    out[i] = s;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, n, d](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.needs_grad(ia)) {
      auto ga = t.adjoint(ia);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i] * B(i, j);
    }
    if (t.needs_grad(ib)) {
      auto gb = t.adjoint(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[i * d + j] += g[i] * A(i, j);
    }
  });
}

Var sum(const Var& a) {
  Real s = 0.0;
  for (Real v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    const Real g = t.adjoint(self)[0];
    for (Real& v : t.adjoint(ia)) v += g;
  });
}

Var weighted_sum(const Var& a, const Tensor& weights) {
  if (a.value().size() != weights.size()) throw DimensionError("weighted_sum: weight length mismatch");
  Real s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * a.value()[i];
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia, weights](Tape& t, std::size_t self) {
    const Real g = t.adjoint(self)[0];
    auto ga = t.adjoint(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * weights[i];
  });
}

Var log_sigmoid(const Var& a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) {
    const Real v = A[i];
    out[i] = std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v)));
  }
  require_finite(out, "log_sigmoid");
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    const Tensor& A = t.value(ia);
    auto ga = t.adjoint(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      // d/dx log(sigmoid(x)) = sigmoid(-x)
      const Real v = A[i];
      const Real s = v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
      ga[i] += g[i] * s;
    }
  });
}

Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("add_n: empty input");
  Tensor out = xs[0].value();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_shape(out, xs[k].value(), "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xs[k].value()[i];
  }
  std::vector<std::size_t> ids;
  ids.reserve(xs.size());
  for (const Var& v : xs) ids.push_back(v.id());
  return xs[0].tape().record(std::move(out), xs, [ids = std::move(ids)](Tape& t, std::size_t self) {
    const auto g = t.adjoint(self);
    for (std::size_t id : ids) {
      if (!t.needs_grad(id)) continue;
      auto gi = t.adjoint(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

}  // namespace causalrec
