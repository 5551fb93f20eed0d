#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "morphoglot/nn/tape.hpp"

namespace morphoglot::nn {

// Variable-length sequences packed row-wise into one matrix.
struct SequenceLayout {
  std::vector<Index> offsets;
  std::vector<Index> lengths;

  std::size_t count() const { return offsets.size(); }
  Index total() const { return offsets.empty() ? 0 : offsets.back() + lengths.back(); }

  static SequenceLayout from_lengths(const std::vector<Index>& lengths) {
    SequenceLayout layout;
    Index offset = 0;
    for (Index len : lengths) {
      layout.offsets.push_back(offset);
      layout.lengths.push_back(len);
      offset += len;
    }
    return layout;
  }
};

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<Var<T>> vars) {
  for (const auto& v : vars)
    if (v.tape->requires_grad(v.id)) return true;
  return false;
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  Matrix<T> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return tape.push(std::move(out), detail::any_requires_grad({a, b}),
                   [ia, ib](Tape<T>& t, int self) {
                     const Matrix<T>& g = t.grad(self);
                     if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
                     if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
                   });
}

// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  Matrix<T> out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  const int ia = a.id, ib = b.id;
  return tape.push(std::move(out), detail::any_requires_grad({a, b}),
                   [ia, ib](Tape<T>& t, int self) {
                     const Matrix<T>& g = t.grad(self);
                     if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
                     if (t.requires_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
                   });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add: shape mismatch");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), detail::any_requires_grad({a, b}),
                      [ia, ib](Tape<T>& t, int self) {
                        const Matrix<T>& g = t.grad(self);
                        if (t.requires_grad(ia)) t.grad(ia) += g;
                        if (t.requires_grad(ib)) t.grad(ib) += g;
                      });
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) {
  return add(a, b);
}

template <typename T>
Var<T> subtract(Var<T> a, Var<T> b) {
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() - b.value(), detail::any_requires_grad({a, b}),
                      [ia, ib](Tape<T>& t, int self) {
                        const Matrix<T>& g = t.grad(self);
                        if (t.requires_grad(ia)) t.grad(ia) += g;
                        if (t.requires_grad(ib)) t.grad(ib) -= g;
                      });
}

// x + broadcast row vector b (1 x cols).
template <typename T>
Var<T> add_row(Var<T> x, Var<T> b) {
  Matrix<T> out = x.value();
  out.rowwise() += b.value().row(0);
  const int ix = x.id, ib = b.id;
  return x.tape->push(std::move(out), detail::any_requires_grad({x, b}),
                      [ix, ib](Tape<T>& t, int self) {
                        const Matrix<T>& g = t.grad(self);
                        if (t.requires_grad(ix)) t.grad(ix) += g;
                        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
                      });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  const int ix = x.id;
  return x.tape->push(x.value() * factor, detail::any_requires_grad({x}),
                      [ix, factor](Tape<T>& t, int self) {
                        t.grad(ix) += t.grad(self) * factor;
                      });
}

// x * exp(s) for a 1x1 node s (log-parameterized positive scale).
template <typename T>
Var<T> scale_exp(Var<T> x, Var<T> log_scale) {
  const T factor = std::exp(log_scale.value()(0, 0));
  const int ix = x.id, is = log_scale.id;
  return x.tape->push(x.value() * factor, detail::any_requires_grad({x, log_scale}),
                      [ix, is, factor](Tape<T>& t, int self) {
                        const Matrix<T>& g = t.grad(self);
                        if (t.requires_grad(ix)) t.grad(ix) += g * factor;
                        if (t.requires_grad(is))
                          t.grad(is)(0, 0) += (g.array() * t.value(self).array()).sum();
                      });
}

// Tanh approximation of GELU.
template <typename T>
Var<T> gelu(Var<T> x) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T k = T(0.044715);
  const Matrix<T>& xv = x.value();
  Matrix<T> inner = (c * (xv.array() + k * xv.array().cube())).matrix();
  Matrix<T> th = inner.array().tanh().matrix();
  Matrix<T> out = (T(0.5) * xv.array() * (T(1) + th.array())).matrix();
  const int ix = x.id;
  auto tanh_cache = std::make_shared<Matrix<T>>(std::move(th));
  return x.tape->push(std::move(out), detail::any_requires_grad({x}),
                      [ix, tanh_cache, c, k](Tape<T>& t, int self) {
                        const auto& xv = t.value(ix).array();
                        const auto& th = tanh_cache->array();
                        auto dinner = c * (T(1) + T(3) * k * xv.square());
                        auto dy = T(0.5) * (T(1) + th) +
                                  T(0.5) * xv * (T(1) - th.square()) * dinner;
                        t.grad(ix).array() += t.grad(self).array() * dy;
                      });
}

/// Row-wise layer normalization followed by the affine gain/bias (1 x cols).
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const Matrix<T>& xv = x.value();
  const Index n = xv.rows(), d = xv.cols();
  auto xhat = std::make_shared<Matrix<T>>(n, d);
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    const T mean = xv.row(r).mean();
    const T var = (xv.row(r).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    xhat->row(r) = (xv.row(r).array() - mean) * is;
  }
  Matrix<T> out = (xhat->array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(
      std::move(out), detail::any_requires_grad({x, gain, bias}),
      [ix, ig, ib, xhat, inv_std](Tape<T>& t, int self) {
        const Matrix<T>& g = t.grad(self);
        if (t.requires_grad(ig))
          t.grad(ig) += (g.array() * xhat->array()).colwise().sum().matrix();
        if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
        if (!t.requires_grad(ix)) return;
        Matrix<T> dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
        Matrix<T>& gx = t.grad(ix);
        for (Index r = 0; r < dxhat.rows(); ++r) {
          const T m1 = dxhat.row(r).mean();
          const T m2 = (dxhat.row(r).array() * xhat->row(r).array()).mean();
          gx.row(r).array() += (*inv_std)[static_cast<std::size_t>(r)] *
                               (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
        }
      });
}

// In-place numerically stable softmax of each row.
template <typename Derived>
void softmax_rows_inplace(Eigen::MatrixBase<Derived>& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    const auto mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

/// Multi-head scaled dot-product self-attention over packed sequences. `qkv`
/// holds the query, key and value projections side by side (N x 3d). In
/// causal mode position i attends to positions <= i of its own sequence.
/// When `probe` is given, the attention probabilities of every
/// (sequence, head) are copied into it.
template <typename T>
Var<T> self_attention(Var<T> qkv, const SequenceLayout& layout, int heads,
                      bool causal, std::vector<Matrix<T>>* probe = nullptr) {
  const Matrix<T>& in = qkv.value();
  const Index d = in.cols() / 3;
  if (d * 3 != in.cols() || d % heads != 0)
    throw std::invalid_argument("self_attention: bad qkv width");
  const Index dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  Matrix<T> out = Matrix<T>::Zero(in.rows(), d);
  auto probs = std::make_shared<std::vector<Matrix<T>>>();
  probs->reserve(layout.count() * static_cast<std::size_t>(heads));
  for (std::size_t s = 0; s < layout.count(); ++s) {
    const Index off = layout.offsets[s], len = layout.lengths[s];
    for (int h = 0; h < heads; ++h) {
      const auto q = in.block(off, h * dh, len, dh);
      const auto k = in.block(off, d + h * dh, len, dh);
      const auto v = in.block(off, 2 * d + h * dh, len, dh);
      Matrix<T> p(len, len);
      p.noalias() = q * k.transpose();
      p *= inv_sqrt;
      if (causal)
        for (Index i = 0; i < len; ++i)
          for (Index j = i + 1; j < len; ++j) p(i, j) = -std::numeric_limits<T>::infinity();
      softmax_rows_inplace(p);
      out.block(off, h * dh, len, dh).noalias() = p * v;
      probs->push_back(std::move(p));
    }
  }
  if (probe) *probe = *probs;
  const int iq = qkv.id;
  return qkv.tape->push(
      std::move(out), detail::any_requires_grad({qkv}),
      [iq, layout, heads, d, dh, inv_sqrt, probs](Tape<T>& t, int self) {
        const Matrix<T>& g = t.grad(self);
        const Matrix<T>& in = t.value(iq);
        Matrix<T>& gin = t.grad(iq);
        std::size_t idx = 0;
        for (std::size_t s = 0; s < layout.count(); ++s) {
          const Index off = layout.offsets[s], len = layout.lengths[s];
          for (int h = 0; h < heads; ++h, ++idx) {
            const Matrix<T>& p = (*probs)[idx];
            const auto q = in.block(off, h * dh, len, dh);
            const auto k = in.block(off, d + h * dh, len, dh);
            const auto v = in.block(off, 2 * d + h * dh, len, dh);
            const auto go = g.block(off, h * dh, len, dh);
            Matrix<T> dp(len, len);
            dp.noalias() = go * v.transpose();
            gin.block(off, 2 * d + h * dh, len, dh).noalias() += p.transpose() * go;
            // Softmax Jacobian: ds = p * (dp - rowsum(dp * p)).
            Eigen::Matrix<T, Eigen::Dynamic, 1> rs = (dp.array() * p.array()).rowwise().sum();
            Matrix<T> ds = (p.array() * (dp.array().colwise() - rs.array())).matrix();
            ds *= inv_sqrt;
            gin.block(off, h * dh, len, dh).noalias() += ds * k;
            gin.block(off, d + h * dh, len, dh).noalias() += ds.transpose() * q;
          }
        }
      });
}

/// Inverted dropout; identity outside training mode or at rate 0.
template <typename T>
Var<T> dropout(Var<T> x, double rate) {
  Tape<T>& tape = *x.tape;
  if (!tape.training() || rate <= 0.0) return x;
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  auto mask = std::make_shared<Matrix<T>>(x.rows(), x.cols());
  for (Index i = 0; i < mask->size(); ++i)
    mask->data()[i] = tape.dropout_rng().uniform() < rate ? T(0) : keep_scale;
  const int ix = x.id;
  return tape.push((x.value().array() * mask->array()).matrix(),
                   detail::any_requires_grad({x}), [ix, mask](Tape<T>& t, int self) {
                     t.grad(ix).array() += t.grad(self).array() * mask->array();
                   });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<Index> rows) {
  Matrix<T> out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw std::out_of_range("gather_rows: row index");
    out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  }
  const int ix = x.id;
  return x.tape->push(std::move(out), detail::any_requires_grad({x}),
                      [ix, rows = std::move(rows)](Tape<T>& t, int self) {
                        const Matrix<T>& g = t.grad(self);
                        Matrix<T>& gx = t.grad(ix);
                        for (std::size_t i = 0; i < rows.size(); ++i)
                          gx.row(rows[i]) += g.row(static_cast<Index>(i));
                      });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Index rows = 0;
  const Index cols = parts.front().cols();
  bool grad = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: width mismatch");
    rows += p.rows();
    grad = grad || p.tape->requires_grad(p.id);
  }
  Matrix<T> out(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    spans.emplace_back(p.id, offset);
    offset += p.rows();
  }
  return parts.front().tape->push(std::move(out), grad, [spans](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    for (const auto& [id, off] : spans)
      if (t.requires_grad(id)) t.grad(id) += g.middleRows(off, t.value(id).rows());
  });
}

// Mean of each packed sequence's rows: (sequences x cols).
template <typename T>
Var<T> segment_mean(Var<T> x, const SequenceLayout& layout) {
  Matrix<T> out(static_cast<Index>(layout.count()), x.cols());
  for (std::size_t s = 0; s < layout.count(); ++s)
    out.row(static_cast<Index>(s)) =
        x.value().middleRows(layout.offsets[s], layout.lengths[s]).colwise().mean();
  const int ix = x.id;
  return x.tape->push(std::move(out), detail::any_requires_grad({x}),
                      [ix, layout](Tape<T>& t, int self) {
                        const Matrix<T>& g = t.grad(self);
                        Matrix<T>& gx = t.grad(ix);
                        for (std::size_t s = 0; s < layout.count(); ++s) {
                          const T inv = T(1) / static_cast<T>(layout.lengths[s]);
                          gx.middleRows(layout.offsets[s], layout.lengths[s]).rowwise() +=
                              g.row(static_cast<Index>(s)) * inv;
                        }
                      });
}

template <typename T>
Var<T> l2_normalize_rows(Var<T> x, T eps = T(1e-12)) {
  const Matrix<T>& xv = x.value();
  auto norms = std::make_shared<Eigen::Matrix<T, Eigen::Dynamic, 1>>(xv.rowwise().norm());
  Matrix<T> out(xv.rows(), xv.cols());
  for (Index r = 0; r < xv.rows(); ++r)
    out.row(r) = xv.row(r) / std::max((*norms)(r), eps);
  const int ix = x.id;
  return x.tape->push(std::move(out), detail::any_requires_grad({x}),
                      [ix, norms, eps](Tape<T>& t, int self) {
                        const Matrix<T>& g = t.grad(self);
                        const Matrix<T>& y = t.value(self);
                        Matrix<T>& gx = t.grad(ix);
                        for (Index r = 0; r < g.rows(); ++r) {
                          const T dot = g.row(r).dot(y.row(r));
                          gx.row(r) += (g.row(r) - y.row(r) * dot) / std::max((*norms)(r), eps);
                        }
                      });
}

/// Multi-positive InfoNCE over a B x B logit matrix (similarities already
/// divided by the temperature): the mean over queries i of
/// (1/|P_i|) sum_{p in P_i} -log softmax(logits_i)_p. Each row of `positives`
/// must contain at least one true entry.
template <typename T>
Var<T> multi_positive_infonce(Var<T> logits, const std::vector<std::vector<bool>>& positives) {
  const Matrix<T>& z = logits.value();
  const Index b = z.rows();
  if (z.cols() != b || static_cast<Index>(positives.size()) != b)
    throw std::invalid_argument("multi_positive_infonce: expected square logits and mask");
  auto target = std::make_shared<Matrix<T>>(Matrix<T>::Zero(b, b));
  auto soft = std::make_shared<Matrix<T>>(z);
  T loss = 0;
  for (Index i = 0; i < b; ++i) {
    Index count = 0;
    for (Index j = 0; j < b; ++j) count += positives[i][j] ? 1 : 0;
    if (count == 0) throw std::invalid_argument("multi_positive_infonce: query without positives");
    const T mx = z.row(i).maxCoeff();
    const T lse = mx + std::log((z.row(i).array() - mx).exp().sum());
    T term = 0;
    for (Index j = 0; j < b; ++j)
      if (positives[i][j]) {
        term += lse - z(i, j);
        (*target)(i, j) = T(1) / static_cast<T>(count);
      }
    loss += term / static_cast<T>(count);
    soft->row(i) = (z.row(i).array() - lse).exp().matrix();
  }
  loss /= static_cast<T>(b);
  Matrix<T> out(1, 1);
  out(0, 0) = loss;
  const int iz = logits.id;
  return logits.tape->push(std::move(out), detail::any_requires_grad({logits}),
                           [iz, soft, target, b](Tape<T>& t, int self) {
                             const T g = t.grad(self)(0, 0);
                             t.grad(iz) += (*soft - *target) * (g / static_cast<T>(b));
                           });
}

/// Mean token-level cross-entropy of softmax(logits) against class targets.
template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<Index>& targets) {
  const Matrix<T>& z = logits.value();
  const Index n = z.rows();
  if (static_cast<Index>(targets.size()) != n)
    throw std::invalid_argument("cross_entropy: target count mismatch");
  auto soft = std::make_shared<Matrix<T>>(z);
  T loss = 0;
  for (Index i = 0; i < n; ++i) {
    const T mx = z.row(i).maxCoeff();
    const T lse = mx + std::log((z.row(i).array() - mx).exp().sum());
    loss += lse - z(i, targets[static_cast<std::size_t>(i)]);
    soft->row(i) = (z.row(i).array() - lse).exp().matrix();
  }
  loss /= static_cast<T>(n);
  Matrix<T> out(1, 1);
  out(0, 0) = loss;
  const int iz = logits.id;
  return logits.tape->push(std::move(out), detail::any_requires_grad({logits}),
                           [iz, soft, targets, n](Tape<T>& t, int self) {
                             const T g = t.grad(self)(0, 0) / static_cast<T>(n);
                             Matrix<T>& gz = t.grad(iz);
                             gz += *soft * g;
                             for (Index i = 0; i < n; ++i)
                               gz(i, targets[static_cast<std::size_t>(i)]) -= g;
                           });
}

// Sum of squared entries (1 x 1).
template <typename T>
Var<T> sum_squares(Var<T> x) {
  Matrix<T> out(1, 1);
  out(0, 0) = x.value().squaredNorm();
  const int ix = x.id;
  return x.tape->push(std::move(out), detail::any_requires_grad({x}),
                      [ix](Tape<T>& t, int self) {
                        t.grad(ix) += t.value(ix) * (T(2) * t.grad(self)(0, 0));
                      });
}

}  // namespace morphoglot::nn
