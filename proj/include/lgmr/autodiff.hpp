// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major Eigen matrices.
//
// A Tape records every operation of a forward pass as a node holding its value
// and a closure that propagates the node's adjoint into its parents. Ops are
// free functions over Var handles, so model code reads like ordinary matrix
// algebra. The scalar type is a template parameter: float for training, double
// for finite-difference verification.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgmr {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Per-row (or per-key) validity flags. An empty mask means "all valid".
using Mask = std::vector<bool>;

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr; }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat value) { return push(std::move(value), nullptr, false, {}); }

  /// Owned leaf whose gradient is tracked.
  Var<Scalar> variable(Mat value) { return push(std::move(value), nullptr, true, {}); }

  /// Leaf that aliases external storage; the referenced matrix must outlive the tape.
  Var<Scalar> parameter(const Mat& storage) { return push(Mat(), &storage, true, {}); }

  /// Records an op result. The node tracks gradients iff some parent does.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> parents, Backward backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward{});
  }

  Var<Scalar> record(Mat value, const std::vector<Var<Scalar>>& parents, Backward backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward{});
  }

  const Mat& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Adjoint of a node, zero-initialised on first access.
  Mat& grad(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      const Mat& v = value(id);
      n.grad = Mat::Zero(v.rows(), v.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Adjoint if one was accumulated, else nullptr.
  const Mat* grad_if_any(int id) const {
    const Node& n = nodes_[id];
    return n.has_grad ? &n.grad : nullptr;
  }

  /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(Var<Scalar> root) {
    if (value(root.id).size() != 1) throw std::invalid_argument("backward: root must be a 1x1 scalar");
    grad(root.id).setOnes();
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.has_grad && n.backward) n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };

  Var<Scalar> push(Mat value, const Mat* external, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.external = external;
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  // deque keeps value references stable while ops append nodes.
  std::deque<Node> nodes_;
};

namespace ad {

namespace detail {

template <typename Scalar>
void check_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Accumulates into a parent's adjoint only when that parent tracks gradients.
template <typename Scalar, typename Expr>
void accumulate(Tape<Scalar>& t, int id, const Expr& expr) {
  if (t.requires_grad(id)) t.grad(id) += expr;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix<Scalar> out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a.id, g * t.value(b.id).transpose());
    detail::accumulate(t, b.id, t.value(a.id).transpose() * g);
  });
}

/// scale * a * b^T
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b, Scalar scale = Scalar(1)) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix<Scalar> out = scale * (a.value() * b.value().transpose());
  return a.tape->record(std::move(out), {a, b}, [a, b, scale](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a.id, scale * (g * t.value(b.id)));
    detail::accumulate(t, b.id, scale * (g.transpose() * t.value(a.id)));
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_shape(a, b, "add");
  Matrix<Scalar> out = a.value() + b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a.id, g);
    detail::accumulate(t, b.id, g);
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_shape(a, b, "sub");
  Matrix<Scalar> out = a.value() - b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a.id, g);
    detail::accumulate(t, b.id, -g);
  });
}

/// a + broadcast of the 1xC row r to every row of a.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw std::invalid_argument("add_row: expected 1xC row");
  Matrix<Scalar> out = a.value().rowwise() + r.value().row(0);
  return a.tape->record(std::move(out), {a, r}, [a, r](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a.id, g);
    detail::accumulate(t, r.id, g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Matrix<Scalar> out = s * a.value();
  return a.tape->record(std::move(out), {a}, [a, s](Tape<Scalar>& t, int self) {
    detail::accumulate(t, a.id, s * t.grad(self));
  });
}

/// Element-wise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_shape(a, b, "mul");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a.id, g.cwiseProduct(t.value(b.id)));
    detail::accumulate(t, b.id, g.cwiseProduct(t.value(a.id)));
  });
}

/// Element-wise quotient.
template <typename Scalar>
Var<Scalar> div(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_shape(a, b, "div");
  Matrix<Scalar> out = a.value().cwiseQuotient(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    const auto& bv = t.value(b.id);
    detail::accumulate(t, a.id, g.cwiseQuotient(bv));
    detail::accumulate(t, b.id, -(g.cwiseProduct(t.value(self)).cwiseQuotient(bv)));
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, int self) {
    const auto& x = t.value(a.id);
    detail::accumulate(t, a.id, t.grad(self).cwiseProduct((x.array() > Scalar(0)).template cast<Scalar>().matrix()));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Matrix<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, int self) {
    const auto& y = t.value(self);
    detail::accumulate(t, a.id, (t.grad(self).array() * y.array() * (Scalar(1) - y.array())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> log(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().log().matrix();
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, int self) {
    detail::accumulate(t, a.id, t.grad(self).cwiseQuotient(t.value(a.id)));
  });
}

template <typename Scalar>
Var<Scalar> abs(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().cwiseAbs();
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, int self) {
    detail::accumulate(t, a.id, t.grad(self).cwiseProduct(t.value(a.id).cwiseSign()));
  });
}

/// Element-wise minimum; ties route the gradient to a.
template <typename Scalar>
Var<Scalar> minimum(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_shape(a, b, "minimum");
  Matrix<Scalar> out = a.value().cwiseMin(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    Matrix<Scalar> pick_a = (t.value(a.id).array() <= t.value(b.id).array()).template cast<Scalar>().matrix();
    detail::accumulate(t, a.id, g.cwiseProduct(pick_a));
    detail::accumulate(t, b.id, g - g.cwiseProduct(pick_a));
  });
}

/// Element-wise maximum; ties route the gradient to a.
template <typename Scalar>
Var<Scalar> maximum(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_shape(a, b, "maximum");
  Matrix<Scalar> out = a.value().cwiseMax(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    Matrix<Scalar> pick_a = (t.value(a.id).array() >= t.value(b.id).array()).template cast<Scalar>().matrix();
    detail::accumulate(t, a.id, g.cwiseProduct(pick_a));
    detail::accumulate(t, b.id, g - g.cwiseProduct(pick_a));
  });
}

/// Clamps every element into [lo, hi]; the gradient passes only where unclamped.
template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> a, Scalar lo, Scalar hi) {
  Matrix<Scalar> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape->record(std::move(out), {a}, [a, lo, hi](Tape<Scalar>& t, int self) {
    const auto& x = t.value(a.id).array();
    Matrix<Scalar> pass = ((x >= lo) && (x <= hi)).template cast<Scalar>().matrix();
    detail::accumulate(t, a.id, t.grad(self).cwiseProduct(pass));
  });
}

/// Row-wise softmax. Keys with key_mask[j] == false receive exactly zero weight.
template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a, const Mask& key_mask = {}) {
  const auto& x = a.value();
  if (!key_mask.empty() && static_cast<Eigen::Index>(key_mask.size()) != x.cols()) {
    throw std::invalid_argument("softmax_rows: key mask length mismatch");
  }
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (key_mask.empty() || key_mask[j]) best = std::max(best, x(i, j));
    }
    if (!std::isfinite(best)) throw std::invalid_argument("softmax_rows: every key is masked");
    Scalar total = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (key_mask.empty() || key_mask[j]) {
        out(i, j) = std::exp(x(i, j) - best);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, int self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = g.cwiseProduct(y).rowwise().sum();
    detail::accumulate(t, a.id, y.cwiseProduct(g - dots.replicate(1, g.cols())));
  });
}

/// Row-wise layer normalisation with affine 1xC gamma and beta.
template <typename Scalar>
Var<Scalar> layer_norm_rows(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps = Scalar(1e-5)) {
  const auto& xv = x.value();
  const Eigen::Index c = xv.cols();
  if (gamma.cols() != c || beta.cols() != c) throw std::invalid_argument("layer_norm_rows: affine width mismatch");
  Matrix<Scalar> xhat(xv.rows(), c);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const Scalar mu = xv.row(i).mean();
    const Scalar var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix<Scalar> out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& t, int self) {
        const auto& g = t.grad(self);
        detail::accumulate(t, beta.id, g.colwise().sum());
        detail::accumulate(t, gamma.id, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(x.id)) {
          Matrix<Scalar> gx = g.array().rowwise() * t.value(gamma.id).row(0).array();
          auto& dst = t.grad(x.id);
          for (Eigen::Index i = 0; i < gx.rows(); ++i) {
            const Scalar m1 = gx.row(i).mean();
            const Scalar m2 = gx.row(i).cwiseProduct(xhat.row(i)).mean();
            dst.row(i) += (inv_std(i) * (gx.row(i).array() - m1 - xhat.row(i).array() * m2)).matrix();
          }
        }
      });
}

/// Mean over rows -> 1xC. Rows with row_mask[i] == false are excluded.
template <typename Scalar>
Var<Scalar> mean_rows(Var<Scalar> a, const Mask& row_mask = {}) {
  const auto& x = a.value();
  if (!row_mask.empty() && static_cast<Eigen::Index>(row_mask.size()) != x.rows()) {
    throw std::invalid_argument("mean_rows: row mask length mismatch");
  }
  Eigen::Index count = 0;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(1, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (row_mask.empty() || row_mask[i]) {
      out += x.row(i);
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("mean_rows: no valid rows");
  out /= Scalar(count);
  return a.tape->record(std::move(out), {a}, [a, row_mask, count](Tape<Scalar>& t, int self) {
    if (!t.requires_grad(a.id)) return;
    const auto& g = t.grad(self);
    auto& dst = t.grad(a.id);
    for (Eigen::Index i = 0; i < dst.rows(); ++i) {
      if (row_mask.empty() || row_mask[i]) dst.row(i) += g / Scalar(count);
    }
  });
}

/// Row sums -> Nx1.
template <typename Scalar>
Var<Scalar> sum_cols(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().rowwise().sum();
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a.id, g.replicate(1, t.value(a.id).cols()));
  });
}

/// Mean of every element -> 1x1.
template <typename Scalar>
Var<Scalar> mean_all(Var<Scalar> a) {
  const Scalar n = static_cast<Scalar>(a.value().size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape->record(std::move(out), {a}, [a, n](Tape<Scalar>& t, int self) {
    const Scalar g = t.grad(self)(0, 0) / n;
    if (t.requires_grad(a.id)) t.grad(a.id).array() += g;
  });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows: range out of bounds");
  Matrix<Scalar> out = a.value().middleRows(start, count);
  return a.tape->record(std::move(out), {a}, [a, start, count](Tape<Scalar>& t, int self) {
    if (t.requires_grad(a.id)) t.grad(a.id).middleRows(start, count) += t.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols: range out of bounds");
  Matrix<Scalar> out = a.value().middleCols(start, count);
  return a.tape->record(std::move(out), {a}, [a, start, count](Tape<Scalar>& t, int self) {
    if (t.requires_grad(a.id)) t.grad(a.id).middleCols(start, count) += t.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape->record(std::move(out), parts, [parts](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
      const Eigen::Index r = t.value(p.id).rows();
      detail::accumulate(t, p.id, g.middleRows(offset, r));
      offset += r;
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape->record(std::move(out), parts, [parts](Tape<Scalar>& t, int self) {
    const auto& g = t.grad(self);
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
      const Eigen::Index c = t.value(p.id).cols();
      detail::accumulate(t, p.id, g.middleCols(offset, c));
      offset += c;
    }
  });
}

/// Repeats each row of a `times` times consecutively: KxC -> (K*times)xC.
template <typename Scalar>
Var<Scalar> repeat_rows(Var<Scalar> a, Eigen::Index times) {
  const auto& x = a.value();
  Matrix<Scalar> out(x.rows() * times, x.cols());
  for (Eigen::Index k = 0; k < x.rows(); ++k) out.middleRows(k * times, times) = x.row(k).replicate(times, 1);
  return a.tape->record(std::move(out), {a}, [a, times](Tape<Scalar>& t, int self) {
    if (!t.requires_grad(a.id)) return;
    const auto& g = t.grad(self);
    auto& dst = t.grad(a.id);
    for (Eigen::Index k = 0; k < dst.rows(); ++k) dst.row(k) += g.middleRows(k * times, times).colwise().sum();
  });
}

/// Zeroes rows whose mask entry is false.
template <typename Scalar>
Var<Scalar> mask_rows(Var<Scalar> a, const Mask& row_mask) {
  if (row_mask.empty()) return a;
  if (static_cast<Eigen::Index>(row_mask.size()) != a.rows()) throw std::invalid_argument("mask_rows: length mismatch");
  Matrix<Scalar> out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!row_mask[i]) out.row(i).setZero();
  }
  return a.tape->record(std::move(out), {a}, [a, row_mask](Tape<Scalar>& t, int self) {
    if (!t.requires_grad(a.id)) return;
    const auto& g = t.grad(self);
    auto& dst = t.grad(a.id);
    for (Eigen::Index i = 0; i < dst.rows(); ++i) {
      if (row_mask[i]) dst.row(i) += g.row(i);
    }
  });
}

}  // namespace ad
}  // namespace lgmr
