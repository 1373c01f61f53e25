// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named parameters and the transformer building blocks shared by the encoder
// and decoder.

#pragma once

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgmr/autodiff.hpp"

namespace lgmr {

/// Ordered name -> tensor map. Names are stable across versions and are the
/// keys of the checkpoint archive.
template <typename Scalar>
class ParameterSet {
 public:
  using Mat = Matrix<Scalar>;

  void add(const std::string& name, Mat value) {
    if (!tensors_.emplace(name, std::move(value)).second) {
      throw std::invalid_argument("duplicate parameter '" + name + "'");
    }
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  Mat& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  const Mat& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Mat>& entries() { return tensors_; }
  const std::map<std::string, Mat>& entries() const { return tensors_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, m] : tensors_) n += static_cast<std::size_t>(m.size());
    return n;
  }

  ParameterSet zeros_like() const {
    ParameterSet out;
    for (const auto& [name, m] : tensors_) out.add(name, Mat::Zero(m.rows(), m.cols()));
    return out;
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& [name, m] : tensors_) out.add(name, m.template cast<Other>());
    return out;
  }

 private:
  std::map<std::string, Mat> tensors_;
};

/// Binds parameters into a tape on first use, once per tape.
template <typename Scalar>
class Bindings {
 public:
  Bindings(Tape<Scalar>& tape, const ParameterSet<Scalar>& params) : tape_(tape), params_(params) {}

  Var<Scalar> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var<Scalar> v = tape_.parameter(params_.at(name));
    bound_.emplace(name, v);
    return v;
  }

  Tape<Scalar>& tape() { return tape_; }

  Var<Scalar> constant(Matrix<Scalar> value) { return tape_.constant(std::move(value)); }

  /// grads[name] += weight * d(root)/d(name) for every parameter touched by the pass.
  void accumulate_gradients(ParameterSet<Scalar>& grads, Scalar weight = Scalar(1)) const {
    for (const auto& [name, var] : bound_) {
      if (const auto* g = tape_.grad_if_any(var.id)) grads.at(name) += weight * (*g);
    }
  }

 private:
  Tape<Scalar>& tape_;
  const ParameterSet<Scalar>& params_;
  std::unordered_map<std::string, Var<Scalar>> bound_;
};

/// Deterministic initialiser: Xavier-uniform weights, zero biases, unit norms.
class ParameterInitializer {
 public:
  explicit ParameterInitializer(unsigned long long seed) : rng_(seed) {}

  template <typename Scalar>
  void linear(ParameterSet<Scalar>& set, const std::string& prefix, int in, int out, bool bias = true) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    set.add(prefix + ".weight", uniform<Scalar>(in, out, bound));
    if (bias) set.add(prefix + ".bias", Matrix<Scalar>::Zero(1, out));
  }

  template <typename Scalar>
  void norm(ParameterSet<Scalar>& set, const std::string& prefix, int dim) {
    set.add(prefix + ".gamma", Matrix<Scalar>::Ones(1, dim));
    set.add(prefix + ".beta", Matrix<Scalar>::Zero(1, dim));
  }

  template <typename Scalar>
  void attention(ParameterSet<Scalar>& set, const std::string& prefix, int dim) {
    linear(set, prefix + ".q", dim, dim);
    linear(set, prefix + ".k", dim, dim);
    linear(set, prefix + ".v", dim, dim);
    linear(set, prefix + ".out", dim, dim);
  }

  template <typename Scalar>
  void feed_forward(ParameterSet<Scalar>& set, const std::string& prefix, int dim, int hidden) {
    linear(set, prefix + ".fc1", dim, hidden);
    linear(set, prefix + ".fc2", hidden, dim);
  }

  template <typename Scalar>
  void normal(ParameterSet<Scalar>& set, const std::string& name, int rows, int cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng_));
    set.add(name, std::move(m));
  }

 private:
  template <typename Scalar>
  Matrix<Scalar> uniform(int rows, int cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng_));
    return m;
  }

  std::mt19937_64 rng_;
};

namespace nn {

template <typename Scalar>
Var<Scalar> linear(Bindings<Scalar>& p, const std::string& prefix, Var<Scalar> x) {
  return ad::add_row(ad::matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
}

template <typename Scalar>
Var<Scalar> layer_norm(Bindings<Scalar>& p, const std::string& prefix, Var<Scalar> x) {
  return ad::layer_norm_rows(x, p(prefix + ".gamma"), p(prefix + ".beta"));
}

template <typename Scalar>
Var<Scalar> feed_forward(Bindings<Scalar>& p, const std::string& prefix, Var<Scalar> x) {
  return linear(p, prefix + ".fc2", ad::relu(linear(p, prefix + ".fc1", x)));
}

template <typename Scalar>
struct AttentionResult {
  Var<Scalar> output;   // Nq x D
  Var<Scalar> weights;  // Nq x Nk head-averaged weights; set only when requested
};

/// Multi-head scaled dot-product attention. Positional terms, if any, are the
/// caller's business: add them to `query`/`key` and leave `value` untouched.
template <typename Scalar>
AttentionResult<Scalar> multi_head_attention(Bindings<Scalar>& p, const std::string& prefix, int heads,
                                             Var<Scalar> query, Var<Scalar> key, Var<Scalar> value,
                                             const Mask& key_mask = {}, bool keep_weights = false) {
  const Eigen::Index dim = query.cols();
  if (dim % heads != 0) throw std::invalid_argument("multi_head_attention: dim not divisible by heads");
  if (key.rows() != value.rows()) throw std::invalid_argument("multi_head_attention: key/value length mismatch");
  const Eigen::Index head_dim = dim / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));

  Var<Scalar> q = linear(p, prefix + ".q", query);
  Var<Scalar> k = linear(p, prefix + ".k", key);
  Var<Scalar> v = linear(p, prefix + ".v", value);

  std::vector<Var<Scalar>> outputs;
  Var<Scalar> weight_sum;
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index at = h * head_dim;
    Var<Scalar> scores = ad::matmul_nt(ad::slice_cols(q, at, head_dim), ad::slice_cols(k, at, head_dim), scale);
    Var<Scalar> weights = ad::softmax_rows(scores, key_mask);
    outputs.push_back(ad::matmul(weights, ad::slice_cols(v, at, head_dim)));
    if (keep_weights) weight_sum = weight_sum.valid() ? ad::add(weight_sum, weights) : weights;
  }
  Var<Scalar> merged = heads == 1 ? outputs.front() : ad::concat_cols(outputs);
  AttentionResult<Scalar> result{linear(p, prefix + ".out", merged), {}};
  if (keep_weights) result.weights = heads == 1 ? weight_sum : ad::scale(weight_sum, Scalar(1) / Scalar(heads));
  return result;
}

/// Fixed sinusoidal embeddings: row r encodes position positions[r];
/// even columns sin(pos / 10000^(2i/D)), odd columns cos of the same angle.
template <typename Scalar>
Matrix<Scalar> sinusoid_table(const std::vector<double>& positions, Eigen::Index dim) {
  Matrix<Scalar> table(static_cast<Eigen::Index>(positions.size()), dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      const double exponent = static_cast<double>(2 * (c / 2)) / static_cast<double>(dim);
      const double angle = positions[r] / std::pow(10000.0, exponent);
      table(static_cast<Eigen::Index>(r), c) = static_cast<Scalar>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return table;
}

template <typename Scalar>
Matrix<Scalar> sinusoid_table(Eigen::Index first, Eigen::Index count, Eigen::Index dim) {
  std::vector<double> positions(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) positions[static_cast<std::size_t>(i)] = static_cast<double>(first + i);
  return sinusoid_table<Scalar>(positions, dim);
}

}  // namespace nn
}  // namespace lgmr
