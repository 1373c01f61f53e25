// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Local-global temporal encoder. Each layer splits the sequence into
// non-overlapping windows of length M, runs self-attention inside every
// window, pools each window into one summary by attention, lets the summaries
// attend to each other, and merges both levels back onto the timeline:
//
//   F_l[k] = SelfAttn(F_w[k])
//   F_g[k] = CrossAttn(Avg(F_l[k]), F_l[k], F_l[k])
//   F_g    = SelfAttn(F_g)
//   F_V    = FFN(LN(Flatten(F_l + Rep(F_g))))
//
// Attention sub-layers are pre-norm with a residual. Sinusoidal positions over
// the flattened timeline are added to query and key inputs only. A tail
// window shorter than M is zero-padded and its padded keys are masked.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lgmr/config.hpp"
#include "lgmr/errors.hpp"
#include "lgmr/nn.hpp"

namespace lgmr::encoder {

struct WindowLayout {
  Eigen::Index length = 0;        // T
  Eigen::Index window_len = 0;    // M
  Eigen::Index window_count = 0;  // K = ceil(T / M)
  Eigen::Index pad_len = 0;       // K * M - T

  /// Number of real rows in window k.
  Eigen::Index valid_rows(Eigen::Index k) const { return std::min(window_len, length - k * window_len); }
  Mask key_mask(Eigen::Index k) const {
    Mask m(static_cast<std::size_t>(window_len), false);
    for (Eigen::Index i = 0; i < valid_rows(k); ++i) m[static_cast<std::size_t>(i)] = true;
    return m;
  }
};

inline WindowLayout window_layout(Eigen::Index length, Eigen::Index window_len) {
  if (length < 1 || window_len < 1) throw std::invalid_argument("window_layout: T and M must be >= 1");
  WindowLayout w;
  w.length = length;
  w.window_len = window_len;
  w.window_count = (length + window_len - 1) / window_len;
  w.pad_len = w.window_count * window_len - length;
  return w;
}

/// K x M x D windows stored as (K*M) x D rows, zero-padded at the tail.
template <typename Scalar>
struct WindowedFeatures {
  WindowLayout layout;
  Matrix<Scalar> rows;

  auto window(Eigen::Index k) const { return rows.middleRows(k * layout.window_len, layout.window_len); }
  /// true for real rows, false for padding.
  Mask pad_mask() const {
    Mask m(static_cast<std::size_t>(rows.rows()), false);
    for (Eigen::Index i = 0; i < layout.length; ++i) m[static_cast<std::size_t>(i)] = true;
    return m;
  }
};

template <typename Scalar>
WindowedFeatures<Scalar> split_windows(const Matrix<Scalar>& features, Eigen::Index window_len) {
  WindowedFeatures<Scalar> w;
  w.layout = window_layout(features.rows(), window_len);
  w.rows = Matrix<Scalar>::Zero(w.layout.window_count * window_len, features.cols());
  w.rows.topRows(features.rows()) = features;
  return w;
}

template <typename Scalar>
Matrix<Scalar> unsplit_windows(const WindowedFeatures<Scalar>& w) {
  return w.rows.topRows(w.layout.length);
}

/// Names the parameters of one encoder layer under `prefix`.
template <typename Scalar>
void declare_layer(ParameterSet<Scalar>& set, ParameterInitializer& init, const std::string& prefix,
                   const ModelConfig& config) {
  const int d = config.hidden_dim;
  for (const char* block : {".local", ".summary", ".global"}) {
    init.norm(set, prefix + block + ".norm", d);
    init.attention(set, prefix + block + ".attn", d);
  }
  init.norm(set, prefix + ".fuse.norm", d);
  init.feed_forward(set, prefix + ".fuse.ffn", d, config.ffn_dim);
}

template <typename Scalar>
void declare_parameters(ParameterSet<Scalar>& set, ParameterInitializer& init, const ModelConfig& config,
                        int video_dim) {
  init.linear(set, "encoder.input", video_dim, config.hidden_dim);
  for (int l = 0; l < config.encoder_layers; ++l) declare_layer(set, init, "encoder.layers." + std::to_string(l), config);
}

/// Self-attention inside one window. Padded rows (key_mask false) are excluded
/// as keys and passed through unchanged.
template <typename Scalar>
nn::AttentionResult<Scalar> local_attend(Bindings<Scalar>& p, const std::string& prefix, int heads,
                                         Var<Scalar> window, const Mask& key_mask,
                                         const Matrix<Scalar>* positions = nullptr, bool keep_weights = false) {
  Var<Scalar> h = nn::layer_norm(p, prefix + ".norm", window);
  Var<Scalar> qk = positions ? ad::add(h, p.constant(*positions)) : h;
  auto attended = nn::multi_head_attention(p, prefix + ".attn", heads, qk, qk, h, key_mask, keep_weights);
  attended.output = ad::add(window, ad::mask_rows(attended.output, key_mask));
  return attended;
}

/// Attention pooling of one window: the masked mean of the window queries the
/// window's rows, and the pooled vector is added back onto the mean.
template <typename Scalar>
nn::AttentionResult<Scalar> window_summary(Bindings<Scalar>& p, const std::string& prefix, int heads,
                                           Var<Scalar> local, const Mask& key_mask,
                                           const Matrix<Scalar>* positions = nullptr, bool keep_weights = false) {
  Var<Scalar> mean = ad::mean_rows(local, key_mask);
  Var<Scalar> h = nn::layer_norm(p, prefix + ".norm", local);
  Var<Scalar> query = nn::layer_norm(p, prefix + ".norm", mean);
  Var<Scalar> key = positions ? ad::add(h, p.constant(*positions)) : h;
  auto pooled = nn::multi_head_attention(p, prefix + ".attn", heads, query, key, h, key_mask, keep_weights);
  pooled.output = ad::add(mean, pooled.output);
  return pooled;
}

/// Self-attention across window summaries.
template <typename Scalar>
nn::AttentionResult<Scalar> global_attend(Bindings<Scalar>& p, const std::string& prefix, int heads,
                                          Var<Scalar> globals, const Matrix<Scalar>* positions = nullptr,
                                          bool keep_weights = false) {
  Var<Scalar> h = nn::layer_norm(p, prefix + ".norm", globals);
  Var<Scalar> qk = positions ? ad::add(h, p.constant(*positions)) : h;
  auto attended = nn::multi_head_attention(p, prefix + ".attn", heads, qk, qk, h, {}, keep_weights);
  attended.output = ad::add(globals, attended.output);
  return attended;
}

/// FFN(LN(Flatten(local + Rep(globals)))) with the padded tail dropped: (K*M) x D
/// local rows and K x D summaries -> length x D.
template <typename Scalar>
Var<Scalar> fuse_local_global(Bindings<Scalar>& p, const std::string& prefix, Var<Scalar> local,
                              Var<Scalar> globals, Eigen::Index window_len, Eigen::Index length) {
  if (local.rows() != globals.rows() * window_len || local.cols() != globals.cols() || length > local.rows()) {
    throw std::invalid_argument("fuse_local_global: shape mismatch");
  }
  Var<Scalar> merged = ad::add(local, ad::repeat_rows(globals, window_len));
  if (length < merged.rows()) merged = ad::slice_rows(merged, 0, length);
  return nn::feed_forward(p, prefix + ".ffn", nn::layer_norm(p, prefix + ".norm", merged));
}

/// Diagnostics captured from one layer when requested.
template <typename Scalar>
struct LayerTrace {
  std::vector<Var<Scalar>> local_weights;    // per window, M x M
  std::vector<Var<Scalar>> summary_weights;  // per window, 1 x M
  Var<Scalar> global_weights;                // K x K
  Var<Scalar> local;                         // (K*M) x D
  Var<Scalar> globals;                       // K x D
};

/// One encoder layer. `x` may carry garbage rows beyond `length`; they are
/// treated as padding. Returns exactly `length` rows.
template <typename Scalar>
Var<Scalar> encoder_layer(Bindings<Scalar>& p, const std::string& prefix, const ModelConfig& config, Var<Scalar> x,
                          Eigen::Index length, LayerTrace<Scalar>* trace = nullptr) {
  const WindowLayout layout = window_layout(length, config.window_len);
  const Eigen::Index m = layout.window_len;
  const Eigen::Index padded = layout.window_count * m;
  const Eigen::Index dim = x.cols();

  Var<Scalar> rows = x;
  if (rows.rows() > padded) {
    rows = ad::slice_rows(rows, 0, padded);
  } else if (rows.rows() < padded) {
    rows = ad::concat_rows<Scalar>({rows, p.constant(Matrix<Scalar>::Zero(padded - rows.rows(), dim))});
  }

  const bool use_pos = config.positional_encoding;
  const Matrix<Scalar> timeline = use_pos ? nn::sinusoid_table<Scalar>(0, padded, dim) : Matrix<Scalar>();
  std::vector<double> centres;

  std::vector<Var<Scalar>> locals;
  std::vector<Var<Scalar>> summaries;
  for (Eigen::Index k = 0; k < layout.window_count; ++k) {
    const Mask keys = layout.key_mask(k);
    const Matrix<Scalar> pos = use_pos ? Matrix<Scalar>(timeline.middleRows(k * m, m)) : Matrix<Scalar>();
    const Matrix<Scalar>* pos_ptr = use_pos ? &pos : nullptr;
    auto local = local_attend(p, prefix + ".local", config.heads, ad::slice_rows(rows, k * m, m), keys, pos_ptr,
                              trace != nullptr);
    auto summary = window_summary(p, prefix + ".summary", config.heads, local.output, keys, pos_ptr, trace != nullptr);
    if (trace) {
      trace->local_weights.push_back(local.weights);
      trace->summary_weights.push_back(summary.weights);
    }
    locals.push_back(local.output);
    summaries.push_back(summary.output);
    centres.push_back(static_cast<double>(k * m) + static_cast<double>(layout.valid_rows(k) - 1) / 2.0);
  }

  const Matrix<Scalar> window_pos = use_pos ? nn::sinusoid_table<Scalar>(centres, dim) : Matrix<Scalar>();
  auto globals = global_attend(p, prefix + ".global", config.heads, ad::concat_rows(summaries),
                               use_pos ? &window_pos : nullptr, trace != nullptr);
  Var<Scalar> local_rows = ad::concat_rows(locals);
  if (trace) {
    trace->global_weights = globals.weights;
    trace->local = local_rows;
    trace->globals = globals.output;
  }
  return fuse_local_global(p, prefix + ".fuse", local_rows, globals.output, m, length);
}

/// Input projection followed by the stacked layers. `video` holds at least
/// `length` rows; rows past `length` are masked padding. Returns length x D.
template <typename Scalar>
Var<Scalar> encode(Bindings<Scalar>& p, const ModelConfig& config, Var<Scalar> video, Eigen::Index length) {
  if (length < 1 || length > video.rows()) throw std::invalid_argument("encode: invalid sequence length");
  if (!video.value().allFinite()) throw NumericError("encode: non-finite video features");
  Var<Scalar> x = nn::linear(p, "encoder.input", video);
  for (int l = 0; l < config.encoder_layers; ++l) {
    x = encoder_layer(p, "encoder.layers." + std::to_string(l), config, x, length);
  }
  return x;
}

}  // namespace lgmr::encoder
