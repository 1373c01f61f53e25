// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Local-global iterative decoder.
//
// Each paragraph i is represented by one global query Q_g[i] (its projected
// token mean) and E local subparagraph queries Q_l[i] extracted from its
// tokens under the guidance of Q_g[i]:
//
//   Q_l[i] = CrossAttn(LN(Q_g[i] W1 + O_S W2), F_L[i], F_L[i])
//
// Every decoder layer then runs, in order:
//   (a) intra-level:  self-attention inside each Q_l[i]; self-attention over Q_g
//   (b) cross-modal:  Q_l -> video and Q_g -> video cross-attention
//   (c) cross-level:  Q_l -> Q_g cross-attention; Q_g[i] -> Q_l[i] cross-attention
// followed by a feed-forward block on each stream. The head-averaged weights
// of the Q_g -> video attention are the a_ij supervised by the attention loss.
//
// Local queries are stored paragraph-major as (N*E) x D.

#pragma once

#include <string>
#include <vector>

#include "lgmr/config.hpp"
#include "lgmr/nn.hpp"

namespace lgmr::decoder {

/// Floor applied to predicted widths so that no interval collapses to a point.
inline constexpr double kMinWidth = 1e-4;

template <typename Scalar>
struct DecoderState {
  Var<Scalar> local;   // (N*E) x D
  Var<Scalar> global;  // N x D
  Eigen::Index paragraphs = 0;
  Eigen::Index subparagraphs = 0;

  Var<Scalar> local_of(Eigen::Index i) const { return ad::slice_rows(local, i * subparagraphs, subparagraphs); }
};

template <typename Scalar>
struct ParagraphEmbedding {
  Var<Scalar> tokens;  // N_L x D, projected
  Var<Scalar> global;  // 1 x D
};

template <typename Scalar>
void declare_layer(ParameterSet<Scalar>& set, ParameterInitializer& init, const std::string& prefix,
                   const ModelConfig& config) {
  const int d = config.hidden_dim;
  for (const char* block : {".intra_local", ".intra_global", ".local_video", ".global_video", ".local_from_global",
                            ".global_from_local"}) {
    init.norm(set, prefix + block + ".norm", d);
    init.attention(set, prefix + block + ".attn", d);
  }
  for (const char* block : {".local_ffn", ".global_ffn"}) {
    init.norm(set, prefix + block + ".norm", d);
    init.feed_forward(set, prefix + block + ".ffn", d, config.ffn_dim);
  }
}

template <typename Scalar>
void declare_head(ParameterSet<Scalar>& set, ParameterInitializer& init, const std::string& prefix, int in, int dim) {
  init.linear(set, prefix + ".fc1", in, dim);
  init.linear(set, prefix + ".fc2", dim, dim);
  init.linear(set, prefix + ".fc3", dim, 2);
}

template <typename Scalar>
void declare_parameters(ParameterSet<Scalar>& set, ParameterInitializer& init, const ModelConfig& config,
                        int text_dim) {
  const int d = config.hidden_dim;
  init.linear(set, "decoder.text", text_dim, d);
  init.normal(set, "decoder.subparagraph.seeds", config.subparagraph_count, d, 1.0);
  init.linear(set, "decoder.subparagraph.w1", d, d, false);
  init.linear(set, "decoder.subparagraph.w2", d, d, false);
  init.norm(set, "decoder.subparagraph.norm", d);
  init.attention(set, "decoder.subparagraph.attn", d);
  init.norm(set, "decoder.subparagraph.ffn_norm", d);
  init.feed_forward(set, "decoder.subparagraph.ffn", d, config.ffn_dim);
  for (int l = 0; l < config.decoder_layers; ++l) declare_layer(set, init, "decoder.layers." + std::to_string(l), config);
  init.norm(set, "head.norm", d);
  declare_head(set, init, "head.aux", d, d);
  declare_head(set, init, "head.final", 2 * d, d);
}

/// Projects tokens into the model width; the global query is their mean.
template <typename Scalar>
ParagraphEmbedding<Scalar> embed_paragraph(Bindings<Scalar>& p, Var<Scalar> tokens) {
  if (tokens.rows() < 1) throw std::invalid_argument("embed_paragraph: empty token sequence");
  Var<Scalar> projected = nn::linear(p, "decoder.text", tokens);
  return {projected, ad::mean_rows(projected)};
}

/// E subparagraph features for one paragraph (one decoder-style layer:
/// cross-attention over tokens, then a feed-forward block).
template <typename Scalar>
nn::AttentionResult<Scalar> extract_subparagraphs(Bindings<Scalar>& p, const ModelConfig& config,
                                                  Var<Scalar> global, Var<Scalar> tokens, bool keep_weights = false) {
  Var<Scalar> guide = ad::matmul(global, p("decoder.subparagraph.w1.weight"));
  Var<Scalar> seeds = ad::matmul(p("decoder.subparagraph.seeds"), p("decoder.subparagraph.w2.weight"));
  Var<Scalar> queries = nn::layer_norm(p, "decoder.subparagraph.norm", ad::add_row(seeds, guide));
  Var<Scalar> keys = tokens;
  if (config.positional_encoding) {
    keys = ad::add(tokens, p.constant(nn::sinusoid_table<Scalar>(0, tokens.rows(), tokens.cols())));
  }
  auto attended =
      nn::multi_head_attention(p, "decoder.subparagraph.attn", config.heads, queries, keys, tokens, {}, keep_weights);
  Var<Scalar> h = ad::add(queries, attended.output);
  attended.output = ad::add(
      h, nn::feed_forward(p, "decoder.subparagraph.ffn", nn::layer_norm(p, "decoder.subparagraph.ffn_norm", h)));
  return attended;
}

/// Builds the initial state from per-paragraph token matrices.
template <typename Scalar>
DecoderState<Scalar> initial_state(Bindings<Scalar>& p, const ModelConfig& config,
                                   const std::vector<Var<Scalar>>& paragraphs) {
  if (paragraphs.empty()) throw std::invalid_argument("decoder: no paragraphs");
  std::vector<Var<Scalar>> locals;
  std::vector<Var<Scalar>> globals;
  for (const auto& tokens : paragraphs) {
    auto embedded = embed_paragraph(p, tokens);
    globals.push_back(embedded.global);
    locals.push_back(extract_subparagraphs(p, config, embedded.global, embedded.tokens).output);
  }
  DecoderState<Scalar> state;
  state.local = ad::concat_rows(locals);
  state.global = ad::concat_rows(globals);
  state.paragraphs = static_cast<Eigen::Index>(paragraphs.size());
  state.subparagraphs = config.subparagraph_count;
  return state;
}

template <typename Scalar>
Var<Scalar> attend_block(Bindings<Scalar>& p, const std::string& prefix, int heads, Var<Scalar> stream,
                         Var<Scalar> key, Var<Scalar> value, const Mask& key_mask = {},
                         Var<Scalar>* weights = nullptr) {
  Var<Scalar> q = nn::layer_norm(p, prefix + ".norm", stream);
  auto attended = nn::multi_head_attention(p, prefix + ".attn", heads, q, key, value, key_mask, weights != nullptr);
  if (weights) *weights = attended.weights;
  return ad::add(stream, attended.output);
}

/// (a) Self-attention within each paragraph's local queries and across all
/// global queries. Paragraph-index positions are added to global queries/keys.
template <typename Scalar>
DecoderState<Scalar> intra_level(Bindings<Scalar>& p, const std::string& prefix, const ModelConfig& config,
                                 const DecoderState<Scalar>& state) {
  std::vector<Var<Scalar>> locals;
  for (Eigen::Index i = 0; i < state.paragraphs; ++i) {
    Var<Scalar> li = state.local_of(i);
    Var<Scalar> h = nn::layer_norm(p, prefix + ".intra_local.norm", li);
    auto attended = nn::multi_head_attention(p, prefix + ".intra_local.attn", config.heads, h, h, h);
    locals.push_back(ad::add(li, attended.output));
  }
  Var<Scalar> h = nn::layer_norm(p, prefix + ".intra_global.norm", state.global);
  Var<Scalar> qk = h;
  if (config.positional_encoding) {
    qk = ad::add(h, p.constant(nn::sinusoid_table<Scalar>(0, state.paragraphs, h.cols())));
  }
  auto attended = nn::multi_head_attention(p, prefix + ".intra_global.attn", config.heads, qk, qk, h);

  DecoderState<Scalar> out = state;
  out.local = ad::concat_rows(locals);
  out.global = ad::add(state.global, attended.output);
  return out;
}

/// (b) Local and global queries attend to the encoded video. `video_pos`
/// (T x D, may be empty) is added to the video keys and values. Writes the
/// head-averaged N x T global->video weights to `attention`.
template <typename Scalar>
DecoderState<Scalar> cross_modal(Bindings<Scalar>& p, const std::string& prefix, const ModelConfig& config,
                                 const DecoderState<Scalar>& state, Var<Scalar> video, const Matrix<Scalar>& video_pos,
                                 Var<Scalar>* attention) {
  if (video.rows() < 1) throw std::invalid_argument("decoder: empty video");
  Var<Scalar> memory = video_pos.size() > 0 ? ad::add(video, p.constant(video_pos)) : video;
  DecoderState<Scalar> out = state;
  out.local = attend_block(p, prefix + ".local_video", config.heads, state.local, memory, memory);
  out.global = attend_block(p, prefix + ".global_video", config.heads, state.global, memory, memory, {}, attention);
  return out;
}

/// (c) Local queries gather from all global queries; each global query then
/// gathers from its own paragraph's (updated) local queries.
template <typename Scalar>
DecoderState<Scalar> cross_level(Bindings<Scalar>& p, const std::string& prefix, const ModelConfig& config,
                                 const DecoderState<Scalar>& state) {
  DecoderState<Scalar> out = state;
  out.local = attend_block(p, prefix + ".local_from_global", config.heads, state.local, state.global, state.global);
  std::vector<Var<Scalar>> globals;
  for (Eigen::Index i = 0; i < state.paragraphs; ++i) {
    Var<Scalar> li = out.local_of(i);
    globals.push_back(attend_block(p, prefix + ".global_from_local", config.heads,
                                   ad::slice_rows(state.global, i, 1), li, li));
  }
  out.global = ad::concat_rows(globals);
  return out;
}

template <typename Scalar>
struct LayerOutput {
  DecoderState<Scalar> state;
  Var<Scalar> attention;  // N x T
};

template <typename Scalar>
LayerOutput<Scalar> decode_layer(Bindings<Scalar>& p, const std::string& prefix, const ModelConfig& config,
                                 const DecoderState<Scalar>& state, Var<Scalar> video,
                                 const Matrix<Scalar>& video_pos) {
  if (state.paragraphs < 1) throw std::invalid_argument("decode_layer: N == 0");
  LayerOutput<Scalar> out;
  DecoderState<Scalar> s = intra_level(p, prefix, config, state);
  s = cross_modal(p, prefix, config, s, video, video_pos, &out.attention);
  s = cross_level(p, prefix, config, s);
  s.local = ad::add(s.local, nn::feed_forward(p, prefix + ".local_ffn.ffn",
                                              nn::layer_norm(p, prefix + ".local_ffn.norm", s.local)));
  s.global = ad::add(s.global, nn::feed_forward(p, prefix + ".global_ffn.ffn",
                                                nn::layer_norm(p, prefix + ".global_ffn.norm", s.global)));
  out.state = s;
  return out;
}

/// MLP logits -> sigmoid (centre, width), width floored, then N x 2
/// normalised (start, end) clamped to [0, 1].
template <typename Scalar>
Var<Scalar> interval_head(Bindings<Scalar>& p, const std::string& prefix, Var<Scalar> features) {
  Var<Scalar> h = ad::relu(nn::linear(p, prefix + ".fc1", features));
  h = ad::relu(nn::linear(p, prefix + ".fc2", h));
  Var<Scalar> cw = ad::sigmoid(nn::linear(p, prefix + ".fc3", h));
  Var<Scalar> centre = ad::slice_cols(cw, 0, 1);
  Var<Scalar> width = ad::maximum(ad::slice_cols(cw, 1, 1),
                                  p.constant(Matrix<Scalar>::Constant(cw.rows(), 1, static_cast<Scalar>(kMinWidth))));
  Var<Scalar> half = ad::scale(width, Scalar(0.5));
  Var<Scalar> start = ad::clamp(ad::sub(centre, half), Scalar(0), Scalar(1));
  Var<Scalar> end = ad::clamp(ad::add(centre, half), Scalar(0), Scalar(1));
  return ad::concat_cols<Scalar>({start, end});
}

/// Auxiliary prediction of an intermediate layer from LN(Q_g).
template <typename Scalar>
Var<Scalar> predict_auxiliary(Bindings<Scalar>& p, const DecoderState<Scalar>& state) {
  return interval_head(p, "head.aux", nn::layer_norm(p, "head.norm", state.global));
}

/// Final prediction from [mean_E LN(Q_l[i]) | LN(Q_g[i])].
template <typename Scalar>
Var<Scalar> predict_final(Bindings<Scalar>& p, const DecoderState<Scalar>& state) {
  Var<Scalar> local = nn::layer_norm(p, "head.norm", state.local);
  std::vector<Var<Scalar>> pooled;
  for (Eigen::Index i = 0; i < state.paragraphs; ++i) {
    pooled.push_back(ad::mean_rows(ad::slice_rows(local, i * state.subparagraphs, state.subparagraphs)));
  }
  Var<Scalar> global = nn::layer_norm(p, "head.norm", state.global);
  return interval_head(p, "head.final", ad::concat_cols<Scalar>({ad::concat_rows(pooled), global}));
}

}  // namespace lgmr::decoder
