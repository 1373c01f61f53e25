// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "lgmr/config.hpp"
#include "lgmr/decoder.hpp"
#include "lgmr/encoder.hpp"
#include "lgmr/nn.hpp"

namespace lgmr {

struct ModelDims {
  int video_dim = 0;
  int text_dim = 0;
};

template <typename Scalar>
struct ForwardPass {
  Var<Scalar> video;                   // T x D encoded video
  std::vector<Var<Scalar>> intervals;  // per decoder layer: N x 2 normalised (start, end)
  std::vector<Var<Scalar>> attention;  // per decoder layer: N x T global->video weights
  decoder::DecoderState<Scalar> state;
};

/// Encoder + decoder + heads over one named parameter set.
template <typename Scalar>
class LgmrModel {
 public:
  LgmrModel(ModelConfig config, ModelDims dims, ParameterSet<Scalar> params)
      : config_(config), dims_(dims), params_(std::move(params)) {
    config_.validate();
  }

  static LgmrModel initialize(const ModelConfig& config, ModelDims dims, unsigned long long seed) {
    config.validate();
    if (dims.video_dim < 1 || dims.text_dim < 1) throw std::invalid_argument("model: feature widths must be >= 1");
    ParameterSet<Scalar> params;
    ParameterInitializer init(seed);
    encoder::declare_parameters(params, init, config, dims.video_dim);
    decoder::declare_parameters(params, init, config, dims.text_dim);
    return LgmrModel(config, dims, std::move(params));
  }

  /// `video` has at least `length` rows (extra rows are masked padding);
  /// paragraphs are N_L x text_dim token matrices in order.
  ForwardPass<Scalar> forward(Bindings<Scalar>& p, const Matrix<Scalar>& video, Eigen::Index length,
                              const std::vector<Matrix<Scalar>>& paragraphs) const {
    if (video.cols() != dims_.video_dim) throw std::invalid_argument("model: video width mismatch");
    std::vector<Var<Scalar>> tokens;
    for (const auto& para : paragraphs) {
      if (para.cols() != dims_.text_dim) throw std::invalid_argument("model: token width mismatch");
      tokens.push_back(p.constant(para));
    }
    ForwardPass<Scalar> pass;
    pass.video = encoder::encode(p, config_, p.constant(video), length);
    const Matrix<Scalar> video_pos = config_.positional_encoding
                                         ? nn::sinusoid_table<Scalar>(0, length, config_.hidden_dim)
                                         : Matrix<Scalar>();
    pass.state = decoder::initial_state(p, config_, tokens);
    for (int l = 0; l < config_.decoder_layers; ++l) {
      auto layer = decoder::decode_layer(p, "decoder.layers." + std::to_string(l), config_, pass.state, pass.video,
                                         video_pos);
      pass.state = layer.state;
      pass.attention.push_back(layer.attention);
      pass.intervals.push_back(l + 1 == config_.decoder_layers ? decoder::predict_final(p, pass.state)
                                                               : decoder::predict_auxiliary(p, pass.state));
    }
    return pass;
  }

  template <typename Other>
  LgmrModel<Other> cast() const {
    return LgmrModel<Other>(config_, dims_, params_.template cast<Other>());
  }

  const ModelConfig& config() const { return config_; }
  const ModelDims& dims() const { return dims_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  ParameterSet<Scalar>& parameters() { return params_; }

 private:
  ModelConfig config_;
  ModelDims dims_;
  ParameterSet<Scalar> params_;
};

}  // namespace lgmr
