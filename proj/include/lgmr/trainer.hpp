// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimisation loop, paragraph-shuffle curriculum, checkpoints, inference
// helpers and the finite-difference gradient check.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "lgmr/config.hpp"
#include "lgmr/data_model.hpp"
#include "lgmr/metrics.hpp"
#include "lgmr/model.hpp"
#include "lgmr/objective.hpp"

namespace lgmr {

/// p = max(0, 1 - epoch / t_max).
double shuffle_probability(int epoch, int t_max);

/// With probability p applies one uniform permutation jointly to paragraphs
/// and ground-truth intervals; otherwise returns the sample unchanged.
SynopsisSample augment_sample(const SynopsisSample& sample, double p, std::mt19937_64& rng);

/// Ground truth as fractions of the video duration.
std::vector<NormalizedInterval> normalized_ground_truth(const SynopsisSample& sample);

/// Forward pass plus deep-supervision loss for one sample whose video occupies
/// the first `length` rows of `video` (later rows are padding).
template <typename Scalar>
TapedLoss<Scalar> sample_loss(const LgmrModel<Scalar>& model, Bindings<Scalar>& p, const Matrix<Scalar>& video,
                              Eigen::Index length, const SynopsisSample& sample) {
  std::vector<Matrix<Scalar>> paragraphs;
  for (const auto& para : sample.paragraphs) paragraphs.push_back(para.template cast<Scalar>());
  ForwardPass<Scalar> pass = model.forward(p, video, length, paragraphs);
  return total_loss(pass.intervals, pass.attention, normalized_ground_truth(sample), model.config());
}

template <typename Scalar>
TapedLoss<Scalar> sample_loss(const LgmrModel<Scalar>& model, Bindings<Scalar>& p, const SynopsisSample& sample) {
  return sample_loss(model, p, sample.video.features.template cast<Scalar>(), sample.video.length(), sample);
}

// ---------------------------------------------------------------------------
// Batches: videos padded to the longest member; padded rows are masked.

struct PaddedBatch {
  std::vector<const SynopsisSample*> samples;
  std::vector<FeatureMatrix> videos;  // each max_T x D_v
  std::vector<Eigen::Index> lengths;
};

PaddedBatch assemble_batch(const std::vector<const SynopsisSample*>& samples);

struct BatchResult {
  LossBreakdown loss;  // mean over the batch
};

/// Mean loss over the batch; when `grads` is given, adds d(mean)/d(param).
BatchResult batch_loss(const LgmrModel<float>& model, const PaddedBatch& batch, ParameterSet<float>* grads);

// ---------------------------------------------------------------------------
// Optimiser.

struct AdamState {
  ParameterSet<float> m;
  ParameterSet<float> v;
  long long step = 0;
};

AdamState adam_init(const ParameterSet<float>& params);

/// One bias-corrected Adam update, computed in double and stored in float.
void adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state, double learning_rate,
               double beta1, double beta2, double epsilon);

/// Rescales grads so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(ParameterSet<float>& grads, double max_norm);

// ---------------------------------------------------------------------------
// Training.

struct TrainState {
  TrainConfig config;
  LgmrModel<float> model;
  AdamState adam;
  int epoch = 0;       // epochs completed
  long long step = 0;  // optimiser steps taken
};

TrainState init_train_state(const TrainConfig& config, ModelDims dims);

struct StepRecord {
  long long step = 0;
  int epoch = 0;
  LossBreakdown loss;
};

/// {"step", "epoch", "l1", "giou", "att", "total"} on one line.
std::string step_record_json(const StepRecord& record);

/// One epoch: per-epoch RNG seeded from (seed, epoch), shuffled order,
/// per-sample paragraph shuffling, one Adam step per batch. Throws
/// NumericError naming the offending batch if the loss is non-finite.
std::vector<StepRecord> train_epoch(TrainState& state, const std::vector<SynopsisSample>& data,
                                    std::ostream* log = nullptr);

struct TrainOptions {
  std::optional<std::filesystem::path> resume_from;
  std::optional<int> epochs;  // overrides config.model.epochs
  const std::vector<SynopsisSample>* eval_set = nullptr;
  std::function<void(const TrainState&, const std::vector<StepRecord>&)> on_epoch;
};

struct TrainResult {
  TrainState state;
  std::vector<StepRecord> steps;
  std::vector<std::pair<int, EvalReport>> evaluations;  // (epoch, report)
  double final_loss = 0;
};

/// Trains until the epoch budget is spent. When config.checkpoint_dir is set,
/// writes metrics.jsonl there and a checkpoint every eval_every epochs
/// (epoch_XXXX.ckpt plus latest.ckpt).
TrainResult train(const std::vector<SynopsisSample>& dataset, const TrainConfig& config, ModelDims dims,
                  const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints: "LGMRCKPT" | u32 version | u64 header length | JSON header |
// u32 tensor count | per tensor: u32 name length, name, u64 rows, u64 cols,
// f32 row-major data. Adam moments are stored as "adam.m/<name>" and
// "adam.v/<name>".

void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Inference.

struct Prediction {
  std::vector<Interval> intervals;             // seconds, final layer
  std::vector<Matrix<float>> layer_attention;  // per decoder layer, N x T
};

Prediction predict(const LgmrModel<float>& model, const SynopsisSample& sample);

EvalReport evaluate_model(const LgmrModel<float>& model, const std::vector<SynopsisSample>& samples);

// ---------------------------------------------------------------------------
// Gradient verification.

struct GradientCheckReport {
  std::map<std::string, double> group_error;  // module prefix -> worst relative error
  double worst = 0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

/// Compares tape gradients with central differences (step h, double
/// precision) for every scalar parameter. Relative error is
/// |a - n| / max(|a|, |n|, floor).
GradientCheckReport gradient_check(const ModelConfig& config, const SynopsisSample& sample, unsigned long long seed,
                                   double h = 1e-5, double floor = 1e-6);

}  // namespace lgmr
