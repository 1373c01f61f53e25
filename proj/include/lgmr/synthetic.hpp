// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Planted-correspondence samples and the random-interval baseline.
//
// A "world" fixes two column-orthonormal lifts A_v (D_v x S) and A_t
// (D_text x S). Each sample draws N mutually orthogonal signatures s_i in R^S.
// Video row r is  b + A_v s_i + noise  when r lies inside interval i, and
// b + noise otherwise, where b is a world-wide background orthogonal to A_v.
// Every token of paragraph i is  A_t s_i + f + noise  with filler f orthogonal
// to A_t. Grounding therefore requires matching the two lifts across
// modalities; position alone carries no information.

#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "lgmr/config.hpp"
#include "lgmr/data_model.hpp"

namespace lgmr {

struct SyntheticSpec {
  unsigned long long seed = 0;
  unsigned long long world_seed = 0;  // shared by every sample of a suite
  int T = 120;
  int N = 4;
  int D_v = 64;
  int D_text = 32;
  int tokens_per_paragraph = 8;
  double noise_sigma = 0.1;
  int min_gap = 1;
  double seconds_per_step = 1.0;
  // Interval lengths are drawn uniformly from [min, max] * available / N.
  double min_length_fraction = 0.3;
  double max_length_fraction = 0.9;

  /// Throws std::invalid_argument on bad knobs and SchemaError when N
  /// disjoint unit intervals separated by min_gap cannot fit into T.
  void validate() const;
  int signature_dim() const;
};

struct SyntheticWorld {
  Matrix<double> video_lift;  // D_v x S, orthonormal columns
  Matrix<double> text_lift;   // D_text x S, orthonormal columns
  Matrix<double> background;  // 1 x D_v, orthogonal to video_lift

  static SyntheticWorld create(const SyntheticSpec& spec);
};

/// One planted sample, deterministic in (spec.seed, spec.world_seed).
SynopsisSample generate_sample(const SyntheticSpec& spec);

/// `count` samples with per-sample seeds derived from spec.seed; ids are
/// "syn_00000", "syn_00001", ...
std::vector<SynopsisSample> generate_suite(const SyntheticSpec& spec, int count);

/// Non-gradient oracle: scores each video row by the dot product, in signature
/// space, between the paragraph's mean token and the row; the predicted span is
/// the run of rows scoring at least half the maximum that contains the maximum.
std::vector<Interval> nearest_signature_match(const SynopsisSample& sample, const SyntheticWorld& world);

/// (min, max) of two iid uniforms on [0, duration].
Interval random_interval(double duration, std::mt19937_64& rng);

/// Monte-Carlo mean temporal IoU of random_interval against every ground-truth
/// interval of every sample, repeated `trials` times.
double estimate_random_baseline_miou(const std::vector<SynopsisSample>& samples, int trials, std::mt19937_64& rng);

/// Channel split used when writing synthetic features to disk.
FeatureLayout synthetic_layout(int video_dim);

/// Writes index.json plus one directory per sample holding annotation.json,
/// motion/appearance/subtitle LGMRFEAT files (appearance at twice the frame
/// rate, duplicated rows) and one token file per paragraph.
void write_dataset(const std::filesystem::path& dir, const std::vector<SynopsisSample>& samples);

}  // namespace lgmr
