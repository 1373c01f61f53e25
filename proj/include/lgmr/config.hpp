// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>

namespace lgmr {

/// Architectural, loss and optimisation hyperparameters.
struct ModelConfig {
  int hidden_dim = 512;
  int heads = 8;
  int ffn_dim = 2048;
  int window_len = 25;
  int subparagraph_count = 10;
  int encoder_layers = 2;
  int decoder_layers = 3;
  double lambda1 = 1.0;
  double lambda2 = 0.2;
  int t_max = 20;
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 50;
  // Test knob: disables every sinusoidal positional term.
  bool positional_encoding = true;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// Per-source channel widths of the fused video feature.
struct FeatureLayout {
  int motion_dim = 2304;
  int appearance_dim = 768;
  int subtitle_dim = 768;

  int total() const { return motion_dim + appearance_dim + subtitle_dim; }
};

struct TrainConfig {
  ModelConfig model;
  unsigned long long seed = 0;
  std::string checkpoint_dir;
  int eval_every = 1;
  std::optional<double> grad_clip;
  // Adam moments; not part of the model hyperparameters.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Flat dotted-key view of a "key = value" configuration document.
/// Lines starting with '#' and blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  /// Applies "key=value"; later assignments win.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Overlays model.*, train.* and data.* keys onto defaults; unknown keys in
  /// those namespaces throw.
  ModelConfig model_config(ModelConfig base = {}) const;
  TrainConfig train_config(TrainConfig base = {}) const;
  FeatureLayout feature_layout(FeatureLayout base = {}) const;

 private:
  std::map<std::string, std::string> values_;
};

std::string to_key_values(const TrainConfig& config);

}  // namespace lgmr
