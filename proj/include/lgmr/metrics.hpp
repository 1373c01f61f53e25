// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "lgmr/config.hpp"
#include "lgmr/data_model.hpp"

namespace lgmr {

/// |a ∩ b| / |a ∪ b|. Zero-length union: 1 if the intervals coincide, else 0.
double temporal_iou(const Interval& a, const Interval& b);

inline const std::vector<double> kDefaultIouThresholds = {0.3, 0.5, 0.7};

struct EvalReport {
  double miou = 0;
  std::map<double, double> iou_at;  // fraction of queries with IoU strictly above the threshold
  std::vector<double> per_query_iou;
};

EvalReport evaluate(const std::vector<Interval>& preds, const std::vector<Interval>& gts,
                    const std::vector<double>& thresholds = kDefaultIouThresholds);

std::string report_to_json(const EvalReport& report);

/// One header line and one row: method | mIoU | IoU@0.3 | IoU@0.5 | IoU@0.7, in percent.
std::string report_to_table(const EvalReport& report, const std::string& method);

enum class EncoderKind { kLocalGlobal, kVanillaFull };

/// Multiply-accumulate count of the whole encoder stack (config.encoder_layers
/// layers) on a length-T sequence. Per layer:
///   projections 4*T*D^2 + FFN 2*T*D*F, plus attention terms
///   vanilla:      2*T^2*D
///   local-global: 2*sum_k(m_k^2)*D + 2*T*D + 2*K^2*D,  K = ceil(T / M),
///                 m_k the real rows of window k (all M except possibly the last);
///                 equals 2*K*M^2*D + 2*K*M*D + 2*K^2*D when M divides T
/// Softmax and layer norm are not counted.
double flops_estimate(EncoderKind kind, long long length, const ModelConfig& config);

}  // namespace lgmr
