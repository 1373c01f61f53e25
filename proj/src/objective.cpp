// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lgmr/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lgmr {

double giou_1d(const NormalizedInterval& pred, const NormalizedInterval& gt) {
  const double inter = std::max(0.0, std::min(pred.end, gt.end) - std::max(pred.start, gt.start));
  const double uni = pred.length() + gt.length() - inter;
  const double hull = std::max(pred.end, gt.end) - std::min(pred.start, gt.start);
  if (hull <= 0) return 1.0;  // both degenerate and identical
  const double iou = uni > 0 ? inter / uni : 0.0;
  return iou - (hull - uni) / hull;
}

double localization_loss(const std::vector<NormalizedInterval>& preds, const std::vector<NormalizedInterval>& gts,
                         double lambda1) {
  if (preds.size() != gts.size()) throw std::invalid_argument("localization_loss: length mismatch");
  if (preds.empty()) throw std::invalid_argument("localization_loss: empty input");
  const double l1_weight = lambda1 > 0 ? 1.0 / lambda1 : 1.0;
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double l1 = std::abs(preds[i].start - gts[i].start) + std::abs(preds[i].end - gts[i].end);
    sum += l1_weight * l1 + (1.0 - giou_1d(preds[i], gts[i]));
  }
  return sum / static_cast<double>(preds.size());
}

double attention_loss(const Matrix<double>& attention, const AttentionMaskMatrix& mask) {
  if (attention.rows() != mask.rows() || attention.cols() != mask.cols()) {
    throw std::invalid_argument("attention_loss: shape mismatch");
  }
  if (attention.rows() == 0) throw std::invalid_argument("attention_loss: empty input");
  double sum = 0;
  for (Eigen::Index i = 0; i < attention.rows(); ++i) {
    double inside = 0;
    int hits = 0;
    for (Eigen::Index j = 0; j < attention.cols(); ++j) {
      if (mask(i, j)) {
        inside += attention(i, j);
        ++hits;
      }
    }
    if (hits == 0) throw std::invalid_argument("attention_loss: mask row is all zero");
    sum += std::log(std::max(inside, kAttentionFloor));
  }
  return -sum / static_cast<double>(attention.rows());
}

LossBreakdown total_loss(const std::vector<std::vector<NormalizedInterval>>& layer_preds,
                         const std::vector<Matrix<double>>& layer_attention,
                         const std::vector<NormalizedInterval>& gts, const ModelConfig& config) {
  if (layer_preds.empty() || layer_preds.size() != layer_attention.size()) {
    throw std::invalid_argument("total_loss: need matching per-layer predictions and attention");
  }
  LossBreakdown out;
  for (std::size_t l = 0; l < layer_preds.size(); ++l) {
    const auto& preds = layer_preds[l];
    const double loc = localization_loss(preds, gts, config.lambda1);
    const double att = attention_loss(layer_attention[l], build_attention_mask(gts, layer_attention[l].cols()));
    double l1 = 0;
    double giou = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      l1 += std::abs(preds[i].start - gts[i].start) + std::abs(preds[i].end - gts[i].end);
      giou += 1.0 - giou_1d(preds[i], gts[i]);
    }
    out.l1 += l1 / static_cast<double>(preds.size());
    out.giou += giou / static_cast<double>(preds.size());
    out.loc += loc;
    out.att += att;
    out.per_layer.emplace_back(loc, att);
  }
  const double layers = static_cast<double>(layer_preds.size());
  out.l1 /= layers;
  out.giou /= layers;
  out.loc /= layers;
  out.att /= layers;
  out.total = (config.lambda1 > 0 ? config.lambda1 * out.loc : 0.0) + config.lambda2 * out.att;
  return out;
}

std::vector<NormalizedInterval> intervals_from_matrix(const Matrix<double>& rows) {
  if (rows.cols() != 2) throw std::invalid_argument("intervals_from_matrix: expected N x 2");
  std::vector<NormalizedInterval> out;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.push_back({rows(i, 0), rows(i, 1)});
  return out;
}

}  // namespace lgmr
