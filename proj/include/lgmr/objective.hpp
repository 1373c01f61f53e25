// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objective:
//
//   L_loc = 1/N sum_i [ (1/lambda1) L1(pred_i, gt_i) + (1 - GIoU(pred_i, gt_i)) ]
//   L_att = -1/N sum_i log( sum_j m_ij a_ij )
//   L     = lambda1 * mean_layers(L_loc) + lambda2 * mean_layers(L_att)
//
// L1 is taken over normalised (start, end). The inner attention sum is floored
// at 1e-12 before the log. With lambda1 == 0 the localisation term is dropped
// from the total and reported with unit L1 weight.

#pragma once

#include <utility>
#include <vector>

#include "lgmr/autodiff.hpp"
#include "lgmr/config.hpp"
#include "lgmr/data_model.hpp"

namespace lgmr {

inline constexpr double kAttentionFloor = 1e-12;

struct LossBreakdown {
  double l1 = 0;    // mean per-query L1 over supervised layers
  double giou = 0;  // mean per-query (1 - GIoU) over supervised layers
  double loc = 0;   // mean L_loc over layers
  double att = 0;   // mean L_att over layers
  double total = 0;
  std::vector<std::pair<double, double>> per_layer;  // (loc, att)
};

/// 1-D generalised IoU in (-1, 1]. Two identical degenerate intervals give 1.
double giou_1d(const NormalizedInterval& pred, const NormalizedInterval& gt);

double localization_loss(const std::vector<NormalizedInterval>& preds, const std::vector<NormalizedInterval>& gts,
                         double lambda1);

/// `attention` is N x T row-stochastic; every mask row needs at least one 1.
double attention_loss(const Matrix<double>& attention, const AttentionMaskMatrix& mask);

LossBreakdown total_loss(const std::vector<std::vector<NormalizedInterval>>& layer_preds,
                         const std::vector<Matrix<double>>& layer_attention,
                         const std::vector<NormalizedInterval>& gts, const ModelConfig& config);

std::vector<NormalizedInterval> intervals_from_matrix(const Matrix<double>& rows);

// ---------------------------------------------------------------------------
// Taped versions used for training.

template <typename Scalar>
Matrix<Scalar> interval_matrix(const std::vector<NormalizedInterval>& ivs) {
  Matrix<Scalar> m(static_cast<Eigen::Index>(ivs.size()), 2);
  for (std::size_t i = 0; i < ivs.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(ivs[i].start);
    m(static_cast<Eigen::Index>(i), 1) = static_cast<Scalar>(ivs[i].end);
  }
  return m;
}

template <typename Scalar>
struct LocalizationTerms {
  Var<Scalar> l1;    // N x 1
  Var<Scalar> giou;  // N x 1, the GIoU value (not the loss)
};

template <typename Scalar>
LocalizationTerms<Scalar> localization_terms(Var<Scalar> pred, const Matrix<Scalar>& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != 2 || gt.cols() != 2) {
    throw std::invalid_argument("localization loss: prediction/target shape mismatch");
  }
  Tape<Scalar>& t = *pred.tape;
  Var<Scalar> target = t.constant(gt);
  Var<Scalar> ps = ad::slice_cols(pred, 0, 1);
  Var<Scalar> pe = ad::slice_cols(pred, 1, 1);
  Var<Scalar> gs = t.constant(gt.col(0));
  Var<Scalar> ge = t.constant(gt.col(1));
  Var<Scalar> l1 = ad::sum_cols(ad::abs(ad::sub(pred, target)));
  Var<Scalar> inter = ad::relu(ad::sub(ad::minimum(pe, ge), ad::maximum(ps, gs)));
  Var<Scalar> uni = ad::sub(ad::add(ad::sub(pe, ps), ad::sub(ge, gs)), inter);
  Var<Scalar> hull = ad::sub(ad::maximum(pe, ge), ad::minimum(ps, gs));
  Var<Scalar> giou = ad::sub(ad::div(inter, uni), ad::div(ad::sub(hull, uni), hull));
  return {l1, giou};
}

template <typename Scalar>
Var<Scalar> localization_loss(const LocalizationTerms<Scalar>& terms, Scalar lambda1) {
  const Scalar l1_weight = lambda1 > 0 ? Scalar(1) / lambda1 : Scalar(1);
  Var<Scalar> ones = terms.l1.tape->constant(Matrix<Scalar>::Ones(terms.l1.rows(), 1));
  return ad::mean_all(ad::add(ad::scale(terms.l1, l1_weight), ad::sub(ones, terms.giou)));
}

/// Per-query L1 / lambda1 + (1 - GIoU), averaged -> 1 x 1.
template <typename Scalar>
Var<Scalar> localization_loss(Var<Scalar> pred, const Matrix<Scalar>& gt, Scalar lambda1) {
  return localization_loss(localization_terms(pred, gt), lambda1);
}

template <typename Scalar>
Var<Scalar> attention_loss(Var<Scalar> attention, const AttentionMaskMatrix& mask) {
  if (attention.rows() != mask.rows() || attention.cols() != mask.cols()) {
    throw std::invalid_argument("attention loss: weights/mask shape mismatch");
  }
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    if (mask.row(i).cast<int>().sum() == 0) throw std::invalid_argument("attention loss: mask row is all zero");
  }
  Tape<Scalar>& t = *attention.tape;
  Var<Scalar> inside = ad::sum_cols(ad::mul(attention, t.constant(mask.cast<Scalar>())));
  Var<Scalar> floored =
      ad::maximum(inside, t.constant(Matrix<Scalar>::Constant(mask.rows(), 1, static_cast<Scalar>(kAttentionFloor))));
  return ad::scale(ad::mean_all(ad::log(floored)), Scalar(-1));
}

template <typename Scalar>
struct TapedLoss {
  Var<Scalar> total;
  LossBreakdown breakdown;
};

/// Deep supervision over every decoder layer's predictions and attention maps.
template <typename Scalar>
TapedLoss<Scalar> total_loss(const std::vector<Var<Scalar>>& layer_intervals,
                             const std::vector<Var<Scalar>>& layer_attention,
                             const std::vector<NormalizedInterval>& gts, const ModelConfig& config) {
  if (layer_intervals.empty() || layer_intervals.size() != layer_attention.size()) {
    throw std::invalid_argument("total_loss: need matching per-layer predictions and attention");
  }
  const Matrix<Scalar> gt = interval_matrix<Scalar>(gts);
  const AttentionMaskMatrix mask = build_attention_mask(gts, layer_attention.front().cols());
  const Scalar lambda1 = static_cast<Scalar>(config.lambda1);
  const Scalar lambda2 = static_cast<Scalar>(config.lambda2);
  const Scalar layers = static_cast<Scalar>(layer_intervals.size());

  TapedLoss<Scalar> out;
  Var<Scalar> loc_sum;
  Var<Scalar> att_sum;
  for (std::size_t l = 0; l < layer_intervals.size(); ++l) {
    auto terms = localization_terms(layer_intervals[l], gt);
    Var<Scalar> loc = localization_loss(terms, lambda1);
    Var<Scalar> att = attention_loss(layer_attention[l], mask);
    loc_sum = loc_sum.valid() ? ad::add(loc_sum, loc) : loc;
    att_sum = att_sum.valid() ? ad::add(att_sum, att) : att;
    out.breakdown.l1 += static_cast<double>(terms.l1.value().mean());
    out.breakdown.giou += 1.0 - static_cast<double>(terms.giou.value().mean());
    out.breakdown.per_layer.emplace_back(static_cast<double>(loc.value()(0, 0)), static_cast<double>(att.value()(0, 0)));
  }
  Var<Scalar> loc_mean = ad::scale(loc_sum, Scalar(1) / layers);
  Var<Scalar> att_mean = ad::scale(att_sum, Scalar(1) / layers);
  if (lambda1 > 0) {
    out.total = ad::add(ad::scale(loc_mean, lambda1), ad::scale(att_mean, lambda2));
  } else {
    out.total = ad::scale(att_mean, lambda2);
  }
  out.breakdown.l1 /= static_cast<double>(layers);
  out.breakdown.giou /= static_cast<double>(layers);
  out.breakdown.loc = static_cast<double>(loc_mean.value()(0, 0));
  out.breakdown.att = static_cast<double>(att_mean.value()(0, 0));
  out.breakdown.total = static_cast<double>(out.total.value()(0, 0));
  return out;
}

}  // namespace lgmr
