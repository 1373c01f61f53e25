// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lgmr/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lgmr {

double temporal_iou(const Interval& a, const Interval& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0) return (a == b) ? 1.0 : 0.0;
  return inter / uni;
}

EvalReport evaluate(const std::vector<Interval>& preds, const std::vector<Interval>& gts,
                    const std::vector<double>& thresholds) {
  if (preds.size() != gts.size()) throw std::invalid_argument("evaluate: prediction/ground-truth count mismatch");
  if (preds.empty()) throw std::invalid_argument("evaluate: empty input");
  EvalReport report;
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double iou = temporal_iou(preds[i], gts[i]);
    report.per_query_iou.push_back(iou);
    sum += iou;
  }
  const double n = static_cast<double>(preds.size());
  report.miou = sum / n;
  for (double theta : thresholds) {
    const auto hits = std::count_if(report.per_query_iou.begin(), report.per_query_iou.end(),
                                    [theta](double iou) { return iou > theta; });
    report.iou_at[theta] = static_cast<double>(hits) / n;
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["miou"] = report.miou;
  nlohmann::json at = nlohmann::json::object();
  for (const auto& [theta, value] : report.iou_at) {
    char key[32];
    std::snprintf(key, sizeof(key), "%.1f", theta);
    at[key] = value;
  }
  j["iou_at"] = at;
  j["per_query_iou"] = report.per_query_iou;
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report, const std::string& method) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s | %6s", "Method", "mIoU");
  out << line;
  for (const auto& [theta, _] : report.iou_at) {
    std::snprintf(line, sizeof(line), " | IoU@%.1f", theta);
    out << line;
  }
  out << "\n";
  std::snprintf(line, sizeof(line), "%-16s | %6.1f", method.c_str(), 100.0 * report.miou);
  out << line;
  for (const auto& [_, value] : report.iou_at) {
    std::snprintf(line, sizeof(line), " | %7.1f", 100.0 * value);
    out << line;
  }
  out << "\n";
  return out.str();
}

double flops_estimate(EncoderKind kind, long long length, const ModelConfig& config) {
  if (length < 1) throw std::invalid_argument("flops_estimate: T must be >= 1");
  const double t = static_cast<double>(length);
  const double d = config.hidden_dim;
  const double f = config.ffn_dim;
  const double m = config.window_len;
  const double k = static_cast<double>((length + config.window_len - 1) / config.window_len);
  const double dense = 4.0 * t * d * d + 2.0 * t * d * f;
  double attention = 0;
  switch (kind) {
    case EncoderKind::kVanillaFull:
      attention = 2.0 * t * t * d;
      break;
    case EncoderKind::kLocalGlobal: {
      // Padded keys are masked, so the tail window costs only its real rows.
      const double tail = static_cast<double>(length) - (k - 1) * m;
      attention = 2.0 * ((k - 1) * m * m + tail * tail) * d + 2.0 * t * d + 2.0 * k * k * d;
      break;
    }
  }
  return static_cast<double>(config.encoder_layers) * (dense + attention);
}

}  // namespace lgmr
