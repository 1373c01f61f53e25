// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lgmr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <Eigen/QR>

#include "lgmr/errors.hpp"
#include "lgmr/metrics.hpp"

namespace lgmr {

namespace {

constexpr int kMaxSignatureDim = 16;
constexpr double kBackgroundScale = 0.5;

std::mt19937_64 seeded(unsigned long long seed, unsigned long long stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Matrix<double> gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<double> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

// First `cols` columns of the Q factor of a Gaussian rows x cols matrix.
Matrix<double> orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = gaussian(rows, cols, 1.0, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  return q;
}

// Removes the component of every row of `x` lying in span(lift).
Matrix<double> project_out(const Matrix<double>& x, const Matrix<double>& lift) {
  return x - (x * lift) * lift.transpose();
}

struct Placement {
  std::vector<int> start;
  std::vector<int> end;  // exclusive
};

Placement place_intervals(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const int avail = spec.T - (spec.N - 1) * spec.min_gap;
  const double per = static_cast<double>(avail) / spec.N;
  const int lo = std::max(1, static_cast<int>(std::floor(spec.min_length_fraction * per)));
  const int hi = std::max(lo, static_cast<int>(std::floor(spec.max_length_fraction * per)));
  std::uniform_int_distribution<int> length_dist(lo, hi);
  std::vector<int> lengths(spec.N);
  int used = 0;
  for (int& len : lengths) {
    len = length_dist(rng);
    used += len;
  }
  // Spread the leftover steps over the N + 1 gaps one unit at a time.
  std::vector<int> gaps(spec.N + 1, 0);
  std::uniform_int_distribution<int> gap_dist(0, spec.N);
  for (int s = used; s < avail; ++s) ++gaps[gap_dist(rng)];

  Placement out;
  int cursor = gaps[0];
  for (int i = 0; i < spec.N; ++i) {
    out.start.push_back(cursor);
    out.end.push_back(cursor + lengths[i]);
    cursor += lengths[i] + spec.min_gap + gaps[i + 1];
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (T < 1 || N < 1) throw std::invalid_argument("synthetic: T and N must be >= 1");
  if (D_v < 1 || D_text < 1 || tokens_per_paragraph < 1) {
    throw std::invalid_argument("synthetic: dimensions and token count must be >= 1");
  }
  if (!(noise_sigma >= 0)) throw std::invalid_argument("synthetic: noise_sigma must be >= 0");
  if (min_gap < 0) throw std::invalid_argument("synthetic: min_gap must be >= 0");
  if (!(seconds_per_step > 0)) throw std::invalid_argument("synthetic: seconds_per_step must be > 0");
  if (!(min_length_fraction > 0) || !(max_length_fraction <= 1) || min_length_fraction > max_length_fraction) {
    throw std::invalid_argument("synthetic: need 0 < min_length_fraction <= max_length_fraction <= 1");
  }
  if (static_cast<long long>(N) + static_cast<long long>(N - 1) * min_gap > T) {
    throw SchemaError("synthetic: cannot fit " + std::to_string(N) + " disjoint intervals into T=" +
                      std::to_string(T) + " with min_gap=" + std::to_string(min_gap));
  }
}

int SyntheticSpec::signature_dim() const { return std::min({kMaxSignatureDim, D_v, D_text}); }

SyntheticWorld SyntheticWorld::create(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = seeded(spec.world_seed, 0x776f726cULL);
  SyntheticWorld world;
  world.video_lift = orthonormal_columns(spec.D_v, spec.signature_dim(), rng);
  world.text_lift = orthonormal_columns(spec.D_text, spec.signature_dim(), rng);
  world.background = project_out(gaussian(1, spec.D_v, kBackgroundScale, rng), world.video_lift);
  return world;
}

SynopsisSample generate_sample(const SyntheticSpec& spec) {
  const SyntheticWorld world = SyntheticWorld::create(spec);
  const int s_dim = spec.signature_dim();
  auto rng = seeded(spec.seed, 0x73616d70ULL);

  // Signatures: orthonormal while N <= S, scaled so entries are O(1).
  Matrix<double> signatures(spec.N, s_dim);
  const int orthogonal = std::min(spec.N, s_dim);
  signatures.topRows(orthogonal) = orthonormal_columns(s_dim, orthogonal, rng).transpose();
  for (int i = orthogonal; i < spec.N; ++i) {
    Matrix<double> g = gaussian(1, s_dim, 1.0, rng);
    signatures.row(i) = g / g.norm();
  }
  signatures *= std::sqrt(static_cast<double>(s_dim));

  const Placement placement = place_intervals(spec, rng);
  Matrix<double> video = world.background.replicate(spec.T, 1);
  for (int i = 0; i < spec.N; ++i) {
    const Matrix<double> lifted = signatures.row(i) * world.video_lift.transpose();
    for (int r = placement.start[i]; r < placement.end[i]; ++r) video.row(r) += lifted;
  }
  video += gaussian(spec.T, spec.D_v, spec.noise_sigma, rng);

  SynopsisSample sample;
  sample.video_id = "syn_seed" + std::to_string(spec.seed);
  sample.video.features = video.cast<float>();
  sample.video.duration = spec.T * spec.seconds_per_step;
  const FeatureLayout layout = spec.D_v >= 3 ? synthetic_layout(spec.D_v) : FeatureLayout{spec.D_v, 0, 0};
  sample.video.source_dims = {layout.motion_dim, layout.appearance_dim, layout.subtitle_dim};

  for (int i = 0; i < spec.N; ++i) {
    const Matrix<double> lifted = signatures.row(i) * world.text_lift.transpose();
    Matrix<double> tokens = lifted.replicate(spec.tokens_per_paragraph, 1);
    tokens += project_out(gaussian(spec.tokens_per_paragraph, spec.D_text, kBackgroundScale, rng), world.text_lift);
    tokens += gaussian(spec.tokens_per_paragraph, spec.D_text, spec.noise_sigma, rng);
    sample.paragraphs.push_back(tokens.cast<float>());
    sample.ground_truth.push_back(
        {placement.start[i] * spec.seconds_per_step, placement.end[i] * spec.seconds_per_step});
  }
  sample.validate();
  return sample;
}

std::vector<SynopsisSample> generate_suite(const SyntheticSpec& spec, int count) {
  if (count < 1) throw std::invalid_argument("generate_suite: count must be >= 1");
  std::vector<SynopsisSample> out;
  for (int k = 0; k < count; ++k) {
    SyntheticSpec one = spec;
    one.seed = seeded(spec.seed, static_cast<unsigned long long>(k))();
    SynopsisSample sample = generate_sample(one);
    char id[32];
    std::snprintf(id, sizeof(id), "syn_%05d", k);
    sample.video_id = id;
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<Interval> nearest_signature_match(const SynopsisSample& sample, const SyntheticWorld& world) {
  const Matrix<double> video = sample.video.features.cast<double>();
  if (video.cols() != world.video_lift.rows()) throw std::invalid_argument("matcher: video width mismatch");
  const Matrix<double> video_sig = video * world.video_lift;  // T x S
  const Eigen::Index length = video.rows();
  const double step = sample.video.duration / static_cast<double>(length);
  std::vector<Interval> out;
  for (const auto& tokens : sample.paragraphs) {
    const Matrix<double> mean = tokens.cast<double>().colwise().mean();
    if (mean.cols() != world.text_lift.rows()) throw std::invalid_argument("matcher: token width mismatch");
    const Eigen::VectorXd score = video_sig * (mean * world.text_lift).transpose();
    Eigen::Index best = 0;
    const double peak = score.maxCoeff(&best);
    const double threshold = 0.5 * peak;
    Eigen::Index first = best;
    Eigen::Index last = best;
    while (first > 0 && score(first - 1) >= threshold) --first;
    while (last + 1 < length && score(last + 1) >= threshold) ++last;
    out.push_back({static_cast<double>(first) * step, static_cast<double>(last + 1) * step});
  }
  return out;
}

Interval random_interval(double duration, std::mt19937_64& rng) {
  if (!(duration > 0)) throw std::invalid_argument("random_interval: duration must be > 0");
  std::uniform_real_distribution<double> dist(0.0, duration);
  const double a = dist(rng);
  const double b = dist(rng);
  return {std::min(a, b), std::max(a, b)};
}

double estimate_random_baseline_miou(const std::vector<SynopsisSample>& samples, int trials, std::mt19937_64& rng) {
  if (samples.empty()) throw std::invalid_argument("random baseline: empty sample list");
  if (trials < 1) throw std::invalid_argument("random baseline: trials must be >= 1");
  double sum = 0;
  long long count = 0;
  for (int t = 0; t < trials; ++t) {
    for (const auto& sample : samples) {
      for (const auto& gt : sample.ground_truth) {
        sum += temporal_iou(random_interval(sample.video.duration, rng), gt);
        ++count;
      }
    }
  }
  return sum / static_cast<double>(count);
}

FeatureLayout synthetic_layout(int video_dim) {
  if (video_dim < 3) throw std::invalid_argument("synthetic_layout: need at least 3 channels");
  const int quarter = std::max(1, video_dim / 4);
  return {video_dim - 2 * quarter, quarter, quarter};
}

void write_dataset(const std::filesystem::path& dir, const std::vector<SynopsisSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("write_dataset: no samples");
  const auto width = samples.front().video.features.cols();
  const FeatureLayout layout = synthetic_layout(static_cast<int>(width));
  DatasetIndex index{layout, {}};
  for (const auto& sample : samples) {
    if (sample.video.features.cols() != width) throw std::invalid_argument("write_dataset: mixed video widths");
    const std::filesystem::path sub = dir / sample.video_id;
    std::filesystem::create_directories(sub);
    const FeatureMatrix& f = sample.video.features;
    write_feature_file(sub / "motion.lgmrfeat", f.leftCols(layout.motion_dim));
    const FeatureMatrix appearance = f.middleCols(layout.motion_dim, layout.appearance_dim);
    FeatureMatrix doubled(2 * appearance.rows(), appearance.cols());
    for (Eigen::Index r = 0; r < appearance.rows(); ++r) {
      doubled.row(2 * r) = appearance.row(r);
      doubled.row(2 * r + 1) = appearance.row(r);
    }
    write_feature_file(sub / "appearance.lgmrfeat", doubled);
    write_feature_file(sub / "subtitle.lgmrfeat", f.rightCols(layout.subtitle_dim));

    AnnotationDocument doc;
    doc.video_id = sample.video_id;
    doc.duration_s = sample.video.duration;
    doc.motion_path = "motion.lgmrfeat";
    doc.appearance_path = "appearance.lgmrfeat";
    doc.subtitle_path = "subtitle.lgmrfeat";
    for (std::size_t i = 0; i < sample.paragraphs.size(); ++i) {
      const std::string name = "paragraph_" + std::to_string(i) + ".lgmrfeat";
      write_feature_file(sub / name, sample.paragraphs[i]);
      doc.paragraphs.push_back({name, sample.ground_truth[i]});
    }
    write_file(sub / "annotation.json", serialize_annotation(doc));
    index.annotations.push_back(sample.video_id + "/annotation.json");
  }
  write_dataset_index(dir, index);
}

}  // namespace lgmr
