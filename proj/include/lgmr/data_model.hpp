// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain types, the LGMRFEAT binary tensor format, annotation documents and
// multi-source feature fusion.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lgmr/autodiff.hpp"
#include "lgmr/config.hpp"

namespace lgmr {

using FeatureMatrix = Matrix<float>;
using AttentionMaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A time span in seconds.
struct Interval {
  double start = 0;
  double end = 0;

  double length() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

/// A time span as fractions of the video duration.
struct NormalizedInterval {
  double start = 0;
  double end = 0;

  double length() const { return end - start; }
  bool operator==(const NormalizedInterval&) const = default;
};

struct CenterWidth {
  double center = 0;
  double width = 0;

  /// start = c - w/2, end = c + w/2, both clamped into [0, 1].
  NormalizedInterval to_interval() const;
  static CenterWidth from_interval(const NormalizedInterval& iv);
};

struct VideoFeatureSequence {
  FeatureMatrix features;  // T x D_v
  double duration = 0;     // seconds
  std::vector<int> source_dims;

  Eigen::Index length() const { return features.rows(); }
  void validate() const;
};

struct SynopsisSample {
  std::string video_id;
  VideoFeatureSequence video;
  std::vector<FeatureMatrix> paragraphs;  // N_i^L x D_text each
  std::vector<Interval> ground_truth;

  std::size_t paragraph_count() const { return paragraphs.size(); }
  void validate() const;
};

void validate_interval(const Interval& iv, double duration);

NormalizedInterval normalize_interval(const Interval& iv, double duration);
Interval denormalize_interval(const NormalizedInterval& iv, double duration);

/// Fractional time of the centre of feature bin j in a sequence of length T.
inline double bin_center(Eigen::Index j, Eigen::Index length) {
  return (static_cast<double>(j) + 0.5) / static_cast<double>(length);
}

/// m[i][j] = 1 iff the centre of bin j lies inside interval i. A row that
/// would be empty gets the single bin nearest to the interval midpoint.
AttentionMaskMatrix build_attention_mask(const std::vector<NormalizedInterval>& intervals, Eigen::Index length);

// ---------------------------------------------------------------------------
// LGMRFEAT: "LGMRFEAT" | u32 version=1 | u32 ndim | ndim x u64 dims | f32 payload
// All integers and floats little-endian, payload row-major.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

struct FeatureTensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

std::string encode_feature_tensor(const FeatureTensor& tensor);
FeatureTensor decode_feature_tensor(std::string_view bytes);

std::string save_feature_matrix(const FeatureMatrix& m);
FeatureMatrix load_feature_matrix(std::string_view bytes);

FeatureMatrix read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& m);
void write_feature_tensor_file(const std::filesystem::path& path, const FeatureTensor& tensor);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// ---------------------------------------------------------------------------
// Annotation documents.

struct ParagraphAnnotation {
  std::string tokens_path;
  Interval span;
};

struct AnnotationDocument {
  std::string video_id;
  double duration_s = 0;
  std::string motion_path;
  std::string appearance_path;
  std::string subtitle_path;
  std::vector<ParagraphAnnotation> paragraphs;
};

/// Parses and validates a UTF-8 JSON annotation. Throws SchemaError.
AnnotationDocument parse_annotation(std::string_view text);
std::string serialize_annotation(const AnnotationDocument& doc);

// ---------------------------------------------------------------------------
// Fusion.

/// Resamples rows to `target_rows` by averaging proportional bins: source row j
/// belongs to bin floor((j + 0.5) * target / source). A bin that receives no row
/// (upsampling) copies the source row under its centre.
FeatureMatrix adaptive_mean_pool(const FeatureMatrix& source, Eigen::Index target_rows);

/// Pools appearance and subtitle streams to the motion length and concatenates
/// channels as [motion | appearance | subtitle].
VideoFeatureSequence align_and_fuse(const FeatureMatrix& motion, const FeatureMatrix& appearance,
                                    const FeatureMatrix& subtitle, double duration,
                                    const FeatureLayout& layout = {});

// ---------------------------------------------------------------------------
// On-disk datasets: a directory with index.json listing annotation documents.

struct DatasetIndex {
  FeatureLayout layout;
  std::vector<std::string> annotations;  // relative to the dataset directory
};

DatasetIndex read_dataset_index(const std::filesystem::path& dir);
void write_dataset_index(const std::filesystem::path& dir, const DatasetIndex& index);

/// Loads one annotation and its feature files (paths resolved against the
/// annotation's directory).
SynopsisSample load_sample(const std::filesystem::path& annotation_path, const FeatureLayout& layout);
std::vector<SynopsisSample> load_dataset(const std::filesystem::path& dir);

}  // namespace lgmr
