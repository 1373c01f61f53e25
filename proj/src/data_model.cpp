// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lgmr/data_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lgmr/errors.hpp"

namespace lgmr {

static_assert(std::endian::native == std::endian::little, "LGMRFEAT I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'G', 'M', 'R', 'F', 'E', 'A', 'T'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& at) {
  if (bytes.size() - at < sizeof(T)) throw SchemaError("LGMRFEAT: truncated header");
  T v;
  std::memcpy(&v, bytes.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

void check_finite(const FeatureMatrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite feature values");
}

}  // namespace

NormalizedInterval CenterWidth::to_interval() const {
  return {std::clamp(center - width / 2, 0.0, 1.0), std::clamp(center + width / 2, 0.0, 1.0)};
}

CenterWidth CenterWidth::from_interval(const NormalizedInterval& iv) {
  return {(iv.start + iv.end) / 2, iv.end - iv.start};
}

void validate_interval(const Interval& iv, double duration) {
  if (!std::isfinite(iv.start) || !std::isfinite(iv.end)) throw SchemaError("interval has non-finite bounds");
  if (iv.start < 0) throw SchemaError("interval starts before 0");
  if (iv.start > iv.end) throw SchemaError("start > end");
  if (iv.end > duration) throw SchemaError("interval exceeds duration");
}

void VideoFeatureSequence::validate() const {
  if (features.rows() < 1) throw SchemaError("video features must have at least one timestep");
  if (!(duration > 0) || !std::isfinite(duration)) throw SchemaError("video duration must be positive");
  int total = 0;
  for (int d : source_dims) total += d;
  if (!source_dims.empty() && total != features.cols()) {
    throw SchemaError("video feature width does not match the sum of source widths");
  }
  check_finite(features, "video");
}

void SynopsisSample::validate() const {
  video.validate();
  if (paragraphs.empty()) throw SchemaError("sample '" + video_id + "' has no paragraphs");
  if (paragraphs.size() != ground_truth.size()) {
    throw SchemaError("sample '" + video_id + "': paragraph and interval counts differ");
  }
  for (const auto& p : paragraphs) {
    if (p.rows() < 1) throw SchemaError("sample '" + video_id + "': empty paragraph token sequence");
    if (p.cols() != paragraphs.front().cols()) throw SchemaError("sample '" + video_id + "': token width mismatch");
    check_finite(p, "paragraph tokens");
  }
  for (const auto& iv : ground_truth) validate_interval(iv, video.duration);
}

NormalizedInterval normalize_interval(const Interval& iv, double duration) {
  if (!(duration > 0)) throw std::invalid_argument("normalize_interval: duration must be positive");
  return {iv.start / duration, iv.end / duration};
}

Interval denormalize_interval(const NormalizedInterval& iv, double duration) {
  if (!(duration > 0)) throw std::invalid_argument("denormalize_interval: duration must be positive");
  return {iv.start * duration, iv.end * duration};
}

AttentionMaskMatrix build_attention_mask(const std::vector<NormalizedInterval>& intervals, Eigen::Index length) {
  if (length < 1) throw std::invalid_argument("build_attention_mask: length must be >= 1");
  AttentionMaskMatrix mask = AttentionMaskMatrix::Zero(static_cast<Eigen::Index>(intervals.size()), length);
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto& iv = intervals[i];
    bool any = false;
    for (Eigen::Index j = 0; j < length; ++j) {
      const double c = bin_center(j, length);
      if (c >= iv.start && c <= iv.end) {
        mask(static_cast<Eigen::Index>(i), j) = 1;
        any = true;
      }
    }
    if (!any) {
      const double mid = (iv.start + iv.end) / 2;
      const auto j = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(mid * static_cast<double>(length))),
                                              0, length - 1);
      mask(static_cast<Eigen::Index>(i), j) = 1;
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------

std::string encode_feature_tensor(const FeatureTensor& tensor) {
  std::uint64_t count = 1;
  for (auto d : tensor.dims) count *= d;
  if (count != tensor.data.size()) throw std::invalid_argument("LGMRFEAT: dims do not match payload size");
  std::string out;
  out.reserve(16 + 8 * tensor.dims.size() + 4 * tensor.data.size());
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFeatureFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put<std::uint64_t>(out, d);
  const auto* raw = reinterpret_cast<const char*>(tensor.data.data());
  out.append(raw, tensor.data.size() * sizeof(float));
  return out;
}

FeatureTensor decode_feature_tensor(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw SchemaError("LGMRFEAT: bad magic");
  }
  std::size_t at = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, at);
  if (version != kFeatureFormatVersion) {
    throw SchemaError("LGMRFEAT: unsupported version " + std::to_string(version));
  }
  const auto ndim = take<std::uint32_t>(bytes, at);
  FeatureTensor tensor;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    tensor.dims.push_back(take<std::uint64_t>(bytes, at));
    count *= tensor.dims.back();
  }
  const std::size_t remaining = bytes.size() - at;
  if (count > remaining / sizeof(float)) {
    throw SchemaError("LGMRFEAT: truncated payload (expected " + std::to_string(count) + " floats, found " +
                      std::to_string(remaining / sizeof(float)) + ")");
  }
  if (remaining != count * sizeof(float)) throw SchemaError("LGMRFEAT: trailing bytes after payload");
  tensor.data.resize(count);
  std::memcpy(tensor.data.data(), bytes.data() + at, count * sizeof(float));
  for (float v : tensor.data) {
    if (!std::isfinite(v)) throw NumericError("LGMRFEAT: non-finite value in payload");
  }
  return tensor;
}

std::string save_feature_matrix(const FeatureMatrix& m) {
  FeatureTensor t;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return encode_feature_tensor(t);
}

FeatureMatrix load_feature_matrix(std::string_view bytes) {
  FeatureTensor t = decode_feature_tensor(bytes);
  if (t.dims.size() != 2) throw SchemaError("LGMRFEAT: expected a 2-D matrix, got ndim=" + std::to_string(t.dims.size()));
  FeatureMatrix m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
  try {
    return load_feature_matrix(read_file(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& m) {
  write_file(path, save_feature_matrix(m));
}

void write_feature_tensor_file(const std::filesystem::path& path, const FeatureTensor& tensor) {
  write_file(path, encode_feature_tensor(tensor));
}

// ---------------------------------------------------------------------------

AnnotationDocument parse_annotation(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("annotation: malformed JSON: ") + e.what());
  }
  AnnotationDocument doc;
  try {
    doc.video_id = j.at("video_id").get<std::string>();
    doc.duration_s = j.at("duration_s").get<double>();
    const auto& f = j.at("features");
    doc.motion_path = f.at("motion").get<std::string>();
    doc.appearance_path = f.at("appearance").get<std::string>();
    doc.subtitle_path = f.at("subtitle").get<std::string>();
    for (const auto& p : j.at("paragraphs")) {
      doc.paragraphs.push_back({p.at("tokens_path").get<std::string>(),
                                {p.at("start_s").get<double>(), p.at("end_s").get<double>()}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("annotation: ") + e.what());
  }
  if (!(doc.duration_s > 0)) throw SchemaError("annotation: duration_s must be positive");
  if (doc.paragraphs.empty()) throw SchemaError("annotation: no paragraphs (N == 0)");
  for (const auto& p : doc.paragraphs) validate_interval(p.span, doc.duration_s);
  return doc;
}

std::string serialize_annotation(const AnnotationDocument& doc) {
  nlohmann::json j;
  j["video_id"] = doc.video_id;
  j["duration_s"] = doc.duration_s;
  j["features"] = {{"motion", doc.motion_path}, {"appearance", doc.appearance_path}, {"subtitle", doc.subtitle_path}};
  j["paragraphs"] = nlohmann::json::array();
  for (const auto& p : doc.paragraphs) {
    j["paragraphs"].push_back({{"tokens_path", p.tokens_path}, {"start_s", p.span.start}, {"end_s", p.span.end}});
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

FeatureMatrix adaptive_mean_pool(const FeatureMatrix& source, Eigen::Index target_rows) {
  const Eigen::Index n = source.rows();
  if (n < 1 || target_rows < 1) throw std::invalid_argument("adaptive_mean_pool: empty input or target");
  if (n == target_rows) return source;
  FeatureMatrix out = FeatureMatrix::Zero(target_rows, source.cols());
  std::vector<int> counts(static_cast<std::size_t>(target_rows), 0);
  // Accumulate in double so pooled means do not depend on bin size rounding.
  Matrix<double> acc = Matrix<double>::Zero(target_rows, source.cols());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto bin = std::min<Eigen::Index>(
        target_rows - 1, static_cast<Eigen::Index>(std::floor((static_cast<double>(j) + 0.5) *
                                                              static_cast<double>(target_rows) / static_cast<double>(n))));
    acc.row(bin) += source.row(j).cast<double>();
    ++counts[static_cast<std::size_t>(bin)];
  }
  for (Eigen::Index k = 0; k < target_rows; ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) {
      out.row(k) = (acc.row(k) / counts[static_cast<std::size_t>(k)]).cast<float>();
    } else {
      const auto j = std::min<Eigen::Index>(
          n - 1, static_cast<Eigen::Index>(std::floor((static_cast<double>(k) + 0.5) * static_cast<double>(n) /
                                                      static_cast<double>(target_rows))));
      out.row(k) = source.row(j);
    }
  }
  return out;
}

VideoFeatureSequence align_and_fuse(const FeatureMatrix& motion, const FeatureMatrix& appearance,
                                    const FeatureMatrix& subtitle, double duration, const FeatureLayout& layout) {
  if (motion.rows() == 0 || appearance.rows() == 0 || subtitle.rows() == 0) {
    throw SchemaError("align_and_fuse: every source needs at least one timestep");
  }
  auto check_width = [](const FeatureMatrix& m, int expected, const char* name) {
    if (m.cols() != expected) {
      throw SchemaError(std::string("align_and_fuse: ") + name + " width " + std::to_string(m.cols()) +
                        " does not match configured " + std::to_string(expected));
    }
  };
  check_width(motion, layout.motion_dim, "motion");
  check_width(appearance, layout.appearance_dim, "appearance");
  check_width(subtitle, layout.subtitle_dim, "subtitle");
  check_finite(motion, "motion");
  check_finite(appearance, "appearance");
  check_finite(subtitle, "subtitle");

  const Eigen::Index t = motion.rows();
  VideoFeatureSequence seq;
  seq.features.resize(t, layout.total());
  seq.features.leftCols(layout.motion_dim) = motion;
  seq.features.middleCols(layout.motion_dim, layout.appearance_dim) = adaptive_mean_pool(appearance, t);
  seq.features.rightCols(layout.subtitle_dim) = adaptive_mean_pool(subtitle, t);
  seq.duration = duration;
  seq.source_dims = {layout.motion_dim, layout.appearance_dim, layout.subtitle_dim};
  return seq;
}

// ---------------------------------------------------------------------------

DatasetIndex read_dataset_index(const std::filesystem::path& dir) {
  const std::string text = read_file(dir / "index.json");
  DatasetIndex index;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& layout = j.at("feature_layout");
    index.layout.motion_dim = layout.at("motion").get<int>();
    index.layout.appearance_dim = layout.at("appearance").get<int>();
    index.layout.subtitle_dim = layout.at("subtitle").get<int>();
    for (const auto& a : j.at("annotations")) index.annotations.push_back(a.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("index.json: " + std::string(e.what()));
  }
  if (index.annotations.empty()) throw SchemaError("index.json: dataset lists no annotations");
  return index;
}

void write_dataset_index(const std::filesystem::path& dir, const DatasetIndex& index) {
  nlohmann::json j;
  j["feature_layout"] = {{"motion", index.layout.motion_dim},
                         {"appearance", index.layout.appearance_dim},
                         {"subtitle", index.layout.subtitle_dim}};
  j["annotations"] = index.annotations;
  write_file(dir / "index.json", j.dump(2) + "\n");
}

SynopsisSample load_sample(const std::filesystem::path& annotation_path, const FeatureLayout& layout) {
  const AnnotationDocument doc = parse_annotation(read_file(annotation_path));
  const auto base = annotation_path.parent_path();
  SynopsisSample sample;
  sample.video_id = doc.video_id;
  sample.video = align_and_fuse(read_feature_file(base / doc.motion_path), read_feature_file(base / doc.appearance_path),
                                read_feature_file(base / doc.subtitle_path), doc.duration_s, layout);
  for (const auto& p : doc.paragraphs) {
    sample.paragraphs.push_back(read_feature_file(base / p.tokens_path));
    sample.ground_truth.push_back(p.span);
  }
  sample.validate();
  return sample;
}

std::vector<SynopsisSample> load_dataset(const std::filesystem::path& dir) {
  const DatasetIndex index = read_dataset_index(dir);
  std::vector<SynopsisSample> samples;
  samples.reserve(index.annotations.size());
  for (const auto& a : index.annotations) samples.push_back(load_sample(dir / a, index.layout));
  return samples;
}

}  // namespace lgmr
