// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "lgmr/data_model.hpp"
#include "lgmr/errors.hpp"
#include "lgmr/synthetic.hpp"
#include "test_support.hpp"

using namespace lgmr;

namespace {

std::string annotation_json(double duration, const std::string& spans) {
  return R"({"video_id": "v1", "duration_s": )" + std::to_string(duration) +
         R"(, "features": {"motion": "m.f", "appearance": "a.f", "subtitle": "s.f"}, "paragraphs": [)" + spans + "]}";
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lgmr_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("annotation parsing keeps paragraphs in order") {
  const auto doc = parse_annotation(annotation_json(
      100, R"({"tokens_path": "p0.f", "start_s": 0, "end_s": 40}, {"tokens_path": "p1.f", "start_s": 50, "end_s": 90})"));
  CHECK(doc.video_id == "v1");
  CHECK(doc.duration_s == 100);
  REQUIRE(doc.paragraphs.size() == 2);
  CHECK(doc.paragraphs[0].span == Interval{0, 40});
  CHECK(doc.paragraphs[1].span == Interval{50, 90});
  CHECK(doc.paragraphs[1].tokens_path == "p1.f");
  CHECK(doc.motion_path == "m.f");
}

TEST_CASE("annotation errors") {
  auto message = [](const std::string& text) {
    try {
      parse_annotation(text);
    } catch (const SchemaError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(annotation_json(100, R"({"tokens_path": "p", "start_s": 90, "end_s": 50})")).find("start > end") !=
        std::string::npos);
  CHECK(message(annotation_json(100, R"({"tokens_path": "p", "start_s": 50, "end_s": 120})"))
            .find("interval exceeds duration") != std::string::npos);
  CHECK(message(annotation_json(100, "")).find("N == 0") != std::string::npos);
  CHECK_THROWS_AS(parse_annotation("{not json"), SchemaError);
  CHECK_THROWS_AS(parse_annotation(R"({"video_id": "x"})"), SchemaError);
}

TEST_CASE("annotation parse, serialise, parse is a fixed point") {
  const auto first = parse_annotation(annotation_json(
      123.4, R"({"tokens_path": "p0.f", "start_s": 13.7, "end_s": 88.2}, {"tokens_path": "p1.f", "start_s": 90, "end_s": 123.4})"));
  const std::string text = serialize_annotation(first);
  const auto second = parse_annotation(text);
  CHECK(serialize_annotation(second) == text);
  CHECK(second.paragraphs[0].span == first.paragraphs[0].span);
  CHECK(second.duration_s == first.duration_s);
}

TEST_CASE("feature matrix round trips") {
  const FeatureMatrix zeros = FeatureMatrix::Zero(3, 4);
  CHECK(load_feature_matrix(save_feature_matrix(zeros)) == zeros);

  std::mt19937_64 rng(11);
  const FeatureMatrix big = lgmr::testing::random_matrix<float>(25, 3840, rng);
  const std::string bytes = save_feature_matrix(big);
  CHECK(bytes.size() == 8 + 4 + 4 + 2 * 8 + 25 * 3840 * 4);
  const FeatureMatrix back = load_feature_matrix(bytes);
  CHECK(save_feature_matrix(back) == bytes);
  CHECK(std::memcmp(back.data(), big.data(), sizeof(float) * static_cast<std::size_t>(big.size())) == 0);
}

TEST_CASE("feature file header layout") {
  FeatureMatrix m(1, 2);
  m << 1.5f, -2.0f;
  const std::string bytes = save_feature_matrix(m);
  CHECK(bytes.substr(0, 8) == "LGMRFEAT");
  std::uint32_t version = 0, ndim = 0;
  std::uint64_t rows = 0, cols = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&ndim, bytes.data() + 12, 4);
  std::memcpy(&rows, bytes.data() + 16, 8);
  std::memcpy(&cols, bytes.data() + 24, 8);
  CHECK(version == 1);
  CHECK(ndim == 2);
  CHECK(rows == 1);
  CHECK(cols == 2);
  float first = 0;
  std::memcpy(&first, bytes.data() + 32, 4);
  CHECK(first == 1.5f);
}

TEST_CASE("malformed feature files are rejected") {
  const std::string good = save_feature_matrix(FeatureMatrix::Zero(10, 8));
  // Header claims 10 x 8 but only 9 x 8 floats follow.
  CHECK_THROWS_AS(load_feature_matrix(good.substr(0, good.size() - 8 * 4)), SchemaError);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(load_feature_matrix(bad_magic), SchemaError);
  std::string bad_version = good;
  bad_version[8] = 2;
  CHECK_THROWS_AS(load_feature_matrix(bad_version), SchemaError);
  CHECK_THROWS_AS(load_feature_matrix(good.substr(0, 12)), SchemaError);
  FeatureMatrix nan = FeatureMatrix::Zero(2, 2);
  nan(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(load_feature_matrix(save_feature_matrix(nan)), NumericError);
  CHECK_THROWS_AS(read_feature_file("/nonexistent/x.lgmrfeat"), IoError);
}

TEST_CASE("interval normalisation") {
  CHECK(normalize_interval({0, 100}, 100) == NormalizedInterval{0, 1});
  CHECK(normalize_interval({25, 75}, 100) == NormalizedInterval{0.25, 0.75});
  const Interval iv{13.7, 88.2};
  const Interval back = denormalize_interval(normalize_interval(iv, 123.4), 123.4);
  CHECK(std::abs(back.start - iv.start) < 1e-9);
  CHECK(std::abs(back.end - iv.end) < 1e-9);
  CHECK_THROWS_AS(normalize_interval(iv, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(denormalize_interval({0, 1}, -1.0), std::invalid_argument);
}

TEST_CASE("centre and width conversions clamp to the unit range") {
  const auto cw = CenterWidth::from_interval({0.2, 0.6});
  CHECK(cw.center == doctest::Approx(0.4));
  CHECK(cw.width == doctest::Approx(0.4));
  const auto iv = CenterWidth{0.9, 0.4}.to_interval();
  CHECK(iv.start == doctest::Approx(0.7));
  CHECK(iv.end == 1.0);
}

TEST_CASE("attention mask uses bin centres") {
  const auto mask = build_attention_mask({{0.0, 0.5}, {0.26, 0.74}, {0.41, 0.43}}, 4);
  // Centres: 0.125, 0.375, 0.625, 0.875.
  CHECK(mask.row(0).cast<int>().sum() == 2);
  CHECK(mask(0, 0) == 1);
  CHECK(mask(0, 1) == 1);
  CHECK(mask(1, 1) == 1);
  CHECK(mask(1, 2) == 1);
  CHECK(mask(1, 0) == 0);
  // No centre inside: nearest bin to the midpoint 0.42.
  CHECK(mask.row(2).cast<int>().sum() == 1);
  CHECK(mask(2, 1) == 1);
}

TEST_CASE("align and fuse") {
  const FeatureLayout layout{2, 3, 1};
  std::mt19937_64 rng(3);

  SUBCASE("equal lengths concatenate") {
    const FeatureMatrix m = lgmr::testing::random_matrix<float>(8, 2, rng);
    const FeatureMatrix a = lgmr::testing::random_matrix<float>(8, 3, rng);
    const FeatureMatrix s = lgmr::testing::random_matrix<float>(8, 1, rng);
    const auto seq = align_and_fuse(m, a, s, 10.0, layout);
    CHECK(seq.length() == 8);
    CHECK(seq.features.leftCols(2) == m);
    CHECK(seq.features.middleCols(2, 3) == a);
    CHECK(seq.features.rightCols(1) == s);
    CHECK(seq.source_dims == std::vector<int>{2, 3, 1});
  }

  SUBCASE("constant bins pool to their value") {
    FeatureMatrix a(4, 3);
    a << 1, 2, 3, 1, 2, 3, 7, 8, 9, 7, 8, 9;
    FeatureMatrix expected(2, 3);
    expected << 1, 2, 3, 7, 8, 9;
    const auto seq = align_and_fuse(FeatureMatrix::Zero(2, 2), a, FeatureMatrix::Zero(2, 1), 1.0, layout);
    CHECK(seq.features.middleCols(2, 3) == expected);
  }

  SUBCASE("five basis rows into three bins") {
    const FeatureLayout wide{1, 5, 1};
    const FeatureMatrix e = FeatureMatrix::Identity(5, 5);
    const auto seq = align_and_fuse(FeatureMatrix::Zero(3, 1), e, FeatureMatrix::Zero(3, 1), 1.0, wide);
    FeatureMatrix expected = FeatureMatrix::Zero(3, 5);
    expected(0, 0) = expected(0, 1) = 0.5f;
    expected(1, 2) = 1.0f;
    expected(2, 3) = expected(2, 4) = 0.5f;
    CHECK(seq.features.middleCols(1, 5).isApprox(expected, 1e-7f));
  }

  SUBCASE("pooling preserves the stream mean when lengths divide") {
    const FeatureMatrix a = lgmr::testing::random_matrix<float>(12, 3, rng);
    const auto pooled = adaptive_mean_pool(a, 4);
    CHECK(std::abs(pooled.cast<double>().mean() - a.cast<double>().mean()) < 1e-5);
  }

  SUBCASE("upsampling copies the covering row") {
    FeatureMatrix a(2, 1);
    a << 1, 2;
    const auto up = adaptive_mean_pool(a, 4);
    CHECK(up(0, 0) == 1);
    CHECK(up(1, 0) == 1);
    CHECK(up(2, 0) == 2);
    CHECK(up(3, 0) == 2);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(align_and_fuse(FeatureMatrix(0, 2), FeatureMatrix::Zero(1, 3), FeatureMatrix::Zero(1, 1), 1, layout),
                    SchemaError);
    CHECK_THROWS_AS(align_and_fuse(FeatureMatrix::Zero(2, 2), FeatureMatrix::Zero(2, 4), FeatureMatrix::Zero(2, 1), 1, layout),
                    SchemaError);
    FeatureMatrix inf = FeatureMatrix::Zero(2, 2);
    inf(0, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(align_and_fuse(inf, FeatureMatrix::Zero(2, 3), FeatureMatrix::Zero(2, 1), 1, layout), NumericError);
  }
}

TEST_CASE("dataset directory round trip") {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.T = 16;
  spec.N = 2;
  spec.D_v = 12;
  spec.D_text = 6;
  spec.tokens_per_paragraph = 3;
  const auto samples = generate_suite(spec, 3);
  const auto dir = scratch_dir("dataset");
  write_dataset(dir, samples);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    CHECK(loaded[k].video_id == samples[k].video_id);
    CHECK(loaded[k].video.features == samples[k].video.features);
    CHECK(loaded[k].video.duration == samples[k].video.duration);
    CHECK(loaded[k].ground_truth == samples[k].ground_truth);
    REQUIRE(loaded[k].paragraphs.size() == samples[k].paragraphs.size());
    for (std::size_t i = 0; i < samples[k].paragraphs.size(); ++i) {
      CHECK(loaded[k].paragraphs[i] == samples[k].paragraphs[i]);
    }
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), IoError);
}
