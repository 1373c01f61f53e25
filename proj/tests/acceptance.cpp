// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lgmr/data_model.hpp"
#include "lgmr/encoder.hpp"
#include "lgmr/metrics.hpp"
#include "lgmr/model.hpp"
#include "lgmr/objective.hpp"
#include "lgmr/synthetic.hpp"
#include "lgmr/trainer.hpp"

using namespace lgmr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lgmr_acceptance_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// 1. Metric oracle equivalence.

struct BinCounts {
  long long inter = 0, uni = 0, hull = 0;
};

// Counts unit bins of a 10^6 grid covered by a, b, both, and their hull.
BinCounts count_bins(long long as, long long ae, long long bs, long long be) {
  BinCounts c;
  const long long lo = std::min(as, bs), hi = std::max(ae, be);
  for (long long k = lo; k < hi; ++k) {
    const bool in_a = k >= as && k < ae;
    const bool in_b = k >= bs && k < be;
    c.inter += in_a && in_b;
    c.uni += in_a || in_b;
  }
  c.hull = hi - lo;
  return c;
}

Outcome metric_oracle() {
  const auto start = Clock::now();
  const long long bins = 1'000'000;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<long long> u(0, bins);
  double worst_iou = 0, worst_giou = 0;
  int pairs = 0;
  while (pairs < 1000) {
    long long a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a == b || c == d) continue;
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    const BinCounts n = count_bins(a, b, c, d);
    const double iou = static_cast<double>(n.inter) / static_cast<double>(n.uni);
    const double giou = iou - static_cast<double>(n.hull - n.uni) / static_cast<double>(n.hull);
    const double s = static_cast<double>(bins);
    worst_iou = std::max(worst_iou, std::abs(temporal_iou({a / s * 90.0, b / s * 90.0}, {c / s * 90.0, d / s * 90.0}) - iou));
    worst_giou = std::max(worst_giou, std::abs(giou_1d({a / s, b / s}, {c / s, d / s}) - giou));
    ++pairs;
  }
  const double elapsed = seconds_since(start);
  return {worst_iou < 1e-5 && worst_giou < 1e-5 && elapsed < 10.0,
          fmt("1000 pairs, worst |IoU - oracle| %.2e, worst |GIoU - oracle| %.2e, %.2f s", worst_iou, worst_giou,
              elapsed)};
}

// ---------------------------------------------------------------------------
// 2. Hand-checked loss values.

Outcome loss_values() {
  const double loc = localization_loss({{0.0, 0.5}}, {{0.0, 1.0}}, 1.0);
  AttentionMaskMatrix mask = AttentionMaskMatrix::Zero(1, 10);
  mask.leftCols(5).setOnes();
  const double att = attention_loss(Matrix<double>::Constant(1, 10, 0.1), mask);
  const double expected = -std::log(0.5);
  return {loc == 1.0 && std::abs(att - expected) < 1e-9,
          fmt("localization %.17g (want 1), attention %.17g (want %.17g)", loc, att, expected)};
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness.

ModelConfig toy_model() {
  ModelConfig c;
  c.hidden_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.window_len = 3;
  c.subparagraph_count = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  return c;
}

Outcome gradient_correctness() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.seed = 21;
  spec.T = 7;
  spec.N = 2;
  spec.D_v = 6;
  spec.D_text = 5;
  spec.tokens_per_paragraph = 3;
  spec.min_length_fraction = 0.5;
  const auto report = gradient_check(toy_model(), generate_sample(spec), 3);
  const double elapsed = seconds_since(start);
  return {report.worst < 1e-4 && elapsed < 300.0,
          fmt("%.0f scalars, worst relative error %.3e, %.1f s", static_cast<double>(report.checked), report.worst,
              elapsed) +
              " (at " + report.worst_parameter + ")"};
}

// ---------------------------------------------------------------------------
// 4. Row-stochasticity and masking.

Matrix<double> gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double worst_row_sum_error(const Matrix<double>& w) {
  double worst = 0;
  for (Eigen::Index r = 0; r < w.rows(); ++r) worst = std::max(worst, std::abs(w.row(r).sum() - 1.0));
  return worst;
}

Outcome stochastic_rows_and_padding() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> t_dist(1, 120), m_dist(1, 30), pad_dist(1, 40);
  double worst_row = 0, worst_pad = 0;
  for (int combo = 0; combo < 50; ++combo) {
    ModelConfig c = toy_model();
    c.hidden_dim = 16;
    c.ffn_dim = 32;
    c.encoder_layers = 2;
    c.decoder_layers = 2;
    c.window_len = m_dist(rng);
    const Eigen::Index length = t_dist(rng);
    const auto model = LgmrModel<double>::initialize(c, {10, 6}, 1000 + combo);

    // Encoder layer traces: local, summary and global weights.
    Tape<double> t;
    Bindings<double> b(t, model.parameters());
    const Matrix<double> video = gaussian(length, 10, rng);
    encoder::LayerTrace<double> trace;
    const auto x = nn::linear(b, "encoder.input", t.constant(video));
    encoder::encoder_layer(b, "encoder.layers.0", c, x, length, &trace);
    for (const auto& w : trace.local_weights) worst_row = std::max(worst_row, worst_row_sum_error(w.value()));
    for (const auto& w : trace.summary_weights) worst_row = std::max(worst_row, worst_row_sum_error(w.value()));
    worst_row = std::max(worst_row, worst_row_sum_error(trace.global_weights.value()));

    // Decoder paragraph-to-video weights.
    std::vector<Matrix<double>> paragraphs{gaussian(4, 6, rng), gaussian(3, 6, rng)};
    const auto pass = model.forward(b, video, length, paragraphs);
    for (const auto& a : pass.attention) worst_row = std::max(worst_row, worst_row_sum_error(a.value()));

    // Zero-padding invariance of encode.
    Matrix<double> padded = Matrix<double>::Zero(length + pad_dist(rng), 10);
    padded.topRows(length) = video;
    const Matrix<double> plain = encoder::encode(b, c, t.constant(video), length).value();
    const Matrix<double> with_pad = encoder::encode(b, c, t.constant(padded), length).value();
    worst_pad = std::max(worst_pad, (plain - with_pad).cwiseAbs().maxCoeff());
  }
  return {worst_row < 1e-5 && worst_pad < 1e-5,
          fmt("50 (T, M) combinations, worst |row sum - 1| %.2e, worst padding deviation %.2e", worst_row, worst_pad)};
}

// ---------------------------------------------------------------------------
// 5. Curriculum schedule.

Outcome curriculum() {
  bool ok = shuffle_probability(0, 20) == 1.0 && shuffle_probability(10, 20) == 0.5;
  for (int e = 20; e <= 100; ++e) ok = ok && shuffle_probability(e, 20) == 0.0;
  return {ok, fmt("p(0) = %g, p(10) = %g, p(20) = %g, p(35) = %g", shuffle_probability(0, 20),
                  shuffle_probability(10, 20), shuffle_probability(20, 20), shuffle_probability(35, 20))};
}

// ---------------------------------------------------------------------------
// 6. FLOPs ordering.

Outcome flops_ordering() {
  ModelConfig c;
  c.window_len = 25;
  c.hidden_dim = 512;
  bool ok = true;
  double previous = 2.0;
  std::string ratios;
  for (long long t : {50LL, 100LL, 500LL, 1000LL, 5000LL}) {
    const double lg = flops_estimate(EncoderKind::kLocalGlobal, t, c);
    const double va = flops_estimate(EncoderKind::kVanillaFull, t, c);
    const double ratio = lg / va;
    ok = ok && lg < va && ratio < 1.0 && ratio < previous;
    previous = ratio;
    ratios += (ratios.empty() ? "" : ", ") + std::to_string(t) + ": " + fmt("%.4f", ratio);
  }
  return {ok, "local-global / vanilla ratio at T = " + ratios};
}

// ---------------------------------------------------------------------------
// 7. Synthetic learning.

SyntheticSpec learning_spec(unsigned long long seed) {
  SyntheticSpec s;
  s.seed = seed;
  s.world_seed = 5;
  s.T = 120;
  s.N = 4;
  s.D_v = 64;
  s.D_text = 32;
  s.noise_sigma = 0.1;
  return s;
}

TrainConfig learning_config() {
  TrainConfig t;
  t.model.hidden_dim = 64;
  t.model.heads = 4;
  t.model.ffn_dim = 128;
  t.model.window_len = 25;
  t.model.subparagraph_count = 4;
  t.model.encoder_layers = 1;
  t.model.decoder_layers = 2;
  t.model.learning_rate = 1e-3;
  t.model.batch_size = 8;
  t.model.epochs = 60;
  t.seed = 1;
  return t;
}

Outcome synthetic_learning() {
  const auto train_set = generate_suite(learning_spec(100), 200);
  const auto eval_set = generate_suite(learning_spec(200), 50);
  const ModelDims dims{64, 32};

  std::mt19937_64 rng(8);
  const double baseline = estimate_random_baseline_miou(eval_set, 2000, rng);

  auto run = [&](double lambda2, double& seconds) {
    TrainConfig cfg = learning_config();
    cfg.model.lambda2 = lambda2;
    const auto start = Clock::now();
    const TrainResult result = train(train_set, cfg, dims);
    seconds = seconds_since(start);
    return evaluate_model(result.state.model, eval_set).miou;
  };
  double full_s = 0, ablated_s = 0;
  const double full = run(0.2, full_s);
  const double ablated = run(0.0, ablated_s);
  const bool ok = full >= 0.60 && full >= 3.0 * baseline && full - ablated >= 0.05 && full_s <= 1800.0 &&
                  ablated_s <= 1800.0;
  return {ok, fmt("eval mIoU %.3f (random %.3f, ratio %.1fx); without attention loss %.3f", full, baseline,
                  full / baseline, ablated) +
                  fmt("; training %.0f s and %.0f s", full_s, ablated_s)};
}

// ---------------------------------------------------------------------------
// 8. Random baseline self-consistency.

Outcome random_baseline() {
  SyntheticSpec spec;
  spec.seed = 8;
  spec.T = 50;
  spec.N = 1;
  auto sample = generate_sample(spec);
  sample.ground_truth = {{0.0, sample.video.duration}};
  std::mt19937_64 rng(88);
  const double miou = estimate_random_baseline_miou({sample}, 1'000'000, rng);
  const double rel = std::abs(miou - 1.0 / 3.0) / (1.0 / 3.0);
  return {rel < 0.01, fmt("10^6 trials on a full-span interval: %.5f (relative error %.2e vs 1/3)", miou, rel)};
}

// ---------------------------------------------------------------------------
// 9. Determinism and persistence.

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

Outcome determinism() {
  SyntheticSpec spec = learning_spec(31);
  spec.T = 40;
  spec.N = 3;
  spec.D_v = 16;
  spec.D_text = 8;
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  write_dataset(a, generate_suite(spec, 6));
  write_dataset(b, generate_suite(spec, 6));
  const auto ta = tree(a);
  const bool same_tree = ta.size() > 1 && ta == tree(b);

  const auto data = generate_suite(spec, 8);
  TrainConfig cfg;
  cfg.model = toy_model();
  cfg.model.hidden_dim = 16;
  cfg.model.ffn_dim = 32;
  cfg.model.window_len = 8;
  cfg.model.batch_size = 4;
  cfg.model.learning_rate = 1e-3;
  cfg.seed = 12;
  const ModelDims dims{16, 8};
  TrainOptions three;
  three.epochs = 3;
  const double first = train(data, cfg, dims, three).final_loss;
  const double second = train(data, cfg, dims, three).final_loss;

  const fs::path run_dir = scratch("run");
  TrainConfig ckpt_cfg = cfg;
  ckpt_cfg.checkpoint_dir = run_dir.string();
  const TrainResult straight = train(data, ckpt_cfg, dims, three);
  TrainConfig resume_cfg = cfg;
  resume_cfg.checkpoint_dir = scratch("resume").string();
  TrainOptions resume;
  resume.resume_from = run_dir / "epoch_0002.ckpt";
  resume.epochs = 3;
  const TrainResult resumed = train(data, resume_cfg, dims, resume);
  const double next_step_gap = resumed.steps.empty()
                                   ? INFINITY
                                   : std::abs(resumed.steps.front().loss.total -
                                              straight.steps[straight.steps.size() - resumed.steps.size()].loss.total);

  for (const char* name : {"gen_a", "gen_b", "run", "resume"}) fs::remove_all(scratch(name));
  return {same_tree && first == second && next_step_gap < 1e-6,
          std::string(same_tree ? "gen-data trees bit-identical" : "gen-data trees differ") +
              fmt("; final losses %.9g / %.9g; resumed next-step loss gap %.2e", first, second, next_step_gap)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"hand-checked loss values", loss_values},
      {"gradient correctness", gradient_correctness},
      {"row-stochastic attention and padding invariance", stochastic_rows_and_padding},
      {"curriculum schedule", curriculum},
      {"FLOPs ordering", flops_ordering},
      {"synthetic learning", synthetic_learning},
      {"random baseline self-consistency", random_baseline},
      {"determinism and persistence", determinism},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] criterion %zu: %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
  return failures == 0 ? 0 : 1;
}
