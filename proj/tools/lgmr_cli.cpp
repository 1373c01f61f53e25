// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point: data generation, training, evaluation, prediction,
// attention export, FLOPs report, random baseline and gradient check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lgmr/config.hpp"
#include "lgmr/data_model.hpp"
#include "lgmr/errors.hpp"
#include "lgmr/metrics.hpp"
#include "lgmr/synthetic.hpp"
#include "lgmr/trainer.hpp"

namespace fs = std::filesystem;
using namespace lgmr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitSchema = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitIo = 5;

constexpr const char* kFooter = R"(Configuration precedence (lowest to highest):
  built-in defaults < --config file < --set key=value overrides < dedicated flags (--seed, --epochs, ...)
Config files hold one "dotted.key = value" per line; '#' starts a comment.
Recognised namespaces: model.* (architecture, loss, optimiser), train.* (seed,
checkpoint_dir, eval_every, grad_clip, beta1, beta2, epsilon), data.* (feature widths).

Exit codes:
  0  success
  2  usage error (unknown command or flag, bad value)
  3  schema violation (malformed config, annotation, feature or checkpoint file)
  4  numeric failure (non-finite loss or features; grad-check above tolerance)
  5  I/O failure (missing or unreadable file)
  1  unexpected internal error)";

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<unsigned long long> seed;

  KeyValueConfig load() const {
    KeyValueConfig cfg = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    for (const auto& o : overrides) cfg.set(o);
    return cfg;
  }

  TrainConfig train_config() const {
    TrainConfig tc = load().train_config();
    if (seed) tc.seed = *seed;
    return tc;
  }
};

ModelDims dims_of(const std::vector<SynopsisSample>& data) {
  if (data.empty()) throw SchemaError("dataset is empty");
  return {static_cast<int>(data.front().video.features.cols()), static_cast<int>(data.front().paragraphs.front().cols())};
}

std::vector<SynopsisSample> load_dataset_checked(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "index.json")) throw IoError("no dataset index at '" + dir + "/index.json'");
  return load_dataset(dir);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

// Predictions file: {"predictions": [{"video_id": ..., "intervals": [[s, e], ...]}, ...]}
std::string predictions_json(const std::vector<SynopsisSample>& data, const std::vector<std::vector<Interval>>& preds) {
  nlohmann::json j;
  j["predictions"] = nlohmann::json::array();
  for (std::size_t k = 0; k < data.size(); ++k) {
    nlohmann::json item;
    item["video_id"] = data[k].video_id;
    item["intervals"] = nlohmann::json::array();
    for (const auto& iv : preds[k]) item["intervals"].push_back({iv.start, iv.end});
    j["predictions"].push_back(item);
  }
  return j.dump(2) + "\n";
}

std::map<std::string, std::vector<Interval>> read_predictions(const std::string& path) {
  std::map<std::string, std::vector<Interval>> out;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    for (const auto& item : j.at("predictions")) {
      std::vector<Interval> ivs;
      for (const auto& pair : item.at("intervals")) ivs.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
      out[item.at("video_id").get<std::string>()] = ivs;
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("predictions file '" + path + "': " + e.what());
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"lgmr: multi-paragraph video grounding with a local-global encoder and decoder"};
  app.footer(kFooter);
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "Key-value configuration file");
  app.add_option("--set", common.overrides, "Override a configuration key, e.g. --set model.hidden_dim=64");
  app.add_option("--seed", common.seed, "Random seed (overrides train.seed)");

  // gen-data -----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "Write a planted-correspondence synthetic dataset");
  SyntheticSpec spec;
  std::string gen_out;
  int gen_count = 8;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--T", spec.T, "Timesteps per video");
  gen->add_option("--N", spec.N, "Paragraphs per sample");
  gen->add_option("--video-dim", spec.D_v, "Video feature width (split motion/appearance/subtitle)");
  gen->add_option("--text-dim", spec.D_text, "Token feature width");
  gen->add_option("--tokens", spec.tokens_per_paragraph, "Tokens per paragraph");
  gen->add_option("--noise", spec.noise_sigma, "Gaussian noise standard deviation");
  gen->add_option("--min-gap", spec.min_gap, "Minimum gap between intervals, in timesteps");
  gen->add_option("--world-seed", spec.world_seed, "Seed of the shared projection world");

  // train --------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoints and metrics.jsonl");
  std::string train_data, train_eval, train_out, resume;
  std::optional<int> epochs;
  train_cmd->add_option("--data", train_data, "Training dataset directory")->required();
  train_cmd->add_option("--eval-data", train_eval, "Evaluation dataset directory (eval.jsonl every eval_every epochs)");
  train_cmd->add_option("--out", train_out, "Checkpoint directory (overrides train.checkpoint_dir)");
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
  train_cmd->add_option("--epochs", epochs, "Total epoch budget (overrides model.epochs)")->check(CLI::PositiveNumber);

  // eval ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a predictions file against ground truth");
  std::string eval_data, eval_ckpt, eval_preds, eval_out, eval_table, eval_name = "LGMR";
  eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
  auto* ckpt_opt = eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint");
  eval_cmd->add_option("--predictions", eval_preds, "Predictions JSON written by 'predict'")->excludes(ckpt_opt);
  eval_cmd->add_option("--out", eval_out, "Report JSON path (default: stdout)");
  eval_cmd->add_option("--table", eval_table, "Also write a text table to this path ('-' for stdout)");
  eval_cmd->add_option("--name", eval_name, "Method name in the text table");

  // predict ------------------------------------------------------------------
  auto* predict_cmd = app.add_subcommand("predict", "Predict one interval in seconds per paragraph");
  std::string pred_data, pred_ckpt, pred_out;
  predict_cmd->add_option("--data", pred_data, "Dataset directory")->required();
  predict_cmd->add_option("--checkpoint", pred_ckpt, "Model checkpoint")->required();
  predict_cmd->add_option("--out", pred_out, "Predictions JSON path (default: stdout)");

  // dump-attention -----------------------------------------------------------
  auto* dump_cmd = app.add_subcommand("dump-attention", "Export per-layer paragraph-to-video attention maps");
  std::string dump_data, dump_ckpt, dump_out;
  dump_cmd->add_option("--data", dump_data, "Dataset directory")->required();
  dump_cmd->add_option("--checkpoint", dump_ckpt, "Model checkpoint")->required();
  dump_cmd->add_option("--out", dump_out, "Output directory (<video_id>.attn.lgmrfeat, layers x N x T)")->required();

  // flops --------------------------------------------------------------------
  auto* flops_cmd = app.add_subcommand("flops", "Analytic encoder multiply-accumulate counts");
  long long flops_t = 1000;
  std::optional<int> flops_m;
  flops_cmd->add_option("--T", flops_t, "Sequence length")->check(CLI::PositiveNumber);
  flops_cmd->add_option("--M", flops_m, "Window length (overrides model.window_len)")->check(CLI::PositiveNumber);

  // random-baseline ----------------------------------------------------------
  auto* rand_cmd = app.add_subcommand("random-baseline", "Monte-Carlo mIoU of uniformly random intervals");
  std::string rand_data;
  int trials = 1000;
  rand_cmd->add_option("--data", rand_data, "Dataset directory")->required();
  rand_cmd->add_option("--trials", trials, "Monte-Carlo repetitions")->check(CLI::PositiveNumber);

  // grad-check ---------------------------------------------------------------
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of every parameter gradient");
  std::string mode = "full";
  double tolerance = 1e-4;
  grad_cmd->add_option("--mode", mode, "Loss terms: full, loc (lambda2 = 0) or att (localisation dropped)")
      ->check(CLI::IsMember({"full", "loc", "att"}));
  grad_cmd->add_option("--tolerance", tolerance, "Exit with code 4 when the worst relative error exceeds this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*gen) {
    if (common.seed) spec.seed = *common.seed;
    const auto samples = generate_suite(spec, gen_count);
    write_dataset(gen_out, samples);
    std::cout << "wrote " << samples.size() << " samples to " << gen_out << "\n";
  } else if (*train_cmd) {
    TrainConfig tc = common.train_config();
    if (!train_out.empty()) tc.checkpoint_dir = train_out;
    if (tc.checkpoint_dir.empty()) throw SchemaError("train needs --out or train.checkpoint_dir");
    const auto data = load_dataset_checked(train_data);
    std::vector<SynopsisSample> eval_set;
    if (!train_eval.empty()) eval_set = load_dataset_checked(train_eval);
    TrainOptions options;
    options.epochs = epochs;
    if (!resume.empty()) options.resume_from = resume;
    options.eval_set = eval_set.empty() ? nullptr : &eval_set;
    options.on_epoch = [&](const TrainState& state, const std::vector<StepRecord>& records) {
      double mean = 0;
      for (const auto& r : records) mean += r.loss.total;
      mean /= static_cast<double>(records.size());
      std::fprintf(stderr, "epoch %d  step %lld  mean loss %.6f\n", state.epoch, state.step, mean);
    };
    const TrainResult result = train(data, tc, dims_of(data), options);
    if (!result.evaluations.empty()) {
      std::ofstream out(fs::path(tc.checkpoint_dir) / "eval.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
      for (const auto& [epoch, report] : result.evaluations) {
        nlohmann::json j{{"epoch", epoch}, {"miou", report.miou}};
        for (const auto& [theta, v] : report.iou_at) j["iou@" + std::to_string(theta).substr(0, 3)] = v;
        out << j.dump() << "\n";
      }
    }
    std::printf("final loss %.9g after %d epochs (%lld steps); checkpoint %s\n", result.final_loss,
                result.state.epoch, result.state.step, (fs::path(tc.checkpoint_dir) / "latest.ckpt").c_str());
  } else if (*eval_cmd) {
    const auto data = load_dataset_checked(eval_data);
    std::vector<Interval> preds, gts;
    if (!eval_ckpt.empty()) {
      const TrainState state = load_checkpoint(eval_ckpt);
      for (const auto& s : data) {
        const auto p = predict(state.model, s);
        preds.insert(preds.end(), p.intervals.begin(), p.intervals.end());
      }
    } else if (!eval_preds.empty()) {
      const auto table = read_predictions(eval_preds);
      for (const auto& s : data) {
        auto it = table.find(s.video_id);
        if (it == table.end()) throw SchemaError("no predictions for '" + s.video_id + "'");
        if (it->second.size() != s.ground_truth.size()) throw SchemaError("paragraph count mismatch for " + s.video_id);
        preds.insert(preds.end(), it->second.begin(), it->second.end());
      }
    } else {
      throw CLI::RequiredError("eval needs --checkpoint or --predictions");
    }
    for (const auto& s : data) gts.insert(gts.end(), s.ground_truth.begin(), s.ground_truth.end());
    const EvalReport report = evaluate(preds, gts);
    write_text(eval_out, report_to_json(report));
    if (!eval_table.empty()) write_text(eval_table, report_to_table(report, eval_name));
  } else if (*predict_cmd) {
    const auto data = load_dataset_checked(pred_data);
    const TrainState state = load_checkpoint(pred_ckpt);
    std::vector<std::vector<Interval>> preds;
    for (const auto& s : data) preds.push_back(predict(state.model, s).intervals);
    write_text(pred_out, predictions_json(data, preds));
  } else if (*dump_cmd) {
    const auto data = load_dataset_checked(dump_data);
    const TrainState state = load_checkpoint(dump_ckpt);
    fs::create_directories(dump_out);
    for (const auto& s : data) {
      const auto p = predict(state.model, s);
      FeatureTensor t;
      const auto& first = p.layer_attention.front();
      t.dims = {p.layer_attention.size(), static_cast<std::uint64_t>(first.rows()),
                static_cast<std::uint64_t>(first.cols())};
      for (const auto& a : p.layer_attention) t.data.insert(t.data.end(), a.data(), a.data() + a.size());
      write_feature_tensor_file(fs::path(dump_out) / (s.video_id + ".attn.lgmrfeat"), t);
    }
    std::cout << "wrote attention maps for " << data.size() << " samples to " << dump_out << "\n";
  } else if (*flops_cmd) {
    ModelConfig mc = common.load().model_config();
    if (flops_m) mc.window_len = *flops_m;
    const double lg = flops_estimate(EncoderKind::kLocalGlobal, flops_t, mc);
    const double van = flops_estimate(EncoderKind::kVanillaFull, flops_t, mc);
    std::printf("T=%lld M=%d D=%d F=%d layers=%d\n", flops_t, mc.window_len, mc.hidden_dim, mc.ffn_dim,
                mc.encoder_layers);
    std::printf("local_global  %.6g MAC (%.3f G)\n", lg, lg / 1e9);
    std::printf("vanilla_full  %.6g MAC (%.3f G)\n", van, van / 1e9);
    std::printf("ratio local_global/vanilla = %.6f\n", lg / van);
  } else if (*rand_cmd) {
    const auto data = load_dataset_checked(rand_data);
    std::mt19937_64 rng(common.seed.value_or(0));
    std::printf("random baseline mIoU %.6f over %d trials\n", estimate_random_baseline_miou(data, trials, rng), trials);
  } else if (*grad_cmd) {
    ModelConfig toy;
    toy.hidden_dim = 8;
    toy.heads = 2;
    toy.ffn_dim = 16;
    toy.window_len = 3;
    toy.subparagraph_count = 2;
    toy.encoder_layers = 1;
    toy.decoder_layers = 1;
    toy = common.load().model_config(toy);
    if (mode == "loc") toy.lambda2 = 0;
    if (mode == "att") toy.lambda1 = 0;
    SyntheticSpec gs;
    gs.seed = common.seed.value_or(0);
    gs.T = 7;
    gs.N = 2;
    gs.D_v = 6;
    gs.D_text = 5;
    gs.tokens_per_paragraph = 3;
    const auto report = gradient_check(toy, generate_sample(gs), common.seed.value_or(0));
    for (const auto& [group, err] : report.group_error) std::printf("%-48s %.3e\n", group.c_str(), err);
    std::printf("checked %zu scalars; worst relative error %.3e at %s\n", report.checked, report.worst,
                report.worst_parameter.c_str());
    if (!(report.worst < tolerance)) return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
