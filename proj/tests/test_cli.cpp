// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "lgmr/data_model.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("lgmr_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with stdout/stderr captured to `log` and returns its exit code.
int cli(const std::string& args, const std::string& log = "last.log") {
  const std::string cmd = std::string("'") + LGMR_CLI_PATH + "' " + args + " > '" + (scratch() / log).string() +
                          "' 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string output(const std::string& log = "last.log") { return lgmr::read_file(scratch() / log); }

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = lgmr::read_file(e.path());
  }
  return files;
}

std::string s(const fs::path& p) { return "'" + p.string() + "'"; }

const std::string kTinyModel =
    "--set model.hidden_dim=16 --set model.heads=2 --set model.ffn_dim=32 --set model.window_len=4 "
    "--set model.subparagraph_count=2 --set model.encoder_layers=1 --set model.decoder_layers=1 "
    "--set model.batch_size=4 --set model.learning_rate=0.001";

const std::string kTinyData = "--count 6 --T 16 --N 2 --video-dim 12 --text-dim 6 --tokens 4";

}  // namespace

TEST_CASE("gen-data is deterministic") {
  const fs::path a = scratch() / "gen_a", b = scratch() / "gen_b", c = scratch() / "gen_c";
  REQUIRE(cli("--seed 9 gen-data --out " + s(a) + " " + kTinyData) == 0);
  REQUIRE(cli("--seed 9 gen-data --out " + s(b) + " " + kTinyData) == 0);
  REQUIRE(cli("--seed 10 gen-data --out " + s(c) + " " + kTinyData) == 0);
  const auto ta = tree(a);
  CHECK(ta.size() > 1);
  CHECK(ta == tree(b));
  CHECK(ta != tree(c));
  CHECK(lgmr::load_dataset(a).size() == 6);
}

TEST_CASE("eval with ground-truth predictions is perfect") {
  const fs::path data = scratch() / "eval_data";
  REQUIRE(cli("--seed 3 gen-data --out " + s(data) + " " + kTinyData) == 0);
  nlohmann::json j;
  j["predictions"] = nlohmann::json::array();
  for (const auto& sample : lgmr::load_dataset(data)) {
    nlohmann::json item{{"video_id", sample.video_id}, {"intervals", nlohmann::json::array()}};
    for (const auto& iv : sample.ground_truth) item["intervals"].push_back({iv.start, iv.end});
    j["predictions"].push_back(item);
  }
  lgmr::write_file(scratch() / "gt_preds.json", j.dump());
  const fs::path report = scratch() / "gt_report.json";
  REQUIRE(cli("eval --data " + s(data) + " --predictions " + s(scratch() / "gt_preds.json") + " --out " + s(report) +
              " --table -") == 0);
  const auto r = nlohmann::json::parse(lgmr::read_file(report));
  CHECK(r.at("miou").get<double>() == 1.0);
  CHECK(r.at("iou_at").at("0.7").get<double>() == 1.0);
  CHECK(output().find("100.0") != std::string::npos);

  // Predictions for an unknown video are a schema violation.
  lgmr::write_file(scratch() / "bad_preds.json", R"({"predictions": [{"video_id": "nope", "intervals": []}]})");
  CHECK(cli("eval --data " + s(data) + " --predictions " + s(scratch() / "bad_preds.json")) == 3);
}

TEST_CASE("flops report") {
  REQUIRE(cli("flops --T 1000 --M 25") == 0);
  const std::string out = output();
  const auto pos = out.find("ratio local_global/vanilla = ");
  REQUIRE(pos != std::string::npos);
  const double ratio = std::stod(out.substr(pos + 29));
  CHECK(ratio > 0);
  CHECK(ratio < 1);
}

TEST_CASE("exit codes") {
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("flops --T notanumber") == 2);
  CHECK(cli("") == 2);
  CHECK(cli("--help") == 0);
  CHECK(cli("predict --data " + s(scratch() / "does_not_exist") + " --checkpoint x.ckpt") == 5);
  CHECK(cli("--config " + s(scratch() / "missing.cfg") + " flops") == 5);

  lgmr::write_file(scratch() / "bad.cfg", "model.hidden_dim = banana\n");
  CHECK(cli("--config " + s(scratch() / "bad.cfg") + " flops") == 3);
  lgmr::write_file(scratch() / "bad2.cfg", "this line has no equals sign\n");
  CHECK(cli("--config " + s(scratch() / "bad2.cfg") + " flops") == 3);
  CHECK(cli("--set model.nonexistent_key=1 flops") == 3);
}

TEST_CASE("train, predict, eval and dump-attention on a tiny model") {
  const fs::path data = scratch() / "train_data", run = scratch() / "run";
  REQUIRE(cli("--seed 4 gen-data --out " + s(data) + " " + kTinyData) == 0);
  REQUIRE(cli(kTinyModel + " --seed 2 train --data " + s(data) + " --eval-data " + s(data) + " --out " + s(run) +
              " --epochs 2") == 0);
  CHECK(output().find("final loss") != std::string::npos);
  CHECK(fs::exists(run / "latest.ckpt"));
  CHECK(fs::exists(run / "metrics.jsonl"));
  CHECK(fs::exists(run / "eval.jsonl"));

  const fs::path preds = scratch() / "preds.json";
  REQUIRE(cli("predict --data " + s(data) + " --checkpoint " + s(run / "latest.ckpt") + " --out " + s(preds)) == 0);
  const auto pj = nlohmann::json::parse(lgmr::read_file(preds));
  REQUIRE(pj.at("predictions").size() == 6);
  for (const auto& item : pj.at("predictions")) {
    CHECK(item.at("intervals").size() == 2);
    for (const auto& iv : item.at("intervals")) CHECK(iv.at(0).get<double>() <= iv.at(1).get<double>());
  }

  const fs::path from_ckpt = scratch() / "ckpt_report.json", from_preds = scratch() / "preds_report.json";
  REQUIRE(cli("eval --data " + s(data) + " --checkpoint " + s(run / "latest.ckpt") + " --out " + s(from_ckpt)) == 0);
  REQUIRE(cli("eval --data " + s(data) + " --predictions " + s(preds) + " --out " + s(from_preds)) == 0);
  const double m1 = nlohmann::json::parse(lgmr::read_file(from_ckpt)).at("miou").get<double>();
  const double m2 = nlohmann::json::parse(lgmr::read_file(from_preds)).at("miou").get<double>();
  CHECK(m1 == doctest::Approx(m2).epsilon(1e-9));

  const fs::path attn = scratch() / "attn";
  REQUIRE(cli("dump-attention --data " + s(data) + " --checkpoint " + s(run / "latest.ckpt") + " --out " + s(attn)) ==
          0);
  const auto samples = lgmr::load_dataset(data);
  const auto t = lgmr::decode_feature_tensor(lgmr::read_file(attn / (samples[0].video_id + ".attn.lgmrfeat")));
  REQUIRE(t.dims.size() == 3);
  CHECK(t.dims[0] == 1);
  CHECK(t.dims[1] == 2);
  CHECK(t.dims[2] == 16);

  // Resuming continues the epoch count.
  REQUIRE(cli(kTinyModel + " --seed 2 train --data " + s(data) + " --out " + s(run) + " --resume " +
              s(run / "latest.ckpt") + " --epochs 3") == 0);
  CHECK(output().find("after 3 epochs") != std::string::npos);

  // A corrupted checkpoint is a schema violation.
  lgmr::write_file(scratch() / "junk.ckpt", "not a checkpoint");
  CHECK(cli("predict --data " + s(data) + " --checkpoint " + s(scratch() / "junk.ckpt")) == 3);
}

TEST_CASE("random baseline and gradient check") {
  const fs::path data = scratch() / "rb_data";
  REQUIRE(cli("--seed 5 gen-data --out " + s(data) + " " + kTinyData) == 0);
  REQUIRE(cli("random-baseline --data " + s(data) + " --trials 200") == 0);
  CHECK(output().find("random baseline mIoU") != std::string::npos);

  CHECK(cli("grad-check --mode full") == 0);
  CHECK(output().find("worst relative error") != std::string::npos);
  CHECK(cli("grad-check --mode loc") == 0);
  CHECK(cli("grad-check --mode att") == 0);
  CHECK(cli("grad-check --mode sideways") == 2);
}
