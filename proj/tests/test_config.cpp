// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "lgmr/config.hpp"
#include "lgmr/errors.hpp"

using namespace lgmr;

TEST_CASE("defaults carry the reference hyperparameters") {
  const ModelConfig m;
  CHECK(m.hidden_dim == 512);
  CHECK(m.heads == 8);
  CHECK(m.ffn_dim == 2048);
  CHECK(m.window_len == 25);
  CHECK(m.subparagraph_count == 10);
  CHECK(m.encoder_layers == 2);
  CHECK(m.decoder_layers == 3);
  CHECK(m.lambda1 == 1.0);
  CHECK(m.lambda2 == 0.2);
  CHECK(m.t_max == 20);
  CHECK(m.learning_rate == 1e-4);
  CHECK(m.batch_size == 16);
  CHECK(m.epochs == 50);
  CHECK_NOTHROW(m.validate());
  const TrainConfig t;
  CHECK(t.beta1 == 0.9);
  CHECK(t.beta2 == 0.999);
  CHECK(t.epsilon == 1e-8);
  CHECK_FALSE(t.grad_clip.has_value());
  const FeatureLayout f;
  CHECK(f.total() == 3840);
}

TEST_CASE("model config invariants") {
  ModelConfig m;
  m.heads = 7;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m = ModelConfig{};
  m.window_len = 0;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m = ModelConfig{};
  m.hidden_dim = -8;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("key-value documents overlay defaults and overrides win") {
  auto cfg = KeyValueConfig::parse(
      "# toy model\n"
      "model.hidden_dim = 64\n"
      "model.heads=4\n"
      "\n"
      "train.seed = 18446744073709551615\n"
      "train.grad_clip = 1.5\n"
      "data.motion_dim = 32\n");
  cfg.set("model.hidden_dim=128");
  const TrainConfig t = cfg.train_config();
  CHECK(t.model.hidden_dim == 128);
  CHECK(t.model.heads == 4);
  CHECK(t.seed == 18446744073709551615ULL);
  REQUIRE(t.grad_clip.has_value());
  CHECK(*t.grad_clip == 1.5);
  CHECK(cfg.feature_layout().motion_dim == 32);
  CHECK(cfg.feature_layout().appearance_dim == 768);
}

TEST_CASE("malformed documents are schema errors") {
  CHECK_THROWS_AS(KeyValueConfig::parse("model.hidden_dim 64\n"), SchemaError);
  CHECK_THROWS_AS(KeyValueConfig::parse("model.hiden_dim = 64\n").model_config(), SchemaError);
  CHECK_THROWS_AS(KeyValueConfig::parse("model.hidden_dim = 6.5\n").model_config(), SchemaError);
  CHECK_THROWS_AS(KeyValueConfig::parse("model.heads = 5\n").model_config(), SchemaError);
  CHECK_THROWS_AS(KeyValueConfig::parse("model.positional_encoding = maybe\n").model_config(), SchemaError);
  CHECK_THROWS_AS(KeyValueConfig::parse("train.seed = -1\n").train_config(), SchemaError);
  KeyValueConfig cfg;
  CHECK_THROWS_AS(cfg.set("no-equals-sign"), SchemaError);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/lgmr.cfg"), IoError);
}

TEST_CASE("serialised training config parses back to the same values") {
  TrainConfig t;
  t.model.hidden_dim = 64;
  t.model.heads = 4;
  t.model.lambda2 = 0.123456789012345;
  t.model.positional_encoding = false;
  t.seed = 987654321987654321ULL;
  t.checkpoint_dir = "runs/a";
  t.grad_clip = 0.25;
  const TrainConfig back = KeyValueConfig::parse(to_key_values(t)).train_config();
  CHECK(back.model.hidden_dim == 64);
  CHECK(back.model.heads == 4);
  CHECK(back.model.lambda2 == t.model.lambda2);
  CHECK_FALSE(back.model.positional_encoding);
  CHECK(back.seed == t.seed);
  CHECK(back.checkpoint_dir == "runs/a");
  CHECK(*back.grad_clip == 0.25);
  CHECK(to_key_values(back) == to_key_values(t));
}
