// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lgmr/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "lgmr/errors.hpp"

namespace lgmr {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw SchemaError("config key '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw SchemaError("config key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw SchemaError("config key '" + key + "' expects true/false, got '" + v + "'");
}

using Setter = std::function<void(const std::string&, const std::string&)>;

void apply(const std::map<std::string, std::string>& values, const std::string& ns,
           const std::map<std::string, Setter>& setters) {
  for (const auto& [key, value] : values) {
    if (key.rfind(ns, 0) != 0) continue;
    const auto it = setters.find(key.substr(ns.size()));
    if (it == setters.end()) throw SchemaError("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("model config: ") + what + " must be positive");
  };
  positive(hidden_dim > 0, "hidden_dim");
  positive(heads > 0, "heads");
  positive(ffn_dim > 0, "ffn_dim");
  positive(window_len > 0, "window_len");
  positive(subparagraph_count > 0, "subparagraph_count");
  positive(encoder_layers > 0, "encoder_layers");
  positive(decoder_layers > 0, "decoder_layers");
  positive(t_max > 0, "t_max");
  positive(learning_rate >= 0, "learning_rate");
  positive(batch_size > 0, "batch_size");
  positive(epochs > 0, "epochs");
  if (lambda1 < 0 || lambda2 < 0) throw std::invalid_argument("model config: loss weights must be non-negative");
  if (hidden_dim % heads != 0) throw std::invalid_argument("model config: hidden_dim must be divisible by heads");
}

void TrainConfig::validate() const {
  model.validate();
  if (!(model.learning_rate > 0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (eval_every < 1) throw std::invalid_argument("train config: eval_every must be >= 1");
  if (grad_clip && !(*grad_clip > 0)) throw std::invalid_argument("train config: grad_clip must be > 0");
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw SchemaError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw SchemaError("config line " + std::to_string(number) + ": empty key");
    cfg.values_[key] = trim(body.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void KeyValueConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw SchemaError("override '" + assignment + "' is not key=value");
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

ModelConfig KeyValueConfig::model_config(ModelConfig m) const {
  auto i = [](int& dst) { return [&dst](const std::string& k, const std::string& v) { dst = to_int(k, v); }; };
  auto d = [](double& dst) { return [&dst](const std::string& k, const std::string& v) { dst = to_double(k, v); }; };
  const std::map<std::string, Setter> setters = {
      {"hidden_dim", i(m.hidden_dim)},
      {"heads", i(m.heads)},
      {"ffn_dim", i(m.ffn_dim)},
      {"window_len", i(m.window_len)},
      {"subparagraph_count", i(m.subparagraph_count)},
      {"encoder_layers", i(m.encoder_layers)},
      {"decoder_layers", i(m.decoder_layers)},
      {"lambda1", d(m.lambda1)},
      {"lambda2", d(m.lambda2)},
      {"t_max", i(m.t_max)},
      {"learning_rate", d(m.learning_rate)},
      {"batch_size", i(m.batch_size)},
      {"epochs", i(m.epochs)},
      {"positional_encoding",
       [&m](const std::string& k, const std::string& v) { m.positional_encoding = to_bool(k, v); }},
  };
  apply(values_, "model.", setters);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  return m;
}

TrainConfig KeyValueConfig::train_config(TrainConfig base) const {
  base.model = model_config(base.model);
  const std::map<std::string, Setter> setters = {
      {"seed", [&base](const std::string& k, const std::string& v) {
         if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
           throw SchemaError(k + " must be a non-negative integer, got '" + v + "'");
         }
         try {
           base.seed = std::stoull(v);
         } catch (const std::out_of_range&) {
           throw SchemaError(k + " is out of range");
         }
       }},
      {"checkpoint_dir", [&base](const std::string&, const std::string& v) { base.checkpoint_dir = v; }},
      {"eval_every", [&base](const std::string& k, const std::string& v) { base.eval_every = to_int(k, v); }},
      {"grad_clip", [&base](const std::string& k, const std::string& v) {
         if (v == "none" || v.empty()) {
           base.grad_clip.reset();
         } else {
           base.grad_clip = to_double(k, v);
         }
       }},
      {"beta1", [&base](const std::string& k, const std::string& v) { base.beta1 = to_double(k, v); }},
      {"beta2", [&base](const std::string& k, const std::string& v) { base.beta2 = to_double(k, v); }},
      {"epsilon", [&base](const std::string& k, const std::string& v) { base.epsilon = to_double(k, v); }},
  };
  apply(values_, "train.", setters);
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  return base;
}

FeatureLayout KeyValueConfig::feature_layout(FeatureLayout f) const {
  auto i = [](int& dst) { return [&dst](const std::string& k, const std::string& v) { dst = to_int(k, v); }; };
  const std::map<std::string, Setter> setters = {
      {"motion_dim", i(f.motion_dim)},
      {"appearance_dim", i(f.appearance_dim)},
      {"subtitle_dim", i(f.subtitle_dim)},
  };
  apply(values_, "data.", setters);
  if (f.motion_dim <= 0 || f.appearance_dim <= 0 || f.subtitle_dim <= 0) {
    throw SchemaError("feature layout widths must be positive");
  }
  return f;
}

std::string to_key_values(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  const ModelConfig& m = c.model;
  out << "model.hidden_dim = " << m.hidden_dim << "\n"
      << "model.heads = " << m.heads << "\n"
      << "model.ffn_dim = " << m.ffn_dim << "\n"
      << "model.window_len = " << m.window_len << "\n"
      << "model.subparagraph_count = " << m.subparagraph_count << "\n"
      << "model.encoder_layers = " << m.encoder_layers << "\n"
      << "model.decoder_layers = " << m.decoder_layers << "\n"
      << "model.lambda1 = " << m.lambda1 << "\n"
      << "model.lambda2 = " << m.lambda2 << "\n"
      << "model.t_max = " << m.t_max << "\n"
      << "model.learning_rate = " << m.learning_rate << "\n"
      << "model.batch_size = " << m.batch_size << "\n"
      << "model.epochs = " << m.epochs << "\n"
      << "model.positional_encoding = " << (m.positional_encoding ? "true" : "false") << "\n"
      << "train.seed = " << c.seed << "\n"
      << "train.checkpoint_dir = " << c.checkpoint_dir << "\n"
      << "train.eval_every = " << c.eval_every << "\n"
      << "train.grad_clip = ";
  if (c.grad_clip) {
    out << *c.grad_clip;
  } else {
    out << "none";
  }
  out << "\n"
      << "train.beta1 = " << c.beta1 << "\n"
      << "train.beta2 = " << c.beta2 << "\n"
      << "train.epsilon = " << c.epsilon << "\n";
  return out.str();
}

}  // namespace lgmr
