// Copyright 2026 The LGMR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lgmr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lgmr/errors.hpp"

namespace lgmr {

namespace {

std::mt19937_64 epoch_rng(unsigned long long seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x65706f63u};
  return std::mt19937_64(seq);
}

ModelDims dims_of(const SynopsisSample& sample) {
  return {static_cast<int>(sample.video.features.cols()), static_cast<int>(sample.paragraphs.front().cols())};
}

void add_breakdown(LossBreakdown& acc, const LossBreakdown& x, double weight) {
  acc.l1 += weight * x.l1;
  acc.giou += weight * x.giou;
  acc.loc += weight * x.loc;
  acc.att += weight * x.att;
  acc.total += weight * x.total;
  if (acc.per_layer.size() < x.per_layer.size()) acc.per_layer.resize(x.per_layer.size());
  for (std::size_t l = 0; l < x.per_layer.size(); ++l) {
    acc.per_layer[l].first += weight * x.per_layer[l].first;
    acc.per_layer[l].second += weight * x.per_layer[l].second;
  }
}

constexpr char kCheckpointMagic[8] = {'L', 'G', 'M', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& at) {
  if (bytes.size() - at < sizeof(T)) throw SchemaError("checkpoint: truncated");
  T v;
  std::memcpy(&v, bytes.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

void put_tensor(std::string& out, const std::string& name, const Matrix<float>& m) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
}

std::string module_of(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

double shuffle_probability(int epoch, int t_max) {
  if (epoch < 0) throw std::invalid_argument("shuffle_probability: epoch must be >= 0");
  if (t_max <= 0) throw std::invalid_argument("shuffle_probability: t_max must be > 0");
  return std::max(0.0, 1.0 - static_cast<double>(epoch) / static_cast<double>(t_max));
}

SynopsisSample augment_sample(const SynopsisSample& sample, double p, std::mt19937_64& rng) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument("augment_sample: p must lie in [0, 1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (!(coin(rng) < p)) return sample;
  std::vector<std::size_t> order(sample.paragraphs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  SynopsisSample out = sample;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.paragraphs[i] = sample.paragraphs[order[i]];
    out.ground_truth[i] = sample.ground_truth[order[i]];
  }
  return out;
}

std::vector<NormalizedInterval> normalized_ground_truth(const SynopsisSample& sample) {
  std::vector<NormalizedInterval> out;
  for (const auto& iv : sample.ground_truth) out.push_back(normalize_interval(iv, sample.video.duration));
  return out;
}

PaddedBatch assemble_batch(const std::vector<const SynopsisSample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("assemble_batch: empty batch");
  Eigen::Index max_len = 0;
  const Eigen::Index width = samples.front()->video.features.cols();
  for (const auto* s : samples) {
    if (s->video.features.cols() != width) throw SchemaError("assemble_batch: video widths differ within a batch");
    max_len = std::max(max_len, s->video.length());
  }
  PaddedBatch batch;
  for (const auto* s : samples) {
    FeatureMatrix padded = FeatureMatrix::Zero(max_len, width);
    padded.topRows(s->video.length()) = s->video.features;
    batch.samples.push_back(s);
    batch.videos.push_back(std::move(padded));
    batch.lengths.push_back(s->video.length());
  }
  return batch;
}

BatchResult batch_loss(const LgmrModel<float>& model, const PaddedBatch& batch, ParameterSet<float>* grads) {
  BatchResult result;
  const double weight = 1.0 / static_cast<double>(batch.samples.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    Tape<float> tape;
    Bindings<float> p(tape, model.parameters());
    TapedLoss<float> loss = sample_loss(model, p, batch.videos[i], batch.lengths[i], *batch.samples[i]);
    add_breakdown(result.loss, loss.breakdown, weight);
    if (grads != nullptr && std::isfinite(loss.breakdown.total)) {
      tape.backward(loss.total);
      p.accumulate_gradients(*grads, static_cast<float>(weight));
    }
  }
  return result;
}

AdamState adam_init(const ParameterSet<float>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }

void adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state, double learning_rate,
               double beta1, double beta2, double epsilon) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(beta1, t);
  const double bias2 = 1.0 - std::pow(beta2, t);
  for (auto& [name, value] : params.entries()) {
    const Eigen::ArrayXXd g = grads.at(name).cast<double>().array();
    Matrix<float>& m_store = state.m.at(name);
    Matrix<float>& v_store = state.v.at(name);
    const Eigen::ArrayXXd m = beta1 * m_store.cast<double>().array() + (1.0 - beta1) * g;
    const Eigen::ArrayXXd v = beta2 * v_store.cast<double>().array() + (1.0 - beta2) * g.square();
    m_store = m.matrix().cast<float>();
    v_store = v.matrix().cast<float>();
    const Eigen::ArrayXXd update = learning_rate * (m / bias1) / ((v / bias2).sqrt() + epsilon);
    value = (value.cast<double>().array() - update).matrix().cast<float>();
  }
}

double clip_global_norm(ParameterSet<float>& grads, double max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  double sq = 0;
  for (const auto& [_, g] : grads.entries()) sq += g.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& [_, g] : grads.entries()) g *= s;
  }
  return norm;
}

TrainState init_train_state(const TrainConfig& config, ModelDims dims) {
  config.validate();
  auto model = LgmrModel<float>::initialize(config.model, dims, config.seed);
  AdamState adam = adam_init(model.parameters());
  return TrainState{config, std::move(model), std::move(adam), 0, 0};
}

std::string step_record_json(const StepRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["l1"] = r.loss.l1;
  j["giou"] = r.loss.giou;
  j["att"] = r.loss.att;
  j["total"] = r.loss.total;
  return j.dump();
}

std::vector<StepRecord> train_epoch(TrainState& state, const std::vector<SynopsisSample>& data, std::ostream* log) {
  if (data.empty()) throw std::invalid_argument("train: empty training set");
  const ModelConfig& mc = state.config.model;
  auto rng = epoch_rng(state.config.seed, state.epoch);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const double p = shuffle_probability(state.epoch, mc.t_max);

  std::vector<StepRecord> records;
  const std::size_t batch_size = static_cast<std::size_t>(mc.batch_size);
  for (std::size_t first = 0, batch_id = 0; first < order.size(); first += batch_size, ++batch_id) {
    const std::size_t last = std::min(order.size(), first + batch_size);
    std::vector<SynopsisSample> members;
    for (std::size_t k = first; k < last; ++k) members.push_back(augment_sample(data[order[k]], p, rng));
    std::vector<const SynopsisSample*> ptrs;
    for (const auto& s : members) ptrs.push_back(&s);
    const PaddedBatch batch = assemble_batch(ptrs);

    ParameterSet<float> grads = state.model.parameters().zeros_like();
    const BatchResult result = batch_loss(state.model, batch, &grads);
    if (!std::isfinite(result.loss.total)) {
      nlohmann::json dump;
      dump["epoch"] = state.epoch;
      dump["batch"] = batch_id;
      dump["step"] = state.step;
      std::vector<std::string> ids;
      for (const auto* s : batch.samples) ids.push_back(s->video_id);
      dump["samples"] = ids;
      dump["loss"] = {{"l1", result.loss.l1}, {"giou", result.loss.giou}, {"att", result.loss.att}};
      if (!state.config.checkpoint_dir.empty()) {
        std::filesystem::create_directories(state.config.checkpoint_dir);
        write_file(std::filesystem::path(state.config.checkpoint_dir) / "nonfinite_batch.json", dump.dump(2) + "\n");
      }
      throw NumericError("non-finite loss at epoch " + std::to_string(state.epoch) + ", batch " +
                         std::to_string(batch_id) + ": " + dump.dump());
    }
    if (state.config.grad_clip) clip_global_norm(grads, *state.config.grad_clip);
    adam_step(state.model.parameters(), grads, state.adam, mc.learning_rate, state.config.beta1, state.config.beta2,
              state.config.epsilon);
    ++state.step;
    StepRecord record{state.step, state.epoch, result.loss};
    if (log != nullptr) *log << step_record_json(record) << "\n";
    records.push_back(std::move(record));
  }
  if (log != nullptr) log->flush();
  ++state.epoch;
  return records;
}

TrainResult train(const std::vector<SynopsisSample>& dataset, const TrainConfig& config, ModelDims dims,
                  const TrainOptions& options) {
  if (dataset.empty()) throw std::invalid_argument("train: empty training set");
  TrainState state = options.resume_from ? load_checkpoint(*options.resume_from) : init_train_state(config, dims);
  if (options.resume_from) state.config.checkpoint_dir = config.checkpoint_dir;
  const int target = options.epochs.value_or(state.config.model.epochs);
  if (target < 1) throw std::invalid_argument("train: epochs must be >= 1");

  std::ofstream log;
  const std::filesystem::path dir = state.config.checkpoint_dir;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    log.open(dir / "metrics.jsonl", options.resume_from ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log in '" + dir.string() + "'");
  }

  TrainResult result{state, {}, {}, 0};
  while (state.epoch < target) {
    auto records = train_epoch(state, dataset, dir.empty() ? nullptr : &log);
    result.steps.insert(result.steps.end(), records.begin(), records.end());
    const bool due = state.epoch % state.config.eval_every == 0 || state.epoch == target;
    if (due && options.eval_set != nullptr && !options.eval_set->empty()) {
      result.evaluations.emplace_back(state.epoch, evaluate_model(state.model, *options.eval_set));
    }
    if (due && !dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", state.epoch);
      save_checkpoint(dir / name, state);
      save_checkpoint(dir / "latest.ckpt", state);
    }
    if (options.on_epoch) options.on_epoch(state, records);
  }
  if (!result.steps.empty()) result.final_loss = result.steps.back().loss.total;
  result.state = std::move(state);
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  nlohmann::json header;
  header["config"] = to_key_values(state.config);
  header["dims"] = {{"video", state.model.dims().video_dim}, {"text", state.model.dims().text_dim}};
  header["epoch"] = state.epoch;
  header["step"] = state.step;
  header["adam_step"] = state.adam.step;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto& params = state.model.parameters().entries();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(3 * params.size()));
  for (const auto& [name, m] : params) put_tensor(out, name, m);
  for (const auto& [name, m] : state.adam.m.entries()) put_tensor(out, "adam.m/" + name, m);
  for (const auto& [name, m] : state.adam.v.entries()) put_tensor(out, "adam.v/" + name, m);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file(path, out);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string_view view(bytes);
  if (view.size() < sizeof(kCheckpointMagic) || view.substr(0, sizeof(kCheckpointMagic)) !=
                                                     std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw SchemaError("checkpoint: bad magic in '" + path.string() + "'");
  }
  std::size_t at = sizeof(kCheckpointMagic);
  if (take<std::uint32_t>(view, at) != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version");
  const auto header_len = take<std::uint64_t>(view, at);
  if (view.size() - at < header_len) throw SchemaError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(view.substr(at, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: malformed header: ") + e.what());
  }
  at += header_len;

  std::map<std::string, Matrix<float>> tensors;
  const auto count = take<std::uint32_t>(view, at);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = take<std::uint32_t>(view, at);
    if (view.size() - at < name_len) throw SchemaError("checkpoint: truncated tensor name");
    std::string name(view.substr(at, name_len));
    at += name_len;
    const auto rows = take<std::uint64_t>(view, at);
    const auto cols = take<std::uint64_t>(view, at);
    if (cols != 0 && rows > (view.size() - at) / sizeof(float) / cols) {
      throw SchemaError("checkpoint: truncated tensor '" + name + "'");
    }
    Matrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(float);
    std::memcpy(m.data(), view.data() + at, n);
    at += n;
    if (!m.allFinite()) throw NumericError("checkpoint: non-finite values in '" + name + "'");
    tensors.emplace(std::move(name), std::move(m));
  }
  if (at != view.size()) throw SchemaError("checkpoint: trailing bytes");

  try {
    const TrainConfig config = KeyValueConfig::parse(header.at("config").get<std::string>()).train_config();
    const ModelDims dims{header.at("dims").at("video").get<int>(), header.at("dims").at("text").get<int>()};
    TrainState state = init_train_state(config, dims);
    auto fill = [&tensors](ParameterSet<float>& set, const std::string& prefix) {
      for (auto& [name, m] : set.entries()) {
        auto it = tensors.find(prefix + name);
        if (it == tensors.end()) throw SchemaError("checkpoint: missing tensor '" + prefix + name + "'");
        if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
          throw SchemaError("checkpoint: shape mismatch for '" + prefix + name + "'");
        }
        m = it->second;
      }
    };
    fill(state.model.parameters(), "");
    fill(state.adam.m, "adam.m/");
    fill(state.adam.v, "adam.v/");
    if (tensors.size() != 3 * state.model.parameters().entries().size()) {
      throw SchemaError("checkpoint: unexpected extra tensors");
    }
    state.epoch = header.at("epoch").get<int>();
    state.step = header.at("step").get<long long>();
    state.adam.step = header.at("adam_step").get<long long>();
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: bad header field: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

Prediction predict(const LgmrModel<float>& model, const SynopsisSample& sample) {
  Tape<float> tape;
  Bindings<float> p(tape, model.parameters());
  std::vector<Matrix<float>> paragraphs(sample.paragraphs.begin(), sample.paragraphs.end());
  const ForwardPass<float> pass = model.forward(p, sample.video.features, sample.video.length(), paragraphs);
  Prediction out;
  const Matrix<float>& rows = pass.intervals.back().value();
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.intervals.push_back(denormalize_interval({rows(i, 0), rows(i, 1)}, sample.video.duration));
  }
  for (const auto& a : pass.attention) out.layer_attention.push_back(a.value());
  return out;
}

EvalReport evaluate_model(const LgmrModel<float>& model, const std::vector<SynopsisSample>& samples) {
  std::vector<Interval> preds;
  std::vector<Interval> gts;
  for (const auto& s : samples) {
    const auto pred = predict(model, s);
    preds.insert(preds.end(), pred.intervals.begin(), pred.intervals.end());
    gts.insert(gts.end(), s.ground_truth.begin(), s.ground_truth.end());
  }
  return evaluate(preds, gts);
}

GradientCheckReport gradient_check(const ModelConfig& config, const SynopsisSample& sample, unsigned long long seed,
                                   double h, double floor) {
  if (!(h > 0) || !(floor > 0)) throw std::invalid_argument("gradient_check: h and floor must be > 0");
  auto model = LgmrModel<double>::initialize(config, dims_of(sample), seed);
  const Matrix<double> video = sample.video.features.cast<double>();

  auto loss_value = [&]() {
    Tape<double> tape;
    Bindings<double> p(tape, model.parameters());
    return sample_loss(model, p, video, video.rows(), sample).breakdown.total;
  };

  ParameterSet<double> analytic = model.parameters().zeros_like();
  {
    Tape<double> tape;
    Bindings<double> p(tape, model.parameters());
    const auto loss = sample_loss(model, p, video, video.rows(), sample);
    tape.backward(loss.total);
    p.accumulate_gradients(analytic);
  }

  GradientCheckReport report;
  for (auto& [name, value] : model.parameters().entries()) {
    const Matrix<double>& grad = analytic.at(name);
    double& group = report.group_error[module_of(name)];
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      double& x = value.data()[k];
      const double saved = x;
      x = saved + h;
      const double plus = loss_value();
      x = saved - h;
      const double minus = loss_value();
      x = saved;
      const double numeric = (plus - minus) / (2 * h);
      const double a = grad.data()[k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      group = std::max(group, err);
      if (err > report.worst || report.worst_parameter.empty()) {
        report.worst = std::max(report.worst, err);
        report.worst_parameter = name + "[" + std::to_string(k) + "]";
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace lgmr
