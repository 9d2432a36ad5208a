#include "jet/training.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

namespace jet {

namespace {

constexpr double kProbFloor = 1e-9;

bool uses_picker(const TrainConfig& cfg) { return cfg.alpha > 0.0 && cfg.label_mode != LabelMode::none; }

int arity_for(LabelMode mode) { return mode == LabelMode::soft ? 1 : 3; }

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error("train config: alpha must be >= 0");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("train config: fraction must be in (0, 1]");
  if (batch_size < 1) throw Error("train config: batch size must be >= 1");
  if (epochs < 0) throw Error("train config: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw Error("train config: learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw Error("train config: betas must be in [0, 1)");
  if (weight_decay < 0.0) throw Error("train config: weight decay must be >= 0");
  if (checkpoint_every < 0) throw Error("train config: checkpoint cadence must be >= 0");
}

TrainState TrainState::fresh(ModelParameters params) {
  TrainState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.params = std::move(params);
  return s;
}

double picker_loss(const Matrix& predictions, const PickerTargets& targets) {
  const auto n = static_cast<std::size_t>(predictions.rows());
  if (targets.mask.size() != n) throw Error("picker_loss: prediction/mask length mismatch");
  const bool soft = targets.mode == LabelMode::soft;
  if (soft && (targets.scores.size() != n || predictions.cols() != 1))
    throw Error("picker_loss: soft targets need n x 1 predictions and n scores");
  if (!soft && (targets.classes.size() != n || predictions.cols() != 3))
    throw Error("picker_loss: hard targets need n x 3 predictions and n classes");
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!targets.mask[i]) continue;
    const auto r = static_cast<Eigen::Index>(i);
    if (soft) {
      const double p = predictions(r, 0);
      const double q = targets.scores[i];
      total -= q * std::log(std::max(p, kProbFloor)) + (1.0 - q) * std::log(std::max(1.0 - p, kProbFloor));
    } else {
      total -= std::log(std::max(predictions(r, targets.classes[i]), kProbFloor));
    }
    ++count;
  }
  return count ? total / count : 0.0;
}

double generator_loss(const Matrix& distributions, std::span<const int> targets, std::span<const std::uint8_t> mask) {
  if (static_cast<Eigen::Index>(targets.size()) != distributions.rows())
    throw Error("generator_loss: step count does not match target length");
  if (!mask.empty() && mask.size() != targets.size()) throw Error("generator_loss: mask length mismatch");
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    total -= std::log(std::max(distributions(static_cast<Eigen::Index>(i), targets[i]), kProbFloor));
    ++count;
  }
  return count ? total / count : 0.0;
}

double joint_loss(double lp, double lg, double alpha) { return alpha * lp + lg; }

BatchLoss batch_loss(const ModelParameters& params, std::span<const EncodedSample* const> batch, double alpha,
                     bool with_picker, Gradients* grads, Rng* dropout_rng) {
  if (batch.empty()) throw Error("batch_loss: empty batch");
  BatchLoss out;
  for (const EncodedSample* s : batch) {
    if (s->decoder_target.empty()) throw Error("batch_loss: sample without a reference");
    out.target_positions += static_cast<int>(s->decoder_target.size());
    if (!with_picker) continue;
    if (s->picker.mode == LabelMode::none || s->picker.mask.size() != s->input_ids.size())
      throw Error("batch_loss: joint training needs picker labels on every sample");
    out.picker_positions += std::accumulate(s->picker.mask.begin(), s->picker.mask.end(), 0);
  }
  const int arity = params.config().picker_arity;
  for (const EncodedSample* s : batch) {
    Tape tape;
    ForwardPass fp(tape, params, grads, dropout_rng);
    const Tape::Var encoded = fp.encode(s->input_ids, {});
    Tape::Var gen = tape.softmax_cross_entropy(fp.decoder_logits(encoded, {}, s->decoder_input), s->decoder_target,
                                               1.0 / out.target_positions);
    out.generator += tape.scalar(gen);
    Tape::Var total = gen;
    if (with_picker && out.picker_positions > 0) {
      const Tape::Var logits = fp.picker_logits(encoded);
      const double w = 1.0 / out.picker_positions;
      Tape::Var pick;
      if (s->picker.mode == LabelMode::soft) {
        if (arity != 1) throw Error("batch_loss: soft labels need a picker of arity 1");
        pick = tape.sigmoid_cross_entropy(logits, s->picker.scores, s->picker.mask, w);
      } else {
        if (arity != 3) throw Error("batch_loss: BIO labels need a picker of arity 3");
        std::vector<int> tgt(s->picker.classes);
        for (std::size_t i = 0; i < tgt.size(); ++i) {
          if (!s->picker.mask[i]) tgt[i] = -1;
        }
        pick = tape.softmax_cross_entropy(logits, tgt, w);
      }
      out.picker += tape.scalar(pick);
      total = tape.add(tape.scale(pick, alpha), gen);
    }
    if (grads) tape.backward(total);
  }
  out.joint = joint_loss(out.picker, out.generator, alpha);
  return out;
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

bool optimizer_step(TrainState& state, const Gradients& grads, const TrainConfig& cfg) {
  auto& tensors = state.params.tensors();
  if (grads.size() != tensors.size() || state.first_moment.size() != tensors.size())
    throw Error("optimizer_step: gradient count does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].rows() != tensors[i].value.rows() || grads[i].cols() != tensors[i].value.cols())
      throw Error("optimizer_step: gradient shape mismatch for '" + tensors[i].name + "'");
    if (!grads[i].allFinite()) {
      ++state.skipped_steps;
      return false;
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Matrix& p = tensors[i].value;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (tensors[i].decay && cfg.weight_decay > 0.0) p *= 1.0 - cfg.learning_rate * cfg.weight_decay;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
  return true;
}

TrainResult train(const std::vector<EncodedSample>& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw Error("train: empty corpus");
  const bool picker = uses_picker(cfg);
  if (picker && model_cfg.picker_arity != arity_for(cfg.label_mode))
    throw Error("train: label mode " + to_string(cfg.label_mode) + " needs picker arity " +
                std::to_string(arity_for(cfg.label_mode)));
  for (const auto& s : data) {
    if (picker && s.picker.mode != cfg.label_mode &&
        !(cfg.label_mode == LabelMode::defined && s.picker.mode == LabelMode::hard))
      throw Error("train: sample labels (" + to_string(s.picker.mode) + ") do not match label mode " +
                  to_string(cfg.label_mode));
  }

  TrainResult result;
  result.samples = data.size();
  result.state = TrainState::fresh(init_parameters(model_cfg));
  TrainState& state = result.state;

  Rng order_rng(splitmix64(cfg.seed ^ 0x6f72646572ULL));
  Rng dropout_rng(splitmix64(cfg.seed ^ 0x64726f70ULL));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients grads = state.params.zeros_like();
  std::vector<const EncodedSample*> batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sum_p = 0.0, sum_g = 0.0, sum_j = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      for (auto& g : grads) g.setZero();
      const BatchLoss loss = batch_loss(state.params, batch, cfg.alpha, picker, &grads, &dropout_rng);
      clip_global_norm(grads, cfg.clip_norm);
      optimizer_step(state, grads, cfg);
      sum_p += loss.picker;
      sum_g += loss.generator;
      sum_j += loss.joint;
      ++batches;
    }
    state.epoch = epoch;
    state.picker_loss = sum_p / batches;
    state.generator_loss = sum_g / batches;
    state.joint_loss = sum_j / batches;
    EpochRecord rec{epoch, state.step, state.picker_loss, state.generator_loss, state.joint_loss};
    result.log.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(state, rec);
  }
  return result;
}

TrainResult train_corpus(const std::vector<LabeledSample>& corpus, const TrainConfig& cfg,
                         const ModelConfig& model_cfg, const Vocabulary& vocab, const LanguageConfig& lang,
                         const SerializeOptions& opts, const TrainHooks& hooks) {
  cfg.validate();
  if (corpus.empty()) throw Error("train: empty corpus");
  if (model_cfg.vocab_size != vocab.size())
    throw Error("train: model vocabulary size " + std::to_string(model_cfg.vocab_size) +
                " does not match the vocabulary (" + std::to_string(vocab.size()) + ")");
  const bool picker = uses_picker(cfg);
  std::vector<LabeledSample> chosen = subsample(corpus, cfg.fraction, cfg.seed);
  std::vector<EncodedSample> data;
  data.reserve(chosen.size());
  for (auto& s : chosen) {
    if (!s.sample.reference) throw Error("train: sample " + s.sample.id + " has no reference");
    if (picker) {
      if (!s.labels) throw Error("train: sample " + s.sample.id + " has no picker labels");
      const LabelMode have = s.labels->mode;
      const bool ok = have == cfg.label_mode ||
                      (cfg.label_mode == LabelMode::defined && have == LabelMode::hard) ||
                      (cfg.label_mode == LabelMode::hard && have == LabelMode::defined);
      if (!ok)
        throw Error("train: sample " + s.sample.id + " carries " + to_string(have) + " labels but the label mode is " +
                    to_string(cfg.label_mode));
    } else {
      s.labels.reset();
    }
    data.push_back(encode_sample(s, vocab, lang, opts));
    if (picker) data.back().picker.mode = cfg.label_mode;
  }
  return train(data, cfg, model_cfg, hooks);
}

std::string format_loss_log(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,step,picker_loss,generator_loss,joint_loss\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%ld,%.9g,%.9g,%.9g\n", r.epoch, r.step, r.picker_loss, r.generator_loss,
                  r.joint_loss);
    out += buf;
  }
  return out;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write loss log " + path.string());
  out << format_loss_log(log);
}

std::size_t subsample_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("subsample: fraction must be in (0, 1]");
  const double raw = fraction * static_cast<double>(n);
  // Guard against products like 0.1 * 30 = 3.0000000000000004.
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::min(n, k);
}

}  // namespace jet
