#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jet/common.hpp"
#include "jet/labeler.hpp"
#include "jet/model.hpp"
#include "jet/serializer.hpp"

namespace jet {

struct TrainConfig {
  double alpha = 1.0;
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  int batch_size = 12;
  int epochs = 20;
  std::uint64_t seed = 0;
  LabelMode label_mode = LabelMode::hard;
  double fraction = 1.0;
  int checkpoint_every = 0;  // epochs between periodic checkpoints; 0 disables
  double clip_norm = 1.0;    // global gradient norm cap; 0 disables

  void validate() const;
};

struct TrainState {
  ModelParameters params;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
  int epoch = 0;
  int skipped_steps = 0;  // optimizer steps dropped for non-finite gradients
  double picker_loss = 0.0;
  double generator_loss = 0.0;
  double joint_loss = 0.0;

  static TrainState fresh(ModelParameters params);
};

/// Mean cross-entropy over unmasked positions. `predictions` is n x 3 class
/// probabilities (hard modes) or n x 1 importance probabilities (soft mode).
double picker_loss(const Matrix& predictions, const PickerTargets& targets);
/// Mean negative log-likelihood of the targets over unmasked steps.
double generator_loss(const Matrix& distributions, std::span<const int> targets,
                      std::span<const std::uint8_t> mask = {});
double joint_loss(double lp, double lg, double alpha);

struct BatchLoss {
  double picker = 0.0;
  double generator = 0.0;
  double joint = 0.0;
  int picker_positions = 0;
  int target_positions = 0;
};

/// Joint loss of one batch, means taken over every unmasked position of the
/// batch. When `grads` is set the gradient of the joint loss is accumulated
/// into it. `with_picker` false skips the picker head entirely; with it true
/// the head is evaluated even for alpha 0.
BatchLoss batch_loss(const ModelParameters& params, std::span<const EncodedSample* const> batch, double alpha,
                     bool with_picker, Gradients* grads = nullptr, Rng* dropout_rng = nullptr);

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

/// One AdamW update. Returns false (and counts a skipped step) when any
/// gradient is non-finite; the parameters are then left untouched.
bool optimizer_step(TrainState& state, const Gradients& grads, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  long step = 0;
  double picker_loss = 0.0;
  double generator_loss = 0.0;
  double joint_loss = 0.0;
};

struct TrainHooks {
  /// Called after every epoch with the state and its log row.
  std::function<void(const TrainState&, const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TrainState state;
  std::vector<EpochRecord> log;
  std::size_t samples = 0;
};

/// Trains from freshly initialized parameters on encoded samples.
TrainResult train(const std::vector<EncodedSample>& data, const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const TrainHooks& hooks = {});

/// Checks labels against the mode, subsamples, encodes and trains.
TrainResult train_corpus(const std::vector<LabeledSample>& corpus, const TrainConfig& cfg,
                         const ModelConfig& model_cfg, const Vocabulary& vocab, const LanguageConfig& lang,
                         const SerializeOptions& opts = {}, const TrainHooks& hooks = {});

/// CSV with header epoch,step,picker_loss,generator_loss,joint_loss.
std::string format_loss_log(const std::vector<EpochRecord>& log);
void write_loss_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

/// Number of items subsample keeps from `n`.
std::size_t subsample_count(std::size_t n, double fraction);

/// Uniform sample without replacement of ceil(fraction * N) items; survivors
/// keep their original order.
template <class T>
std::vector<T> subsample(const std::vector<T>& corpus, double fraction, std::uint64_t seed) {
  const std::size_t k = subsample_count(corpus.size(), fraction);
  if (k == corpus.size()) return corpus;
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(k);
  for (auto i : idx) out.push_back(corpus[i]);
  return out;
}

}  // namespace jet
