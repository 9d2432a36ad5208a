#pragma once

#include <string>
#include <vector>

#include "jet/corpus.hpp"
#include "jet/model.hpp"
#include "jet/serializer.hpp"

namespace jet {

struct DecodeOptions {
  int beam_size = 8;
  int max_len = 64;
  double length_penalty = 1.0;
  int nbest = 1;

  void validate() const;
};

struct BeamHypothesis {
  std::vector<int> tokens;  // starts with SOS; ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;

  /// Generated length, EOS included.
  int length() const { return static_cast<int>(tokens.size()) - 1; }
  double score(double length_penalty) const;
};

/// log_prob / length^penalty.
double normalized_score(double log_prob, int length, double length_penalty);

/// PAD and SOS are never generated.
bool is_generatable(int token);

/// Argmax decoding, lowest id on ties. Returns generated ids without SOS,
/// including the terminating EOS when one was produced.
std::vector<int> greedy_decode(const ModelParameters& params, const EncoderOutput& enc, int max_len);

/// Beam search. Returns finished hypotheses and the live ones left at
/// max_len, ranked by normalized score (best first).
std::vector<BeamHypothesis> beam_search(const ModelParameters& params, const EncoderOutput& enc,
                                        const DecodeOptions& opts);

/// Most probable picker class per input position (BIO ids in hard modes;
/// 1 where the importance probability reaches 0.5 in soft mode).
std::vector<int> predict_picker(const ModelParameters& params, const EncoderOutput& enc);

/// Generated ids without SOS and EOS.
std::vector<int> strip_special(const std::vector<int>& ids);

/// Tokens for ids, dropping reserved markers, then joined per language mode.
std::string detokenize_ids(const std::vector<int>& ids, const Vocabulary& vocab, const LanguageConfig& lang);

struct Restoration {
  std::string prediction;
  std::vector<std::string> nbest;  // best first, when requested
};

/// build_input, encode, beam search, detokenize.
Restoration restore(const DialogueSample& sample, const ModelParameters& params, const Vocabulary& vocab,
                    const LanguageConfig& lang, const DecodeOptions& opts, const SerializeOptions& ser = {});
std::vector<Restoration> restore_all(const std::vector<DialogueSample>& samples, const ModelParameters& params,
                                     const Vocabulary& vocab, const LanguageConfig& lang, const DecodeOptions& opts,
                                     const SerializeOptions& ser = {});

}  // namespace jet
