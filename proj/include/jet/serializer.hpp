#pragma once

#include <cstdint>
#include <vector>

#include "jet/corpus.hpp"
#include "jet/labeler.hpp"

namespace jet {

enum class SegmentKind : std::uint8_t { context, incomplete, x1, x2, eos, pad };

/// Where one serialized input position came from. `utterance` indexes the
/// original context (or -1 outside the context) and `word` the word within
/// that utterance (or -1 for special tokens).
struct Segment {
  SegmentKind kind;
  int utterance = -1;
  int word = -1;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct SerializeOptions {
  int max_input_length = 512;
  /// Special-token positions carry no picker supervision when true.
  bool ignore_special_tokens = true;
};

struct EncodedInput {
  std::vector<int> ids;
  std::vector<Segment> segments;
  int dropped_utterances = 0;
};

/// Picker supervision aligned to input positions. Hard modes use `classes`
/// (BioTag values), soft mode uses `scores`; `mask` is 0 where ignored.
struct PickerTargets {
  LabelMode mode = LabelMode::none;
  std::vector<int> classes;
  std::vector<double> scores;
  std::vector<std::uint8_t> mask;
};

struct EncodedSample {
  std::vector<int> input_ids;
  std::vector<Segment> segments;
  PickerTargets picker;
  std::vector<int> decoder_input;   // SOS r_1 .. r_k
  std::vector<int> decoder_target;  // r_1 .. r_k EOS

  std::size_t length() const { return input_ids.size(); }
};

/// Layout h_1 [X1] ... h_m [X1] u_1..u_n [X2] </s>. Oldest context
/// utterances are dropped first when the layout exceeds the maximum length.
EncodedInput build_input(const DialogueSample& sample, const Vocabulary& vocab, const LanguageConfig& cfg,
                         const SerializeOptions& opts = {});

struct DecoderSequences {
  std::vector<int> input;
  std::vector<int> target;
};
DecoderSequences build_target(const std::string& reference, const Vocabulary& vocab, const LanguageConfig& cfg);

/// Maps word-level labels onto serialized positions.
PickerTargets align_labels(const PickerLabels& labels, const std::vector<Segment>& segments,
                           const SerializeOptions& opts = {});

/// Full encoding of a (possibly labeled) sample. Without labels the picker
/// targets are empty with mode none; without a reference the decoder streams
/// are empty.
EncodedSample encode_sample(const LabeledSample& sample, const Vocabulary& vocab, const LanguageConfig& cfg,
                            const SerializeOptions& opts = {});

/// Recovers, per original context utterance, its [first, last) input position
/// span, followed by the incomplete utterance span.
std::vector<std::pair<int, int>> utterance_spans(const std::vector<Segment>& segments);

/// Right-padded batch, row-major matrices of shape rows x width.
struct EncodedBatch {
  int rows = 0;
  int input_width = 0;
  int target_width = 0;
  LabelMode mode = LabelMode::none;
  std::vector<int> input_ids;
  std::vector<std::uint8_t> input_mask;
  std::vector<int> picker_classes;
  std::vector<double> picker_scores;
  std::vector<std::uint8_t> picker_mask;
  std::vector<int> decoder_input;
  std::vector<int> decoder_target;
  std::vector<std::uint8_t> target_mask;
  std::vector<int> input_lengths;
  std::vector<int> target_lengths;

  int input_at(int r, int c) const { return input_ids[static_cast<std::size_t>(r * input_width + c)]; }
  std::uint8_t mask_at(int r, int c) const { return input_mask[static_cast<std::size_t>(r * input_width + c)]; }
};

EncodedBatch collate(const std::vector<EncodedSample>& samples, int pad_id = Vocabulary::kPad);

}  // namespace jet
