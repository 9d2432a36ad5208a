#include "jet/serializer.hpp"

#include <algorithm>

#include "jet/common.hpp"

namespace jet {

namespace {

struct UtteranceTokens {
  std::vector<int> ids;
  std::vector<int> words;  // word index of each piece
};

UtteranceTokens utterance_tokens(const std::string& text, const Vocabulary& vocab, const LanguageConfig& cfg) {
  UtteranceTokens out;
  const auto words = split_words(text, cfg);
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (const auto& p : word_pieces(words[w], cfg)) {
      out.ids.push_back(vocab.id(p));
      out.words.push_back(static_cast<int>(w));
    }
  }
  return out;
}

}  // namespace

EncodedInput build_input(const DialogueSample& sample, const Vocabulary& vocab, const LanguageConfig& cfg,
                         const SerializeOptions& opts) {
  sample.validate();
  std::vector<UtteranceTokens> ctx;
  ctx.reserve(sample.context.size());
  for (const auto& u : sample.context) ctx.push_back(utterance_tokens(u, vocab, cfg));
  const UtteranceTokens inc = utterance_tokens(sample.incomplete, vocab, cfg);

  std::size_t total = inc.ids.size() + 2;  // [X2] </s>
  for (const auto& u : ctx) total += u.ids.size() + 1;
  std::size_t first = 0;
  while (total > static_cast<std::size_t>(opts.max_input_length) && first + 1 < ctx.size()) {
    total -= ctx[first].ids.size() + 1;
    ++first;
  }
  if (total > static_cast<std::size_t>(opts.max_input_length))
    throw Error("sample " + sample.id + ": serialized input of " + std::to_string(total) +
                " positions exceeds max length " + std::to_string(opts.max_input_length) +
                " even with a single context utterance");

  EncodedInput out;
  out.dropped_utterances = static_cast<int>(first);
  out.ids.reserve(total);
  out.segments.reserve(total);
  for (std::size_t u = first; u < ctx.size(); ++u) {
    for (std::size_t k = 0; k < ctx[u].ids.size(); ++k) {
      out.ids.push_back(ctx[u].ids[k]);
      out.segments.push_back({SegmentKind::context, static_cast<int>(u), ctx[u].words[k]});
    }
    out.ids.push_back(Vocabulary::kX1);
    out.segments.push_back({SegmentKind::x1, static_cast<int>(u), -1});
  }
  for (std::size_t k = 0; k < inc.ids.size(); ++k) {
    out.ids.push_back(inc.ids[k]);
    out.segments.push_back({SegmentKind::incomplete, -1, inc.words[k]});
  }
  out.ids.push_back(Vocabulary::kX2);
  out.segments.push_back({SegmentKind::x2, -1, -1});
  out.ids.push_back(Vocabulary::kEos);
  out.segments.push_back({SegmentKind::eos, -1, -1});
  return out;
}

DecoderSequences build_target(const std::string& reference, const Vocabulary& vocab, const LanguageConfig& cfg) {
  const auto ids = ids_of(tokenize(reference, cfg), vocab);
  if (ids.empty()) throw Error("build_target: empty reference");
  DecoderSequences out;
  out.input.reserve(ids.size() + 1);
  out.input.push_back(Vocabulary::kSos);
  out.input.insert(out.input.end(), ids.begin(), ids.end());
  out.target = ids;
  out.target.push_back(Vocabulary::kEos);
  return out;
}

PickerTargets align_labels(const PickerLabels& labels, const std::vector<Segment>& segments,
                           const SerializeOptions& opts) {
  PickerTargets out;
  out.mode = labels.mode;
  const bool soft = labels.mode == LabelMode::soft;
  const std::size_t n = segments.size();
  if (soft)
    out.scores.assign(n, 0.0);
  else
    out.classes.assign(n, static_cast<int>(BioTag::O));
  out.mask.assign(n, 1);

  // Word counts seen per context utterance must match the label rows.
  std::vector<int> seen_words(labels.utterances(), 0);
  int prev_utt = -1;
  int prev_word = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const Segment& s = segments[i];
    switch (s.kind) {
      case SegmentKind::context: {
        if (s.utterance < 0 || static_cast<std::size_t>(s.utterance) >= labels.utterances())
          throw Error("align_labels: no labels for context utterance " + std::to_string(s.utterance));
        const auto u = static_cast<std::size_t>(s.utterance);
        const auto w = static_cast<std::size_t>(s.word);
        if (w >= labels.words_in(u))
          throw Error("align_labels: word count mismatch in context utterance " + std::to_string(u) +
                      " (labels cover " + std::to_string(labels.words_in(u)) + " words)");
        seen_words[u] = std::max(seen_words[u], s.word + 1);
        const bool continuation = s.utterance == prev_utt && s.word == prev_word;
        if (soft) {
          out.scores[i] = labels.scores[u][w];
        } else {
          BioTag t = labels.tags[u][w];
          if (t == BioTag::B && continuation) t = BioTag::I;
          out.classes[i] = static_cast<int>(t);
        }
        prev_utt = s.utterance;
        prev_word = s.word;
        continue;
      }
      case SegmentKind::incomplete:
        break;
      case SegmentKind::x1:
      case SegmentKind::x2:
      case SegmentKind::eos:
        if (opts.ignore_special_tokens) out.mask[i] = 0;
        break;
      case SegmentKind::pad:
        out.mask[i] = 0;
        break;
    }
    prev_utt = -1;
    prev_word = -1;
  }
  for (std::size_t u = 0; u < seen_words.size(); ++u) {
    const bool present = std::any_of(segments.begin(), segments.end(), [u](const Segment& s) {
      return s.kind == SegmentKind::context && s.utterance == static_cast<int>(u);
    });
    if (present && static_cast<std::size_t>(seen_words[u]) != labels.words_in(u))
      throw Error("align_labels: word count mismatch in context utterance " + std::to_string(u) +
                  " (serialized " + std::to_string(seen_words[u]) + " words, labels cover " +
                  std::to_string(labels.words_in(u)) + ")");
  }
  return out;
}

EncodedSample encode_sample(const LabeledSample& sample, const Vocabulary& vocab, const LanguageConfig& cfg,
                            const SerializeOptions& opts) {
  EncodedInput input = build_input(sample.sample, vocab, cfg, opts);
  EncodedSample out;
  out.input_ids = std::move(input.ids);
  out.segments = std::move(input.segments);
  if (sample.labels) {
    out.picker = align_labels(*sample.labels, out.segments, opts);
  } else {
    out.picker.mode = LabelMode::none;
  }
  if (sample.sample.reference) {
    auto dec = build_target(*sample.sample.reference, vocab, cfg);
    out.decoder_input = std::move(dec.input);
    out.decoder_target = std::move(dec.target);
  }
  return out;
}

std::vector<std::pair<int, int>> utterance_spans(const std::vector<Segment>& segments) {
  std::vector<std::pair<int, int>> spans;
  int start = 0;
  for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
    const auto kind = segments[static_cast<std::size_t>(i)].kind;
    if (kind == SegmentKind::x1 || kind == SegmentKind::x2) {
      spans.emplace_back(start, i);
      start = i + 1;
    }
  }
  return spans;
}

EncodedBatch collate(const std::vector<EncodedSample>& samples, int pad_id) {
  if (samples.empty()) throw Error("collate: empty batch");
  EncodedBatch b;
  b.rows = static_cast<int>(samples.size());
  b.mode = samples.front().picker.mode;
  for (const auto& s : samples) {
    b.input_width = std::max(b.input_width, static_cast<int>(s.input_ids.size()));
    b.target_width = std::max(b.target_width, static_cast<int>(s.decoder_target.size()));
  }
  const auto in_cells = static_cast<std::size_t>(b.rows * b.input_width);
  const auto tgt_cells = static_cast<std::size_t>(b.rows * b.target_width);
  b.input_ids.assign(in_cells, pad_id);
  b.input_mask.assign(in_cells, 0);
  b.picker_mask.assign(in_cells, 0);
  if (b.mode == LabelMode::soft)
    b.picker_scores.assign(in_cells, 0.0);
  else
    b.picker_classes.assign(in_cells, static_cast<int>(BioTag::O));
  b.decoder_input.assign(tgt_cells, pad_id);
  b.decoder_target.assign(tgt_cells, pad_id);
  b.target_mask.assign(tgt_cells, 0);
  for (int r = 0; r < b.rows; ++r) {
    const auto& s = samples[static_cast<std::size_t>(r)];
    if (s.picker.mode != b.mode) throw Error("collate: mixed label modes in one batch");
    const auto base = static_cast<std::size_t>(r * b.input_width);
    for (std::size_t c = 0; c < s.input_ids.size(); ++c) {
      b.input_ids[base + c] = s.input_ids[c];
      b.input_mask[base + c] = 1;
      if (!s.picker.mask.empty()) {
        b.picker_mask[base + c] = s.picker.mask[c];
        if (b.mode == LabelMode::soft)
          b.picker_scores[base + c] = s.picker.scores[c];
        else
          b.picker_classes[base + c] = s.picker.classes[c];
      }
    }
    const auto tbase = static_cast<std::size_t>(r * b.target_width);
    for (std::size_t c = 0; c < s.decoder_target.size(); ++c) {
      b.decoder_input[tbase + c] = s.decoder_input[c];
      b.decoder_target[tbase + c] = s.decoder_target[c];
      b.target_mask[tbase + c] = 1;
    }
    b.input_lengths.push_back(static_cast<int>(s.input_ids.size()));
    b.target_lengths.push_back(static_cast<int>(s.decoder_target.size()));
  }
  return b;
}

}  // namespace jet
