#include <algorithm>

#include "doctest.h"
#include "jet/common.hpp"
#include "jet/serializer.hpp"

using namespace jet;

namespace {

Vocabulary vocab_for(const std::vector<DialogueSample>& c) {
  return build_vocab(c, 200, LanguageConfig::english());
}

std::vector<std::string> tokens_of(const std::vector<int>& ids, const Vocabulary& v) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST_CASE("input layout") {
  const auto en = LanguageConfig::english();
  const DialogueSample s{"0", {"hello there", "hi"}, "how are you", std::nullopt};
  const Vocabulary v = vocab_for({s});
  const auto in = build_input(s, v, en);
  CHECK(tokens_of(in.ids, v) == std::vector<std::string>{"hello", "there", "[X1]", "hi", "[X1]", "how", "are", "you",
                                                          "[X2]", "</s>"});
  CHECK(in.segments[0] == Segment{SegmentKind::context, 0, 0});
  CHECK(in.segments[2] == Segment{SegmentKind::x1, 0, -1});
  CHECK(in.segments[3] == Segment{SegmentKind::context, 1, 0});
  CHECK(in.segments[5].kind == SegmentKind::incomplete);
  CHECK(in.segments[8].kind == SegmentKind::x2);
  CHECK(in.segments[9].kind == SegmentKind::eos);
  CHECK(utterance_spans(in.segments) == std::vector<std::pair<int, int>>{{0, 2}, {3, 4}, {5, 8}});

  const DialogueSample tiny{"1", {"a"}, "b", std::nullopt};
  CHECK(build_input(tiny, vocab_for({tiny}), en).ids.size() == 5);
}

TEST_CASE("oldest utterances are dropped first") {
  const auto en = LanguageConfig::english();
  const DialogueSample s{"0", {"one two three", "four five", "six"}, "seven", std::nullopt};
  const Vocabulary v = vocab_for({s});
  SerializeOptions opts;
  opts.max_input_length = 8;
  const auto in = build_input(s, v, en, opts);
  CHECK(in.dropped_utterances == 1);
  CHECK(in.ids.size() <= 8);
  CHECK(tokens_of(in.ids, v).front() == "four");
  CHECK(in.segments.front().utterance == 1);
  CHECK(in.ids.back() == Vocabulary::kEos);
  opts.max_input_length = 3;
  CHECK_THROWS_AS(build_input(s, v, en, opts), Error);
}

TEST_CASE("decoder streams") {
  const auto en = LanguageConfig::english();
  const Vocabulary v = vocab_for({{"0", {"a b"}, "c", std::string("a b")}});
  const auto d = build_target("a b", v, en);
  CHECK(d.input == std::vector<int>{Vocabulary::kSos, v.id("a"), v.id("b")});
  CHECK(d.target == std::vector<int>{v.id("a"), v.id("b"), Vocabulary::kEos});
  CHECK(build_target("a", v, en).input.size() == 2);
  const auto oov = build_target("a zzz", v, en);
  CHECK(oov.input[2] == Vocabulary::kUnk);
  CHECK(oov.target[1] == Vocabulary::kUnk);
  CHECK_THROWS_AS(build_target("", v, en), Error);
}

TEST_CASE("label alignment") {
  const auto en = LanguageConfig::english();
  const DialogueSample s{"0", {"x y z"}, "w", std::nullopt};
  const Vocabulary v = vocab_for({s});
  const auto in = build_input(s, v, en);
  PickerLabels hard;
  hard.mode = LabelMode::hard;
  hard.tags = {{BioTag::O, BioTag::B, BioTag::O}};
  const auto t = align_labels(hard, in.segments);
  CHECK(t.classes == std::vector<int>{0, 1, 0, 0, 0, 0, 0});
  CHECK(t.mask == std::vector<std::uint8_t>{1, 1, 1, 0, 1, 0, 0});
  SerializeOptions keep;
  keep.ignore_special_tokens = false;
  CHECK(align_labels(hard, in.segments, keep).mask == std::vector<std::uint8_t>(7, 1));

  PickerLabels short_labels = hard;
  short_labels.tags = {{BioTag::O, BioTag::B}};
  CHECK_THROWS_AS(align_labels(short_labels, in.segments), Error);
}

TEST_CASE("subword pieces inherit word labels") {
  auto inv = std::make_shared<SubwordInventory>();
  inv->pieces = {"para", "##mo", "##re", "tour"};
  LanguageConfig cfg = LanguageConfig::english();
  cfg.granularity = Granularity::subword;
  cfg.subwords = inv;
  const DialogueSample s{"0", {"paramore tour"}, "tour", std::nullopt};
  Vocabulary v({"<pad>", "<s>", "</s>", "<unk>", "[X1]", "[X2]", "para", "##mo", "##re", "tour"});
  const auto in = build_input(s, v, cfg);
  REQUIRE(in.ids.size() == 8);
  PickerLabels hard;
  hard.mode = LabelMode::hard;
  hard.tags = {{BioTag::B, BioTag::O}};
  CHECK(align_labels(hard, in.segments).classes == std::vector<int>{1, 2, 2, 0, 0, 0, 0, 0});
  PickerLabels soft;
  soft.mode = LabelMode::soft;
  soft.scores = {{0.7, 0.0}};
  const auto st = align_labels(soft, in.segments);
  CHECK(std::vector<double>(st.scores.begin(), st.scores.begin() + 3) == std::vector<double>{0.7, 0.7, 0.7});
}

TEST_CASE("encode a labeled sample") {
  const auto en = LanguageConfig::english();
  const DialogueSample s{"0", {"paramore formed"}, "when did they tour", std::string("when did paramore tour")};
  const Vocabulary v = vocab_for({s});
  PickerLabels labels;
  labels.mode = LabelMode::hard;
  labels.tags = {{BioTag::B, BioTag::O}};
  const auto e = encode_sample({s, labels}, v, en);
  CHECK(e.length() == e.input_ids.size());
  CHECK(e.picker.classes.size() == e.input_ids.size());
  CHECK(e.decoder_input.size() == e.decoder_target.size());
  const auto bare = encode_sample({DialogueSample{"1", {"a"}, "b", std::nullopt}, std::nullopt}, v, en);
  CHECK(bare.picker.mode == LabelMode::none);
  CHECK(bare.decoder_target.empty());
}

TEST_CASE("collate pads to the widest row") {
  EncodedSample a, b;
  a.input_ids = {7, 8, 9};
  b.input_ids = {7, 8, 9, 10, 11};
  a.decoder_input = {1, 7};
  a.decoder_target = {7, 2};
  b.decoder_input = {1};
  b.decoder_target = {2};
  const auto batch = collate({a, b});
  CHECK(batch.rows == 2);
  CHECK(batch.input_width == 5);
  CHECK(std::vector<std::uint8_t>(batch.input_mask.begin(), batch.input_mask.begin() + 5) ==
        std::vector<std::uint8_t>{1, 1, 1, 0, 0});
  CHECK(batch.input_at(0, 3) == Vocabulary::kPad);
  CHECK(batch.target_width == 2);
  CHECK(batch.input_lengths == std::vector<int>{3, 5});

  const auto single = collate({b});
  CHECK(single.input_width == 5);
  CHECK(std::all_of(single.input_mask.begin(), single.input_mask.end(), [](auto m) { return m == 1; }));
  const auto twins = collate({a, a});
  for (int c = 0; c < twins.input_width; ++c) CHECK(twins.input_at(0, c) == twins.input_at(1, c));
  CHECK_THROWS_AS(collate({}), Error);
}
