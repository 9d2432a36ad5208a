#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "jet/common.hpp"
#include "jet/evaluation.hpp"

using namespace jet;
namespace fs = std::filesystem;

namespace {

Tokens T(const std::string& s) { return split_words(s, LanguageConfig::english()); }

}  // namespace

TEST_CASE("rouge") {
  CHECK(rouge_n(T("a b c"), T("a b c"), 1) == 1.0);
  CHECK(rouge_n(T("a b c"), T("a b d"), 1) == doctest::Approx(2.0 / 3.0));
  CHECK(rouge_n(T("a b"), T("c d"), 1) == 0.0);
  CHECK(rouge_n(T("a"), T("a"), 2) == 0.0);
  CHECK(rouge_n(T("a b c"), T("a b d e"), 2) == rouge_n(T("a b d e"), T("a b c"), 2));
}

TEST_CASE("bleu") {
  CHECK(bleu_n({{T("a b c"), T("a b c")}}, 3) == doctest::Approx(1.0));
  CHECK(bleu_n({{T("a b c d"), T("a b c e")}}, 2) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  // Half-length prediction with perfect precision pays exp(1 - 2).
  CHECK(bleu_n({{T("a b"), T("a b c d")}}, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(bleu_n({{T("a b"), T("c d")}}, 1) == 0.0);
  CHECK_THROWS_AS(bleu_n({}, 2), Error);
  for (int n = 1; n <= 4; ++n) CHECK(bleu_n({{T("w x y z"), T("w x y z")}}, n) == doctest::Approx(1.0));
  CHECK(sentence_bleu(T("a b c d"), T("a b c d"), 4) == doctest::Approx(1.0));
  CHECK(sentence_bleu(T("a b c d"), T("a b x y"), 4) > 0.0);
}

TEST_CASE("restoration f-score") {
  CHECK(restoration_f(T("when did paramore tour"), T("when did paramore tour"), T("when did they tour"), 1) == 1.0);
  CHECK(restoration_f(T("when did they tour"), T("when did paramore tour"), T("when did they tour"), 1) == 0.0);
  CHECK(restoration_f(T("is it good"), T("is it good"), T("is it good"), 1) == 1.0);
  // One shared restored bigram: P = 1/2, R = 1/3.
  const double f2 = restoration_f(T("did paramore tour"), T("did paramore start tour"), T("did tour"), 2);
  CHECK(f2 == doctest::Approx(0.4));
}

TEST_CASE("exact match") {
  CHECK(exact_match("a b", "a b") == 1);
  CHECK(exact_match("a b ", "a b") == 1);
  CHECK(exact_match("a  b", "a b") == 1);
  CHECK(exact_match("a c", "a b") == 0);
}

TEST_CASE("pickup ratio") {
  std::vector<PickupItem> items = {
      {{"x", "paramor"}, {"paramor"}}, {{"sushi"}, {"sushi"}}, {{"y"}, {"pari"}}};
  CHECK(pickup_ratio(items, PickupMode::any) == doctest::Approx(2.0 / 3.0));
  std::vector<PickupItem> excluded = {{{"a"}, {}}, {{"a"}, {}}, {{"b"}, {"b"}}};
  CHECK(pickup_ratio(excluded, PickupMode::any) == 1.0);
  std::vector<PickupItem> half = {{{"a"}, {"a", "b"}}};
  CHECK(pickup_ratio(half, PickupMode::all) == 0.0);
  CHECK(pickup_ratio(half, PickupMode::any) == 1.0);
  CHECK_THROWS_AS(pickup_ratio({{{"a"}, {}}}, PickupMode::any), Error);
  CHECK(parse_pickup_mode("all") == PickupMode::all);
  CHECK_THROWS_AS(parse_pickup_mode("some"), Error);
}

TEST_CASE("length difference") {
  CHECK(length_difference({{"aaaaaaaaaa", "bbbbbbbbbbb"}, {"cccccccccccc", "ddddddddddd"}}) == 1.0);
  CHECK(length_difference({{"same", "same"}}) == 0.0);
  CHECK(length_difference({{"aaaaa", "bbbbbbbbb"}}) == 4.0);
  CHECK(length_difference({{"你好", "ab"}}) == 0.0);
}

TEST_CASE("length buckets") {
  const auto buckets = default_length_buckets();
  auto item = [](std::size_t chars) { return LengthItem{T("a b c d"), T("a b c d"), chars}; };
  auto r = bleu_by_length({item(50), item(50)}, 4, buckets);
  CHECK(r.size() == 1);
  CHECK(r.count("<100") == 1);
  r = bleu_by_length({item(100)}, 4, buckets);
  CHECK(r.count("100-200") == 1);
  r = bleu_by_length({item(99), item(250)}, 4, buckets);
  CHECK(r.at("<100") == doctest::Approx(1.0));
  CHECK(r.at(">=200") == doctest::Approx(1.0));
  CHECK_THROWS_AS(bleu_by_length({item(1)}, 4, {{"a", 0, 10}}), Error);
  CHECK_THROWS_AS(bleu_by_length({item(1)}, 4, {{"a", 0, 10}, {"b", 20, std::nullopt}}), Error);
}

TEST_CASE("bio spans") {
  CHECK(bio_spans({0, 1, 2, 0, 1}) == std::vector<std::pair<int, int>>{{1, 3}, {4, 5}});
  CHECK(bio_spans({2, 2, 0}) == std::vector<std::pair<int, int>>{{0, 2}});
  CHECK(bio_spans({1, 1}) == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  CHECK(bio_span_f1({{0, 1, 2}}, {{0, 1, 2}}) == 1.0);
  CHECK(bio_span_f1({{0, 0}}, {{0, 0}}) == 1.0);
  CHECK(bio_span_f1({{1, 2, 0}}, {{1, 0, 0}}) == 0.0);
  CHECK(bio_span_f1({{1, 0, 1}}, {{1, 0, 0}}) == doctest::Approx(2.0 / 3.0));
}

namespace {

std::vector<DialogueSample> gold_fixture() {
  return {{"0", {"paramore formed in 2004"}, "when did they tour", std::string("when did paramore tour")},
          {"1", {"i like sushi"}, "is it healthy", std::string("is sushi healthy")},
          {"2", {"we went to paris"}, "was it nice", std::string("was paris nice")}};
}

}  // namespace

TEST_CASE("perfect and copy baselines") {
  const auto gold = gold_fixture();
  std::unordered_map<std::string, std::string> perfect, copy;
  std::unordered_map<std::string, std::set<std::string>> important = {
      {"0", {"paramor"}}, {"1", {"sushi"}}, {"2", {"pari"}}};
  for (const auto& s : gold) {
    perfect[s.id] = *s.reference;
    copy[s.id] = s.incomplete;
  }
  const auto rep = evaluate(perfect, gold, important, EvalConfig{});
  for (double v : {rep.rouge1, rep.rouge2, rep.bleu1, rep.bleu2, rep.bleu4, rep.f1, rep.f2, rep.f3, rep.em})
    CHECK(v == doctest::Approx(100.0));
  CHECK(*rep.pickup_ratio == 100.0);
  CHECK(rep.difference == 0.0);
  CHECK(rep.bleu_by_length.at("<100") == doctest::Approx(100.0));

  const auto base = evaluate(copy, gold, important, EvalConfig{});
  CHECK(base.f1 == 0.0);
  CHECK(base.f2 == 0.0);
  CHECK(base.f3 == 0.0);
  CHECK(*base.pickup_ratio == 0.0);

  std::unordered_map<std::string, std::string> missing = perfect;
  missing.erase("1");
  try {
    evaluate(missing, gold, important, EvalConfig{});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
}

TEST_CASE("metrics ignore sample order") {
  auto gold = gold_fixture();
  std::unordered_map<std::string, std::string> preds = {
      {"0", "when did paramore tour"}, {"1", "is it sushi healthy"}, {"2", "was nice paris"}};
  const auto a = evaluate(preds, gold, {}, EvalConfig{});
  std::reverse(gold.begin(), gold.end());
  const auto b = evaluate(preds, gold, {}, EvalConfig{});
  CHECK(a.to_json() == b.to_json());
  CHECK_FALSE(a.pickup_ratio.has_value());
}

TEST_CASE("report formatting") {
  const auto gold = gold_fixture();
  std::unordered_map<std::string, std::string> preds = {
      {"0", "when did paramore tour"}, {"1", "is sushi healthy"}, {"2", "was it nice"}};
  const auto rep = evaluate(preds, gold, {}, EvalConfig{});
  const std::string j = rep.to_json();
  CHECK(j.find("\"em\": 66.7") != std::string::npos);
  CHECK(rep.to_table().find("66.7") != std::string::npos);
}

TEST_CASE("prediction files") {
  const fs::path p = fs::temp_directory_path() / "jet_preds.jsonl";
  {
    std::ofstream out(p);
    out << R"({"id":"a","prediction":"x y"})" << "\n" << R"({"id":"b","prediction":""})" << "\n";
  }
  const auto preds = load_predictions(p);
  CHECK(preds.at("a") == "x y");
  CHECK(preds.at("b").empty());
  {
    std::ofstream out(p);
    out << R"({"id":"a","prediction":"x"})" << "\n" << R"({"id":"a","prediction":"y"})" << "\n";
  }
  CHECK_THROWS_AS(load_predictions(p), Error);
  fs::remove(p);
  CHECK(input_length({"0", {"ab", "c"}, "de", std::nullopt}) == 7);
}
