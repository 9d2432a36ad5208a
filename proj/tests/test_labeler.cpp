#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "jet/common.hpp"
#include "jet/labeler.hpp"
#include "jet/morphology.hpp"

using namespace jet;
namespace fs = std::filesystem;

namespace {

std::vector<BioTag> tags(const char* s) {
  std::vector<BioTag> out;
  for (; *s; ++s) out.push_back(parse_bio(std::string(1, *s)));
  return out;
}

ScoreMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  ScoreMatrix d;
  d.rows = rows;
  d.cols = cols;
  d.values = std::move(v);
  return d;
}

}  // namespace

TEST_CASE("normalize drops stopwords and keeps indices") {
  const auto en = LanguageConfig::english();
  // "albums" lemmatizes to "album", which the stemmer leaves unchanged.
  const auto out = normalize({"the", "albums"}, en);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == NormalizedToken{1, "album"});
  CHECK(normalize({"the", "of", "and"}, en).empty());
  CHECK(normalize({"?", "paramore"}, en) == std::vector<NormalizedToken>{{1, "paramor"}});

  LanguageConfig zh = LanguageConfig::chinese();
  zh.stopwords = std::make_shared<StopwordSet>(StopwordSet{"们"});
  CHECK(normalize({"他", "们"}, zh) == std::vector<NormalizedToken>{{0, "他"}});
}

TEST_CASE("clue tokens are the normalized set difference") {
  const auto en = LanguageConfig::english();
  const auto clues = extract_clue_tokens("when did paramore tour", "when did they tour", en);
  CHECK(clues.tokens == std::set<std::string>{"paramor"});
  CHECK(clues.surface_forms.at("paramor") == std::vector<std::string>{"paramore"});
  CHECK(extract_clue_tokens("is it good", "is it good", en).empty());
  CHECK(extract_clue_tokens("is it the good", "is it good", en).empty());
  // Inflected forms of the same word are not clues.
  CHECK(extract_clue_tokens("show the albums", "show the album", en).empty());
}

TEST_CASE("cosine similarity") {
  CHECK(similarity({3, 4}, {3, 4}) == doctest::Approx(1.0));
  CHECK(similarity({1, 0}, {0, 1}) == 0.0);
  CHECK(similarity({1, 2, 2}, {2, 1, 2}) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(similarity({0, 0}, {1, 1}) == 0.0);
  CHECK_THROWS_AS(similarity({1}, {1, 2}), Error);
}

TEST_CASE("score matrix") {
  EmbeddingTable emb(2, EmbeddingTable::Fallback::zero);
  emb.add("x", {1, 0});
  emb.add("y", {1, 1});
  emb.add("c", {0, 1});
  ClueTokenSet clues;
  clues.tokens = {"c"};
  const auto d = score_matrix({{"x", "x"}, {"y", "y"}}, clues, emb);
  REQUIRE(d.rows == 2);
  REQUIRE(d.cols == 1);
  CHECK(d.at(0, 0) == 0.0);
  CHECK(d.at(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  // Exact matches score 1 even without vectors.
  ClueTokenSet unknown;
  unknown.tokens = {"zzz"};
  CHECK(score_matrix({{"zzz", "zzz"}}, unknown, emb).at(0, 0) == 1.0);
  // Parallel vectors of different forms stay below 1.
  emb.add("c2", {0, 5});
  CHECK(score_matrix({{"c2", "c2"}}, clues, emb).at(0, 0) < 1.0);
  CHECK(score_matrix({{"x", "x"}}, ClueTokenSet{}, emb).cols == 0);
}

TEST_CASE("soft and hard label formulas") {
  CHECK(soft_label({0.3, 0.9, 0.1}) == 0.9);
  CHECK(soft_label({-0.2}) == 0.0);
  CHECK(soft_label({1.0, 0.5}) == 1.0);
  CHECK(soft_label({}) == 0.0);
  CHECK(hard_label({1.0, 0.4}) == 1);
  CHECK(hard_label({0.999}) == 0);
  CHECK(hard_label({}) == 0);
  const auto d = matrix(2, 2, {0.2, 1.0, -0.5, 0.7});
  CHECK(soft_labels(d) == std::vector<double>{1.0, 0.7});
  CHECK(hard_labels(d) == std::vector<std::uint8_t>{1, 0});
  CHECK(soft_labels(matrix(2, 0, {})) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("bio conversion") {
  CHECK(to_bio({0, 1, 0}) == tags("OBO"));
  CHECK(to_bio({0, 1, 1}) == tags("OBI"));
  CHECK(to_bio({0, 0, 0}) == tags("OOO"));
  CHECK(to_bio({1, 1, 0, 1}) == tags("BIOB"));
  CHECK(to_bio({}).empty());
  CHECK_THROWS_AS(parse_bio("X"), Error);
}

TEST_CASE("label a sample") {
  const auto en = LanguageConfig::english();
  const auto emb = EmbeddingTable::hashed(16, 1);
  const DialogueSample s{"0", {"paramore formed in 2004"}, "when did they start to tour",
                         std::string("when did paramore start to tour")};
  const auto hard = label_sample(s, LabelMode::hard, emb, en);
  REQUIRE(hard.labels);
  CHECK(hard.labels->tags[0] == tags("BOOO"));
  CHECK(important_tokens(hard, en) == std::set<std::string>{"paramor"});

  const DialogueSample same{"1", {"paramore formed in 2004"}, "when did they tour",
                            std::string("when did they tour")};
  CHECK(label_sample(same, LabelMode::hard, emb, en).labels->tags[0] == tags("OOOO"));
  const auto zero = label_sample(same, LabelMode::soft, emb, en);
  CHECK(zero.labels->scores[0] == std::vector<double>(4, 0.0));

  const DialogueSample albums{"2", {"i love their albums"}, "play one", std::string("play one album")};
  const auto soft = label_sample(albums, LabelMode::soft, emb, en);
  CHECK(soft.labels->scores[0][3] == 1.0);

  DialogueSample no_ref = s;
  no_ref.reference.reset();
  CHECK_THROWS_AS(label_sample(no_ref, LabelMode::hard, emb, en), Error);
  CHECK_THROWS_AS(label_sample(s, LabelMode::none, emb, en), Error);
}

TEST_CASE("label invariants on random matrices") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(5);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform() < 0.15 ? 1.0 : 2.0 * rng.uniform() - 1.0;
    const auto d = matrix(rows, cols, v);
    const auto soft = soft_labels(d);
    const auto hard = hard_labels(d);

    // Permuting clue columns changes nothing.
    std::vector<std::size_t> perm(cols);
    for (std::size_t j = 0; j < cols; ++j) perm[j] = j;
    rng.shuffle(perm);
    std::vector<double> pv(v.size());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) pv[i * cols + j] = v[i * cols + perm[j]];
    CHECK(soft_labels(matrix(rows, cols, pv)) == soft);
    CHECK(hard_labels(matrix(rows, cols, pv)) == hard);

    // Adding a clue column never lowers a soft score.
    std::vector<double> wider;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) wider.push_back(v[i * cols + j]);
      wider.push_back(2.0 * rng.uniform() - 1.0);
    }
    const auto more = soft_labels(matrix(rows, cols + 1, wider));
    for (std::size_t i = 0; i < rows; ++i) {
      CHECK(more[i] >= soft[i]);
      CHECK(soft[i] >= hard[i]);
      CHECK(soft[i] >= 0.0);
      CHECK(soft[i] <= 1.0);
    }

    // BIO well-formedness.
    const auto bio = to_bio(hard);
    for (std::size_t i = 0; i < bio.size(); ++i) {
      if (bio[i] == BioTag::I) CHECK((i > 0 && bio[i - 1] != BioTag::O));
    }
  }
}

TEST_CASE("embedding tables") {
  const fs::path p = fs::temp_directory_path() / "jet_vectors.txt";
  {
    std::ofstream out(p);
    out << "2 3\nalbum 1 0 0\nband 0 1 0\n";
  }
  const auto t = EmbeddingTable::load_text(p, EmbeddingTable::Fallback::zero);
  CHECK(t.dimension() == 3);
  CHECK(t.stored() == 2);
  CHECK(t.lookup("band") == std::optional<std::vector<double>>({0, 1, 0}));
  CHECK_FALSE(t.lookup("nope").has_value());
  {
    std::ofstream out(p);
    out << "1 3\nalbum 1 0\n";
  }
  CHECK_THROWS_AS(EmbeddingTable::load_text(p, EmbeddingTable::Fallback::zero), Error);
  fs::remove(p);

  const auto h1 = EmbeddingTable::hashed(8, 4), h2 = EmbeddingTable::hashed(8, 4);
  CHECK(h1.lookup("word") == h2.lookup("word"));
  CHECK(h1.lookup("word") != h1.lookup("other"));
  CHECK(h1.lookup("word")->size() == 8);
  CHECK_THROWS_AS(EmbeddingTable(0, EmbeddingTable::Fallback::zero), Error);
}

TEST_CASE("labeled corpus round trip") {
  const auto en = LanguageConfig::english();
  const auto emb = EmbeddingTable::hashed(8, 0);
  const DialogueSample s{"a", {"paramore formed in 2004", "nice"}, "when did they tour",
                         std::string("when did paramore tour")};
  const fs::path p = fs::temp_directory_path() / "jet_labeled.jsonl";
  for (LabelMode mode : {LabelMode::hard, LabelMode::soft}) {
    const auto ls = label_sample(s, mode, emb, en);
    save_labeled_corpus(p, {ls});
    const auto back = load_labeled_corpus(p);
    REQUIRE(back.size() == 1);
    REQUIRE(back[0].labels);
    CHECK(back[0].labels->mode == mode);
    CHECK(back[0].labels->tags == ls.labels->tags);
    CHECK(back[0].labels->scores == ls.labels->scores);
    CHECK(label_density(back) == label_density({ls}));
  }
  {
    std::ofstream out(p);
    out << R"({"context":["a b"],"utterance":"c","labels":{"mode":"hard","tags":[["I","O"]]}})" << "\n";
  }
  CHECK_THROWS_AS(load_labeled_corpus(p), Error);
  fs::remove(p);
}
