#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "jet/common.hpp"
#include "jet/model.hpp"

using namespace jet;
namespace fs = std::filesystem;

namespace {

ModelConfig small(int arity = 3) {
  ModelConfig cfg;
  cfg.vocab_size = 30;
  cfg.d_model = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.ffn_inner = 16;
  cfg.picker_arity = arity;
  cfg.picker_widths = {8, 6, 4, arity};
  cfg.dropout = 0.0;
  cfg.seed = 17;
  return cfg;
}

std::vector<int> random_ids(Rng& rng, int n, int vocab) {
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) ids.push_back(3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 3))));
  return ids;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = small();
  CHECK(cfg.head_width() == 4);
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small();
  cfg.picker_widths = {8, 4, 2};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  const ModelConfig toy = ModelConfig::toy(100);
  CHECK(toy.d_model == 64);
  CHECK(toy.layers == 2);
  CHECK(toy.heads == 4);
  CHECK(toy.ffn_inner == 128);
  CHECK(toy.picker_widths == std::vector<int>{64, 32, 16, 3});
  CHECK(ModelConfig::toy(100, 1).picker_widths.back() == 1);
}

TEST_CASE("initialization is seed-deterministic") {
  const auto a = init_parameters(small()), b = init_parameters(small());
  REQUIRE(a.count() == b.count());
  for (std::size_t i = 0; i < a.count(); ++i) CHECK(a.tensors()[i].value == b.tensors()[i].value);
  ModelConfig other = small();
  other.seed = 18;
  CHECK(init_parameters(other).get("lm_head") != a.get("lm_head"));
  CHECK(a.get("encoder.final_norm") == Matrix::Ones(1, 8));
  CHECK(a.get("picker.b0") == Matrix::Zero(1, 6));
  CHECK(a.all_finite());
  CHECK(a.is_picker(static_cast<std::size_t>(a.index_of("picker.w0"))));
  CHECK_FALSE(a.is_picker(static_cast<std::size_t>(a.index_of("lm_head"))));
  CHECK_THROWS_AS(a.index_of("missing"), Error);
}

TEST_CASE("relative buckets match the reference scheme") {
  // Frozen from a standalone implementation of the T5 bucketing formula.
  const std::vector<std::array<int, 3>> cases = {{0, 0, 0},     {1, 17, 0},    {-1, 1, 1},   {7, 23, 0},
                                                 {8, 24, 0},    {-8, 8, 8},    {15, 25, 0},  {-20, 10, 17},
                                                 {50, 29, 0},   {-50, 13, 24}, {127, 31, 0}, {200, 31, 0},
                                                 {-1000, 15, 31}};
  for (const auto& [rel, bi, uni] : cases) {
    CAPTURE(rel);
    CHECK(relative_bucket(rel, true, 32, 128) == bi);
    CHECK(relative_bucket(rel, false, 32, 128) == uni);
  }
}

TEST_CASE("embedding lookup") {
  const auto p = init_parameters(small());
  const std::vector<int> one = {5};
  CHECK(embed(one, p) == p.get("shared.embedding").row(5));
  const std::vector<int> twice = {5, 5};
  const Matrix e = embed(twice, p);
  CHECK(e.row(0) == e.row(1));

  ModelConfig add_cfg = small();
  add_cfg.position_mode = PositionMode::additive;
  const auto pa = init_parameters(add_cfg);
  const Matrix ea = embed(twice, pa);
  const Matrix diff = ea.row(0) - ea.row(1);
  const Matrix expect = sinusoidal_position(0, 8) - sinusoidal_position(1, 8);
  CHECK((diff - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sinusoidal_position(0, 8)(0, 0) == 0.0);
  CHECK(sinusoidal_position(0, 8)(0, 1) == 1.0);
}

TEST_CASE("encoder shape and padding invariance") {
  const auto p = init_parameters(small());
  Rng rng(2);
  ModelConfig one_layer = small();
  one_layer.layers = 1;
  const auto p1 = init_parameters(one_layer);
  const auto ids = random_ids(rng, 6, 30);
  const auto enc1 = encode(ids, {}, p1);
  CHECK(enc1.states.rows() == 6);
  CHECK(enc1.states.cols() == 8);

  for (int pad : {1, 4}) {
    std::vector<int> padded = ids;
    std::vector<std::uint8_t> mask(ids.size(), 1);
    for (int k = 0; k < pad; ++k) {
      padded.push_back(0);
      mask.push_back(0);
    }
    const auto plain = encode(ids, {}, p);
    const auto enc = encode(padded, mask, p);
    CHECK((enc.states.topRows(6) - plain.states).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(enc.states.bottomRows(pad).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("batched encoding matches per-row encoding") {
  const auto p = init_parameters(small());
  const std::vector<int> ids = {7, 8, 9, 0, 0, 10, 11, 12, 13, 14};
  const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0, 1, 1, 1, 1, 1};
  const auto rows = encode_batch(ids, mask, 2, 5, p);
  REQUIRE(rows.size() == 2);
  const std::vector<int> first = {7, 8, 9};
  CHECK((rows[0].states.topRows(3) - encode(first, {}, p).states).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("picker output ranges") {
  Rng rng(3);
  const auto ids = random_ids(rng, 7, 30);
  const auto hard = init_parameters(small(3));
  const Matrix probs = picker_forward(encode(ids, {}, hard), hard);
  CHECK(probs.cols() == 3);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));

  const auto soft = init_parameters(small(1));
  const Matrix s = picker_forward(encode(ids, {}, soft), soft);
  CHECK(s.cols() == 1);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    CHECK(s(i, 0) > 0.0);
    CHECK(s(i, 0) < 1.0);
  }

  auto zeroed = init_parameters(small(3));
  for (auto& t : zeroed.tensors()) {
    if (t.name.rfind("picker.", 0) == 0) t.value.setZero();
  }
  const Matrix u = picker_forward(encode(ids, {}, zeroed), zeroed);
  CHECK((u.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("decoder distributions, causality and encoder masking") {
  const auto p = init_parameters(small());
  Rng rng(4);
  auto ids = random_ids(rng, 6, 30);
  std::vector<std::uint8_t> mask = {1, 1, 1, 1, 0, 0};
  const auto enc = encode(ids, mask, p);
  const std::vector<int> dec = {1, 7, 8};
  const Matrix d = decode_forward(enc, dec, p);
  CHECK(d.rows() == 3);
  CHECK(d.cols() == 30);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(d.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));

  const std::vector<int> longer = {1, 7, 8, 9};
  const Matrix d2 = decode_forward(enc, longer, p);
  CHECK((d2.topRows(3) - d).cwiseAbs().maxCoeff() < 1e-12);

  ids[5] = 25;
  EncoderOutput perturbed = encode(ids, mask, p);
  perturbed.states.row(4).setConstant(3.0);
  CHECK((decode_forward(perturbed, dec, p) - d).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("incremental decoder matches the full decoder") {
  for (PositionMode mode : {PositionMode::relative_bias, PositionMode::additive}) {
    ModelConfig cfg = small();
    cfg.position_mode = mode;
    const auto p = init_parameters(cfg);
    Rng rng(5);
    const auto ids = random_ids(rng, 5, 30);
    const auto enc = encode(ids, {}, p);
    const std::vector<int> dec = {1, 9, 4, 12, 20, 3};
    const Matrix full = decode_forward(enc, dec, p);
    IncrementalDecoder inc(p, enc);
    auto state = inc.start();
    for (std::size_t t = 0; t < dec.size(); ++t) {
      const Eigen::VectorXd lp = inc.advance(state, dec[t]);
      const Eigen::VectorXd expect = full.row(static_cast<Eigen::Index>(t)).transpose().array().log();
      CHECK((lp - expect).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  const auto p = init_parameters(small());
  const fs::path path = fs::temp_directory_path() / "jet_model.ckpt";
  CheckpointMeta meta;
  meta.extra_json = R"({"note":"x"})";
  save_checkpoint(path, p, meta);
  CheckpointMeta back_meta;
  const auto back = load_checkpoint(path, &back_meta);
  CHECK(back_meta.extra_json.find("note") != std::string::npos);
  CHECK(back.config().d_model == 8);
  REQUIRE(back.count() == p.count());
  for (std::size_t i = 0; i < p.count(); ++i) {
    // Payloads are float32.
    const Matrix expect = p.tensors()[i].value.cast<float>().cast<double>();
    CHECK(back.tensors()[i].value == expect);
    CHECK(back.tensors()[i].decay == p.tensors()[i].decay);
  }
  // Saving a reloaded checkpoint is byte-stable.
  const fs::path again = fs::temp_directory_path() / "jet_model2.ckpt";
  save_checkpoint(again, back, back_meta);
  std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));

  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  fs::remove(path);
  fs::remove(again);
}

TEST_CASE("config json round trip") {
  ModelConfig cfg = small(1);
  cfg.position_mode = PositionMode::additive;
  const ModelConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.picker_widths == cfg.picker_widths);
  CHECK(back.position_mode == PositionMode::additive);
  CHECK(back.seed == cfg.seed);
  CHECK(config_to_json(back) == config_to_json(cfg));
}
