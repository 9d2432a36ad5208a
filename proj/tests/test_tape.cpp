#include <cmath>
#include <functional>

#include "doctest.h"
#include "jet/common.hpp"
#include "jet/tape.hpp"

using namespace jet;

namespace {

Matrix random_matrix(Rng& rng, int r, int c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Central finite differences of a scalar graph against its backward pass,
// for every coordinate of every input.
double max_fd_error(std::vector<Matrix> inputs, const std::function<Tape::Var(Tape&, std::vector<Tape::Var>&)>& build) {
  std::vector<Matrix> grads;
  for (const auto& m : inputs) grads.push_back(Matrix::Zero(m.rows(), m.cols()));
  {
    Tape t;
    std::vector<Tape::Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(t.leaf(inputs[i], &grads[i]));
    t.backward(build(t, vars));
  }
  auto eval = [&] {
    Tape t;
    std::vector<Tape::Var> vars;
    for (const auto& m : inputs) vars.push_back(t.leaf(m, nullptr));
    return t.scalar(build(t, vars));
  };
  const double eps = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      const double orig = inputs[i].data()[k];
      inputs[i].data()[k] = orig + eps;
      const double up = eval();
      inputs[i].data()[k] = orig - eps;
      const double down = eval();
      inputs[i].data()[k] = orig;
      const double fd = (up - down) / (2 * eps);
      const double an = grads[i].data()[k];
      worst = std::max(worst, std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("sum of squares gradient") {
  Matrix w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  Matrix g = Matrix::Zero(2, 3);
  Tape t;
  const auto x = t.leaf(w, &g);
  const auto row = t.gather_rows(x, std::vector<int>{1});
  t.backward(t.sum_squares(row));
  Matrix expect = Matrix::Zero(2, 3);
  expect.row(1) << 8, 10, 12;
  CHECK(g == expect);
}

TEST_CASE("backward needs a scalar") {
  Tape t;
  Matrix m = Matrix::Ones(2, 2);
  const auto v = t.constant(m);
  CHECK_THROWS_AS(t.backward(v), Error);
}

TEST_CASE("elementwise and matmul gradients") {
  Rng rng(1);
  const double err = max_fd_error({random_matrix(rng, 3, 4), random_matrix(rng, 4, 2), random_matrix(rng, 1, 2)},
                                  [](Tape& t, std::vector<Tape::Var>& v) {
                                    auto h = t.add_row(t.matmul(v[0], v[1]), v[2]);
                                    h = t.relu(t.scale(h, 0.5));
                                    return t.sum_squares(t.add(h, h));
                                  });
  CHECK(err < 1e-6);
}

TEST_CASE("rms norm gradient") {
  Rng rng(2);
  const double err = max_fd_error({random_matrix(rng, 3, 5), random_matrix(rng, 1, 5)},
                                  [](Tape& t, std::vector<Tape::Var>& v) {
                                    return t.sum_squares(t.rms_norm(v[0], v[1], 1e-6));
                                  });
  CHECK(err < 1e-6);
}

TEST_CASE("attention gradient with masks, causality and bias") {
  Rng rng(3);
  static const std::vector<std::uint8_t> key_mask = {1, 1, 0, 1};
  static const std::vector<int> buckets = {0, 1, 2, 1, 2, 0, 1, 0, 2, 1, 0, 2, 0, 0, 1, 2};
  for (bool causal : {false, true}) {
    const double err = max_fd_error(
        {random_matrix(rng, 4, 4), random_matrix(rng, 4, 4), random_matrix(rng, 4, 4), random_matrix(rng, 3, 2)},
        [causal](Tape& t, std::vector<Tape::Var>& v) {
          Tape::AttentionSpec spec;
          spec.heads = 2;
          spec.causal = causal;
          if (!causal) spec.key_mask = key_mask;
          spec.bias_table = v[3];
          spec.buckets = buckets;
          return t.sum_squares(t.attention(v[0], v[1], v[2], spec));
        });
    CHECK(err < 1e-6);
  }
}

TEST_CASE("masked keys get no weight") {
  Rng rng(4);
  const Matrix q = random_matrix(rng, 2, 4), k = random_matrix(rng, 3, 4);
  Matrix v = random_matrix(rng, 3, 4);
  const std::vector<std::uint8_t> mask = {1, 1, 0};
  auto run = [&](const Matrix& values) {
    Tape t;
    Tape::AttentionSpec spec;
    spec.heads = 2;
    spec.key_mask = mask;
    return Matrix(t.value(t.attention(t.constant(q), t.constant(k), t.constant(values), spec)));
  };
  const Matrix before = run(v);
  v.row(2).setConstant(1e6);
  CHECK((run(v) - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cross-entropy gradients") {
  Rng rng(5);
  static const std::vector<int> targets = {2, -1, 0, 1};
  CHECK(max_fd_error({random_matrix(rng, 4, 3)}, [](Tape& t, std::vector<Tape::Var>& v) {
          return t.softmax_cross_entropy(v[0], targets, 0.25);
        }) < 1e-6);
  static const std::vector<double> soft = {0.0, 0.3, 1.0, 0.5};
  static const std::vector<std::uint8_t> mask = {1, 1, 0, 1};
  CHECK(max_fd_error({random_matrix(rng, 4, 1)}, [](Tape& t, std::vector<Tape::Var>& v) {
          return t.sigmoid_cross_entropy(v[0], soft, mask, 0.5);
        }) < 1e-6);
}

TEST_CASE("cross-entropy values") {
  Tape t;
  const auto uniform = t.constant(Matrix::Zero(2, 3));
  CHECK(t.scalar(t.softmax_cross_entropy(uniform, std::vector<int>{0, 2}, 0.5)) ==
        doctest::Approx(std::log(3.0)));
  const auto zero = t.constant(Matrix::Zero(1, 1));
  CHECK(t.scalar(t.sigmoid_cross_entropy(zero, std::vector<double>{0.5}, std::vector<std::uint8_t>{1}, 1.0)) ==
        doctest::Approx(std::log(2.0)));
  // Large logits stay finite.
  Matrix big(1, 1);
  big << 800.0;
  CHECK(std::isfinite(t.scalar(t.sigmoid_cross_entropy(t.constant(big), std::vector<double>{0.0}, std::vector<std::uint8_t>{1}, 1.0))));
}

TEST_CASE("dropout") {
  Rng rng(6);
  Tape t;
  const Matrix ones = Matrix::Ones(50, 40);
  const auto x = t.constant(ones);
  CHECK(t.value(t.dropout(x, 0.0, rng)) == ones);
  const Matrix d = t.value(t.dropout(x, 0.5, rng));
  for (Eigen::Index i = 0; i < d.size(); ++i) CHECK((d.data()[i] == 0.0 || d.data()[i] == 2.0));
  CHECK(d.mean() == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("softmax rows") {
  Matrix l(2, 3);
  l << 1, 2, 3, 1000, 1000, 1000;
  const Matrix p = softmax_rows(l);
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
  CHECK(p(1, 0) == doctest::Approx(1.0 / 3.0));
}
