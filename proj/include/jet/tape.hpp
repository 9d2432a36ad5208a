#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace jet {

class Rng;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Reverse-mode automatic differentiation over dense matrices. Every op
/// records its output and a closure that pushes the output gradient back to
/// its inputs. Leaves may write gradients straight into caller-owned buffers.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  /// Non-differentiable value owned by the tape.
  Var constant(Matrix value);
  /// Differentiable leaf referring to caller-owned storage. Gradients are
  /// accumulated into `grad` (which must already have the value's shape);
  /// a null `grad` makes the leaf constant.
  Var leaf(const Matrix& value, Matrix* grad);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  /// Throws when nothing was recorded or `loss` is not a 1x1 node.
  void backward(Var loss);

  // -- ops -----------------------------------------------------------------
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// Adds a 1 x n row to every row of `a`.
  Var add_row(Var a, Var row);
  Var scale(Var a, double s);
  Var relu(Var a);
  /// x / sqrt(mean(x^2) + eps) * gain, row-wise; `gain` is 1 x n.
  Var rms_norm(Var x, Var gain, double eps);
  /// Rows of `table` selected by `ids`.
  Var gather_rows(Var table, std::span<const int> ids);
  /// Inverted dropout; identity when rate is 0.
  Var dropout(Var a, double rate, Rng& rng);
  Var sum_squares(Var a);

  struct AttentionSpec {
    int heads = 1;
    std::span<const std::uint8_t> key_mask;    // empty: all keys visible
    std::span<const std::uint8_t> query_mask;  // empty: all queries active
    bool causal = false;
    /// Optional additive logit bias: `bias_table` is buckets x heads and
    /// `buckets` holds one bucket index per (query, key) pair, row-major.
    Var bias_table{};
    std::span<const int> buckets;
  };
  /// Multi-head scaled dot-product attention over full-width q (lq x d),
  /// k and v (lk x d). Masked keys receive zero weight; inactive queries
  /// produce zero rows.
  Var attention(Var q, Var k, Var v, const AttentionSpec& spec);

  /// weight * sum over rows with target >= 0 of -log softmax(logits)[target].
  Var softmax_cross_entropy(Var logits, std::span<const int> targets, double weight);
  /// weight * sum over unmasked rows of the binary cross-entropy between
  /// sigmoid(logit) and the soft target. `logits` is n x 1.
  Var sigmoid_cross_entropy(Var logits, std::span<const double> targets,
                            std::span<const std::uint8_t> mask, double weight);

 private:
  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix local_grad;
    Matrix* external_grad = nullptr;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Matrix value, bool requires_grad);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  bool needs_grad(Var v) const { return node(v).requires_grad; }
  /// Gradient buffer of `v`, zero-initialised on first use.
  Matrix& grad(Var v);
  bool has_grad(Var v) const;

  std::vector<Node> nodes_;
};

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

}  // namespace jet
