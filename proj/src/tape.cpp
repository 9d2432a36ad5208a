#include "jet/tape.hpp"

#include <cmath>
#include <limits>

#include "jet/common.hpp"

namespace jet {

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Tape::Var Tape::push(Matrix value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Tape::Var Tape::leaf(const Matrix& value, Matrix* grad_buffer) {
  Node n;
  n.ref = &value;
  n.requires_grad = grad_buffer != nullptr;
  if (grad_buffer) {
    if (grad_buffer->rows() != value.rows() || grad_buffer->cols() != value.cols())
      throw Error("Tape::leaf: gradient buffer shape mismatch");
    n.external_grad = grad_buffer;
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw Error("Tape: invalid variable");
  const Node& n = node(v);
  return n.ref ? *n.ref : n.owned;
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) throw Error("Tape::scalar: not a 1x1 value");
  return m(0, 0);
}

Matrix& Tape::grad(Var v) {
  Node& n = node(v);
  if (n.external_grad) return *n.external_grad;
  if (n.local_grad.size() == 0) {
    const Matrix& val = n.ref ? *n.ref : n.owned;
    n.local_grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.local_grad;
}

bool Tape::has_grad(Var v) const {
  const Node& n = node(v);
  return n.local_grad.size() != 0;
}

void Tape::backward(Var loss) {
  if (nodes_.empty() || !loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size())
    throw Error("backward called without a recorded forward pass");
  if (value(loss).size() != 1) throw Error("backward: loss must be a scalar");
  if (!needs_grad(loss)) return;
  grad(loss)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.external_grad || n.local_grad.size() == 0) continue;
    n.backward();
  }
}

// ---------------------------------------------------------------------------

Tape::Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows()) throw Error("matmul: shape mismatch");
  Matrix out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  Var r = push(std::move(out), needs_grad(a) || needs_grad(b));
  if (needs_grad(r)) {
    node(r).backward = [this, a, b, r] {
      const Matrix& g = grad(r);
      if (needs_grad(a)) grad(a).noalias() += g * value(b).transpose();
      if (needs_grad(b)) grad(b).noalias() += value(a).transpose() * g;
    };
  }
  return r;
}

Tape::Var Tape::add(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw Error("add: shape mismatch");
  Var r = push(av + bv, needs_grad(a) || needs_grad(b));
  if (needs_grad(r)) {
    node(r).backward = [this, a, b, r] {
      const Matrix& g = grad(r);
      if (needs_grad(a)) grad(a) += g;
      if (needs_grad(b)) grad(b) += g;
    };
  }
  return r;
}

Tape::Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw Error("add_row: shape mismatch");
  Matrix out = av;
  out.rowwise() += rv.row(0);
  Var r = push(std::move(out), needs_grad(a) || needs_grad(row));
  if (needs_grad(r)) {
    node(r).backward = [this, a, row, r] {
      const Matrix& g = grad(r);
      if (needs_grad(a)) grad(a) += g;
      if (needs_grad(row)) grad(row) += g.colwise().sum();
    };
  }
  return r;
}

Tape::Var Tape::scale(Var a, double s) {
  Var r = push(value(a) * s, needs_grad(a));
  if (needs_grad(r)) {
    node(r).backward = [this, a, r, s] { grad(a) += grad(r) * s; };
  }
  return r;
}

Tape::Var Tape::relu(Var a) {
  Var r = push(value(a).cwiseMax(0.0), needs_grad(a));
  if (needs_grad(r)) {
    node(r).backward = [this, a, r] {
      grad(a).array() += grad(r).array() * (value(a).array() > 0.0).cast<double>();
    };
  }
  return r;
}

Tape::Var Tape::rms_norm(Var x, Var gain, double eps) {
  const Matrix& xv = value(x);
  const Matrix& gv = value(gain);
  if (gv.rows() != 1 || gv.cols() != xv.cols()) throw Error("rms_norm: gain shape mismatch");
  const auto d = static_cast<double>(xv.cols());
  Eigen::VectorXd inv_rms(xv.rows());
  Matrix normed(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    inv_rms(i) = 1.0 / std::sqrt(xv.row(i).squaredNorm() / d + eps);
    normed.row(i) = xv.row(i) * inv_rms(i);
  }
  Matrix out = normed;
  out.array().rowwise() *= gv.row(0).array();
  Var r = push(std::move(out), needs_grad(x) || needs_grad(gain));
  if (needs_grad(r)) {
    node(r).backward = [this, x, gain, r, normed = std::move(normed), inv_rms = std::move(inv_rms), d] {
      const Matrix& g = grad(r);
      if (needs_grad(gain)) grad(gain) += (g.array() * normed.array()).colwise().sum().matrix();
      if (needs_grad(x)) {
        Matrix dn = g;
        dn.array().rowwise() *= value(gain).row(0).array();
        Matrix& gx = grad(x);
        for (Eigen::Index i = 0; i < dn.rows(); ++i) {
          const double proj = dn.row(i).dot(normed.row(i)) / d;
          gx.row(i) += (dn.row(i) - normed.row(i) * proj) * inv_rms(i);
        }
      }
    };
  }
  return r;
}

Tape::Var Tape::gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows())
      throw Error("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  Var r = push(std::move(out), needs_grad(table));
  if (needs_grad(r)) {
    node(r).backward = [this, table, r, idx = std::vector<int>(ids.begin(), ids.end())] {
      const Matrix& g = grad(r);
      Matrix& gt = grad(table);
      for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    };
  }
  return r;
}

Tape::Var Tape::dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw Error("dropout rate must be < 1");
  const Matrix& av = value(a);
  Matrix keep(av.rows(), av.cols());
  const double s = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = rng.uniform() >= rate ? s : 0.0;
  Var r = push(av.cwiseProduct(keep), needs_grad(a));
  if (needs_grad(r)) {
    node(r).backward = [this, a, r, keep = std::move(keep)] { grad(a) += grad(r).cwiseProduct(keep); };
  }
  return r;
}

Tape::Var Tape::sum_squares(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  Var r = push(std::move(out), needs_grad(a));
  if (needs_grad(r)) {
    node(r).backward = [this, a, r] { grad(a) += value(a) * (2.0 * grad(r)(0, 0)); };
  }
  return r;
}

Tape::Var Tape::attention(Var q, Var k, Var v, const AttentionSpec& spec) {
  const Matrix& qv = value(q);
  const Matrix& kv = value(k);
  const Matrix& vv = value(v);
  const Eigen::Index lq = qv.rows();
  const Eigen::Index lk = kv.rows();
  const Eigen::Index d = qv.cols();
  const int heads = spec.heads;
  if (heads < 1 || d % heads != 0) throw Error("attention: width not divisible by head count");
  if (kv.cols() != d || vv.cols() != d || vv.rows() != lk) throw Error("attention: shape mismatch");
  if (!spec.key_mask.empty() && static_cast<Eigen::Index>(spec.key_mask.size()) != lk)
    throw Error("attention: key mask length mismatch");
  if (!spec.query_mask.empty() && static_cast<Eigen::Index>(spec.query_mask.size()) != lq)
    throw Error("attention: query mask length mismatch");
  const bool biased = spec.bias_table.valid();
  if (biased && static_cast<Eigen::Index>(spec.buckets.size()) != lq * lk)
    throw Error("attention: bucket matrix size mismatch");
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // visible(i, j) as 0/1
  Matrix visible = Matrix::Ones(lq, lk);
  for (Eigen::Index i = 0; i < lq; ++i) {
    const bool active = spec.query_mask.empty() || spec.query_mask[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < lk; ++j) {
      const bool key_ok = spec.key_mask.empty() || spec.key_mask[static_cast<std::size_t>(j)];
      if (!active || !key_ok || (spec.causal && j > i)) visible(i, j) = 0.0;
    }
  }

  const Matrix* table = biased ? &value(spec.bias_table) : nullptr;
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out = Matrix::Zero(lq, d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    Matrix s(lq, lk);
    s.noalias() = qv.middleCols(c0, dh) * kv.middleCols(c0, dh).transpose();
    s *= scale;
    if (biased) {
      for (Eigen::Index i = 0; i < lq; ++i) {
        for (Eigen::Index j = 0; j < lk; ++j) s(i, j) += (*table)(spec.buckets[static_cast<std::size_t>(i * lk + j)], h);
      }
    }
    Matrix& p = probs[static_cast<std::size_t>(h)];
    p = Matrix::Zero(lq, lk);
    for (Eigen::Index i = 0; i < lq; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < lk; ++j) {
        if (visible(i, j) != 0.0) m = std::max(m, s(i, j));
      }
      if (m == -std::numeric_limits<double>::infinity()) continue;
      double z = 0.0;
      for (Eigen::Index j = 0; j < lk; ++j) {
        if (visible(i, j) != 0.0) {
          p(i, j) = std::exp(s(i, j) - m);
          z += p(i, j);
        }
      }
      p.row(i) /= z;
    }
    out.middleCols(c0, dh).noalias() = p * vv.middleCols(c0, dh);
  }

  const bool need = needs_grad(q) || needs_grad(k) || needs_grad(v) || (biased && needs_grad(spec.bias_table));
  Var r = push(std::move(out), need);
  if (need) {
    std::vector<int> buckets(spec.buckets.begin(), spec.buckets.end());
    node(r).backward = [this, q, k, v, r, heads, dh, scale, lk, table_var = spec.bias_table,
                        probs = std::move(probs), buckets = std::move(buckets)] {
      const Matrix& g = grad(r);
      const Matrix& qv = value(q);
      const Matrix& kv = value(k);
      const Matrix& vv = value(v);
      const bool biased = table_var.valid() && needs_grad(table_var);
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dh;
        const Matrix& p = probs[static_cast<std::size_t>(h)];
        const auto go = g.middleCols(c0, dh);
        if (needs_grad(v)) grad(v).middleCols(c0, dh).noalias() += p.transpose() * go;
        Matrix dp(p.rows(), p.cols());
        dp.noalias() = go * vv.middleCols(c0, dh).transpose();
        Matrix ds = p.cwiseProduct(dp);
        const Eigen::VectorXd row_dot = ds.rowwise().sum();
        ds -= p.cwiseProduct(row_dot.replicate(1, p.cols()));
        if (biased) {
          Matrix& gt = grad(table_var);
          for (Eigen::Index i = 0; i < ds.rows(); ++i) {
            for (Eigen::Index j = 0; j < lk; ++j) gt(buckets[static_cast<std::size_t>(i * lk + j)], h) += ds(i, j);
          }
        }
        if (needs_grad(q)) grad(q).middleCols(c0, dh).noalias() += (ds * kv.middleCols(c0, dh)) * scale;
        if (needs_grad(k)) grad(k).middleCols(c0, dh).noalias() += (ds.transpose() * qv.middleCols(c0, dh)) * scale;
      }
    };
  }
  return r;
}

Tape::Var Tape::softmax_cross_entropy(Var logits, std::span<const int> targets, double weight) {
  const Matrix& lv = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows())
    throw Error("softmax_cross_entropy: target count mismatch");
  Matrix probs = softmax_rows(lv);
  double total = 0.0;
  for (Eigen::Index i = 0; i < lv.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0) continue;
    if (t >= lv.cols()) throw Error("softmax_cross_entropy: target out of range");
    const double m = lv.row(i).maxCoeff();
    const double lse = m + std::log((lv.row(i).array() - m).exp().sum());
    total += lse - lv(i, t);
  }
  Matrix out(1, 1);
  out(0, 0) = weight * total;
  Var r = push(std::move(out), needs_grad(logits));
  if (needs_grad(r)) {
    node(r).backward = [this, logits, r, weight, probs = std::move(probs),
                        tgt = std::vector<int>(targets.begin(), targets.end())] {
      const double g = grad(r)(0, 0) * weight;
      Matrix& gl = grad(logits);
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        if (tgt[i] < 0) continue;
        const auto row = static_cast<Eigen::Index>(i);
        gl.row(row) += probs.row(row) * g;
        gl(row, tgt[i]) -= g;
      }
    };
  }
  return r;
}

Tape::Var Tape::sigmoid_cross_entropy(Var logits, std::span<const double> targets,
                                      std::span<const std::uint8_t> mask, double weight) {
  const Matrix& lv = value(logits);
  if (lv.cols() != 1 || static_cast<Eigen::Index>(targets.size()) != lv.rows() || mask.size() != targets.size())
    throw Error("sigmoid_cross_entropy: shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < lv.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double z = lv(i, 0);
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += softplus - targets[static_cast<std::size_t>(i)] * z;
  }
  Matrix out(1, 1);
  out(0, 0) = weight * total;
  Var r = push(std::move(out), needs_grad(logits));
  if (needs_grad(r)) {
    node(r).backward = [this, logits, r, weight, tgt = std::vector<double>(targets.begin(), targets.end()),
                        msk = std::vector<std::uint8_t>(mask.begin(), mask.end())] {
      const double g = grad(r)(0, 0) * weight;
      const Matrix& lv = value(logits);
      Matrix& gl = grad(logits);
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        if (!msk[i]) continue;
        const double z = lv(static_cast<Eigen::Index>(i), 0);
        const double sig = 1.0 / (1.0 + std::exp(-z));
        gl(static_cast<Eigen::Index>(i), 0) += g * (sig - tgt[i]);
      }
    };
  }
  return r;
}

}  // namespace jet
