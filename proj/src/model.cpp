#include "jet/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "jet/common.hpp"

namespace jet {

using nlohmann::json;

ModelConfig ModelConfig::toy(int vocab_size, int arity) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.picker_arity = arity;
  cfg.picker_widths = {cfg.d_model, 32, 16, arity};
  return cfg;
}

void ModelConfig::validate() const {
  if (vocab_size < 1) throw Error("model config: vocab_size must be >= 1");
  if (d_model < 1 || heads < 1) throw Error("model config: d_model and heads must be >= 1");
  if (d_model % heads != 0)
    throw Error("model config: d_model " + std::to_string(d_model) + " is not divisible by " +
                std::to_string(heads) + " heads");
  if (layers < 1) throw Error("model config: layers must be >= 1");
  if (ffn_inner < 1) throw Error("model config: ffn_inner must be >= 1");
  if (picker_arity != 1 && picker_arity != 3) throw Error("model config: picker arity must be 1 or 3");
  if (picker_widths.size() < 2 || picker_widths.front() != d_model)
    throw Error("model config: picker widths must start at d_model");
  if (picker_widths.back() != picker_arity)
    throw Error("model config: picker widths must end at the output arity");
  if (relative_buckets < 2 || relative_max_distance < 2) throw Error("model config: bad relative-position settings");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("model config: dropout must be in [0,1)");
}

// ---------------------------------------------------------------------------
// Parameters

ModelParameters::ModelParameters(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.d_model;
  const int f = config_.ffn_inner;
  const int v = config_.vocab_size;
  add("shared.embedding", Matrix::Zero(v, d), false);
  add("encoder.relative_bias", Matrix::Zero(config_.relative_buckets, config_.heads), false);
  add("decoder.relative_bias", Matrix::Zero(config_.relative_buckets, config_.heads), false);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    add(p + "attn_norm", Matrix::Ones(1, d), false);
    for (const char* w : {"q", "k", "v", "o"}) add(p + "attn_" + w, Matrix::Zero(d, d), true);
    add(p + "ffn_norm", Matrix::Ones(1, d), false);
    add(p + "ffn_in", Matrix::Zero(d, f), true);
    add(p + "ffn_out", Matrix::Zero(f, d), true);
  }
  add("encoder.final_norm", Matrix::Ones(1, d), false);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l) + ".";
    add(p + "self_norm", Matrix::Ones(1, d), false);
    for (const char* w : {"q", "k", "v", "o"}) add(p + "self_" + w, Matrix::Zero(d, d), true);
    add(p + "cross_norm", Matrix::Ones(1, d), false);
    for (const char* w : {"q", "k", "v", "o"}) add(p + "cross_" + w, Matrix::Zero(d, d), true);
    add(p + "ffn_norm", Matrix::Ones(1, d), false);
    add(p + "ffn_in", Matrix::Zero(d, f), true);
    add(p + "ffn_out", Matrix::Zero(f, d), true);
  }
  add("decoder.final_norm", Matrix::Ones(1, d), false);
  add("lm_head", Matrix::Zero(d, v), true);
  const auto& widths = config_.picker_widths;
  for (std::size_t j = 0; j + 1 < widths.size(); ++j) {
    add("picker.w" + std::to_string(j), Matrix::Zero(widths[j], widths[j + 1]), true);
    add("picker.b" + std::to_string(j), Matrix::Zero(1, widths[j + 1]), true);
  }
  build_layout();
}

void ModelParameters::add(std::string name, Matrix value, bool decay) {
  index_.emplace(name, static_cast<int>(tensors_.size()));
  tensors_.push_back({std::move(name), std::move(value), decay});
}

int ModelParameters::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

bool ModelParameters::is_picker(std::size_t index) const {
  return tensors_[index].name.rfind("picker.", 0) == 0;
}

std::size_t ModelParameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool ModelParameters::all_finite() const {
  for (const auto& t : tensors_) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

std::vector<Matrix> ModelParameters::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) out.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  return out;
}

void ModelParameters::build_layout() {
  Layout& L = layout_;
  L.embedding = index_of("shared.embedding");
  L.encoder_bias = index_of("encoder.relative_bias");
  L.decoder_bias = index_of("decoder.relative_bias");
  L.encoder_norm = index_of("encoder.final_norm");
  L.decoder_norm = index_of("decoder.final_norm");
  L.lm_head = index_of("lm_head");
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    L.encoder.push_back({index_of(p + "attn_norm"), index_of(p + "attn_q"), index_of(p + "attn_k"),
                         index_of(p + "attn_v"), index_of(p + "attn_o"), index_of(p + "ffn_norm"),
                         index_of(p + "ffn_in"), index_of(p + "ffn_out")});
    const std::string q = "decoder.layer" + std::to_string(l) + ".";
    L.decoder.push_back({index_of(q + "self_norm"), index_of(q + "self_q"), index_of(q + "self_k"),
                         index_of(q + "self_v"), index_of(q + "self_o"), index_of(q + "cross_norm"),
                         index_of(q + "cross_q"), index_of(q + "cross_k"), index_of(q + "cross_v"),
                         index_of(q + "cross_o"), index_of(q + "ffn_norm"), index_of(q + "ffn_in"),
                         index_of(q + "ffn_out")});
  }
  for (std::size_t j = 0; j + 1 < config_.picker_widths.size(); ++j) {
    L.picker_weights.push_back(index_of("picker.w" + std::to_string(j)));
    L.picker_biases.push_back(index_of("picker.b" + std::to_string(j)));
  }
}

ModelParameters init_parameters(const ModelConfig& cfg) {
  ModelParameters params(cfg);
  for (auto& t : params.tensors()) {
    const bool is_norm = t.name.find("norm") != std::string::npos;
    const bool is_bias = t.name.rfind("picker.b", 0) == 0;
    if (is_norm || is_bias) continue;  // ones / zeros from construction
    double stddev = 1.0 / std::sqrt(static_cast<double>(t.value.rows()));
    if (t.name == "shared.embedding") stddev = 1.0;
    if (t.name.find("relative_bias") != std::string::npos) stddev = 0.1;
    if (t.name.rfind("picker.w", 0) == 0) stddev = std::sqrt(2.0 / static_cast<double>(t.value.rows()));
    Rng rng(cfg.seed ^ fnv1a(t.name));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = rng.normal() * stddev;
  }
  return params;
}

int relative_bucket(int relative_position, bool bidirectional, int num_buckets, int max_distance) {
  int ret = 0;
  int n = -relative_position;
  if (bidirectional) {
    num_buckets /= 2;
    if (n < 0) ret += num_buckets;
    n = std::abs(n);
  } else {
    n = std::max(n, 0);
  }
  const int max_exact = num_buckets / 2;
  if (n < max_exact) return ret + n;
  const double scaled = std::log(static_cast<double>(n) / max_exact) /
                        std::log(static_cast<double>(max_distance) / max_exact) * (num_buckets - max_exact);
  const int large = max_exact + static_cast<int>(scaled);
  return ret + std::min(large, num_buckets - 1);
}

Matrix sinusoidal_position(int position, int d_model) {
  Matrix pe(1, d_model);
  for (int i = 0; i < d_model; ++i) {
    const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d_model);
    pe(0, i) = (i % 2 == 0) ? std::sin(position * rate) : std::cos(position * rate);
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Graph forward

ForwardPass::ForwardPass(Tape& tape, const ModelParameters& params, Gradients* grads, Rng* dropout_rng)
    : tape_(tape), params_(params), grads_(grads), rng_(dropout_rng), leaves_(params.count()) {
  if (grads_ && grads_->size() != params.count()) throw Error("ForwardPass: gradient buffer count mismatch");
}

Tape::Var ForwardPass::param(int index) {
  auto& v = leaves_[static_cast<std::size_t>(index)];
  if (!v.valid()) {
    const auto i = static_cast<std::size_t>(index);
    v = tape_.leaf(params_.tensors()[i].value, grads_ ? &(*grads_)[i] : nullptr);
  }
  return v;
}

Tape::Var ForwardPass::maybe_dropout(Tape::Var x) {
  if (!rng_ || params_.config().dropout <= 0.0) return x;
  return tape_.dropout(x, params_.config().dropout, *rng_);
}

std::vector<int> ForwardPass::buckets(int lq, int lk, bool bidirectional) const {
  const auto& cfg = params_.config();
  std::vector<int> b(static_cast<std::size_t>(lq * lk));
  for (int i = 0; i < lq; ++i) {
    for (int j = 0; j < lk; ++j)
      b[static_cast<std::size_t>(i * lk + j)] =
          relative_bucket(j - i, bidirectional, cfg.relative_buckets, cfg.relative_max_distance);
  }
  return b;
}

Tape::Var ForwardPass::embed(std::span<const int> ids) {
  const auto& cfg = params_.config();
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size)
      throw Error("embed: token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(cfg.vocab_size));
  }
  Tape::Var x = tape_.gather_rows(param(params_.layout().embedding), ids);
  if (cfg.position_mode == PositionMode::additive) {
    Matrix pe(static_cast<Eigen::Index>(ids.size()), cfg.d_model);
    for (std::size_t i = 0; i < ids.size(); ++i)
      pe.row(static_cast<Eigen::Index>(i)) = sinusoidal_position(static_cast<int>(i), cfg.d_model);
    x = tape_.add(x, tape_.constant(std::move(pe)));
  }
  return x;
}

Tape::Var ForwardPass::encode(std::span<const int> ids, std::span<const std::uint8_t> mask) {
  const auto& cfg = params_.config();
  const auto& L = params_.layout();
  const int n = static_cast<int>(ids.size());
  if (!mask.empty() && mask.size() != ids.size()) throw Error("encode: mask length mismatch");
  Tape::Var x = maybe_dropout(embed(ids));
  const bool biased = cfg.position_mode == PositionMode::relative_bias;
  const std::vector<int> bk = biased ? buckets(n, n, true) : std::vector<int>{};
  for (std::size_t l = 0; l < L.encoder.size(); ++l) {
    const auto& E = L.encoder[l];
    Tape::Var h = tape_.rms_norm(x, param(E.attn_norm), cfg.norm_eps);
    Tape::AttentionSpec spec;
    spec.heads = cfg.heads;
    spec.key_mask = mask;
    spec.query_mask = mask;
    if (biased) {
      spec.bias_table = param(L.encoder_bias);
      spec.buckets = bk;
    }
    Tape::Var a = tape_.attention(tape_.matmul(h, param(E.q)), tape_.matmul(h, param(E.k)),
                                  tape_.matmul(h, param(E.v)), spec);
    x = tape_.add(x, maybe_dropout(tape_.matmul(a, param(E.o))));
    h = tape_.rms_norm(x, param(E.ffn_norm), cfg.norm_eps);
    Tape::Var f = tape_.matmul(tape_.relu(tape_.matmul(h, param(E.ffn_in))), param(E.ffn_out));
    x = tape_.add(x, maybe_dropout(f));
    if (!tape_.value(x).allFinite()) throw Error("non-finite activation in encoder layer " + std::to_string(l));
  }
  return tape_.rms_norm(x, param(L.encoder_norm), cfg.norm_eps);
}

Tape::Var ForwardPass::picker_logits(Tape::Var encoded) {
  const auto& L = params_.layout();
  Tape::Var h = encoded;
  for (std::size_t j = 0; j < L.picker_weights.size(); ++j) {
    h = tape_.add_row(tape_.matmul(h, param(L.picker_weights[j])), param(L.picker_biases[j]));
    if (j + 1 < L.picker_weights.size()) h = tape_.relu(h);
  }
  return h;
}

Tape::Var ForwardPass::decoder_logits(Tape::Var encoded, std::span<const std::uint8_t> encoder_mask,
                                      std::span<const int> decoder_ids) {
  const auto& cfg = params_.config();
  const auto& L = params_.layout();
  const int n = static_cast<int>(decoder_ids.size());
  if (n == 0) throw Error("decode: empty decoder input");
  Tape::Var y = maybe_dropout(embed(decoder_ids));
  const bool biased = cfg.position_mode == PositionMode::relative_bias;
  const std::vector<int> bk = biased ? buckets(n, n, false) : std::vector<int>{};
  for (std::size_t l = 0; l < L.decoder.size(); ++l) {
    const auto& D = L.decoder[l];
    Tape::Var h = tape_.rms_norm(y, param(D.self_norm), cfg.norm_eps);
    Tape::AttentionSpec self;
    self.heads = cfg.heads;
    self.causal = true;
    if (biased) {
      self.bias_table = param(L.decoder_bias);
      self.buckets = bk;
    }
    Tape::Var a = tape_.attention(tape_.matmul(h, param(D.self_q)), tape_.matmul(h, param(D.self_k)),
                                  tape_.matmul(h, param(D.self_v)), self);
    y = tape_.add(y, maybe_dropout(tape_.matmul(a, param(D.self_o))));

    h = tape_.rms_norm(y, param(D.cross_norm), cfg.norm_eps);
    Tape::AttentionSpec cross;
    cross.heads = cfg.heads;
    cross.key_mask = encoder_mask;
    Tape::Var c = tape_.attention(tape_.matmul(h, param(D.cross_q)), tape_.matmul(encoded, param(D.cross_k)),
                                  tape_.matmul(encoded, param(D.cross_v)), cross);
    y = tape_.add(y, maybe_dropout(tape_.matmul(c, param(D.cross_o))));

    h = tape_.rms_norm(y, param(D.ffn_norm), cfg.norm_eps);
    Tape::Var f = tape_.matmul(tape_.relu(tape_.matmul(h, param(D.ffn_in))), param(D.ffn_out));
    y = tape_.add(y, maybe_dropout(f));
    if (!tape_.value(y).allFinite()) throw Error("non-finite activation in decoder layer " + std::to_string(l));
  }
  y = tape_.rms_norm(y, param(L.decoder_norm), cfg.norm_eps);
  return tape_.matmul(y, param(L.lm_head));
}

// ---------------------------------------------------------------------------
// Inference wrappers

Matrix embed(std::span<const int> ids, const ModelParameters& params) {
  Tape tape;
  ForwardPass fp(tape, params);
  return tape.value(fp.embed(ids));
}

EncoderOutput encode(std::span<const int> ids, std::span<const std::uint8_t> mask, const ModelParameters& params) {
  Tape tape;
  ForwardPass fp(tape, params);
  EncoderOutput out;
  out.mask.assign(mask.begin(), mask.end());
  if (out.mask.empty()) out.mask.assign(ids.size(), 1);
  out.states = tape.value(fp.encode(ids, out.mask));
  for (std::size_t i = 0; i < out.mask.size(); ++i) {
    if (!out.mask[i]) out.states.row(static_cast<Eigen::Index>(i)).setZero();
  }
  return out;
}

std::vector<EncoderOutput> encode_batch(std::span<const int> ids, std::span<const std::uint8_t> mask, int rows,
                                        int width, const ModelParameters& params) {
  if (ids.size() != static_cast<std::size_t>(rows * width) || mask.size() != ids.size())
    throw Error("encode_batch: matrix shape mismatch");
  std::vector<EncoderOutput> out;
  for (int r = 0; r < rows; ++r) {
    const auto off = static_cast<std::size_t>(r * width);
    out.push_back(encode(ids.subspan(off, static_cast<std::size_t>(width)),
                         mask.subspan(off, static_cast<std::size_t>(width)), params));
  }
  return out;
}

Matrix picker_forward(const EncoderOutput& enc, const ModelParameters& params) {
  Tape tape;
  ForwardPass fp(tape, params);
  const Matrix logits = tape.value(fp.picker_logits(tape.constant(enc.states)));
  if (logits.cols() == 1) return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  return softmax_rows(logits);
}

Matrix decode_forward(const EncoderOutput& enc, std::span<const int> decoder_ids, const ModelParameters& params) {
  Tape tape;
  ForwardPass fp(tape, params);
  const Matrix logits = tape.value(fp.decoder_logits(tape.constant(enc.states), enc.mask, decoder_ids));
  return softmax_rows(logits);
}

// ---------------------------------------------------------------------------
// Incremental decoding

namespace {

Eigen::RowVectorXd rms_row(const Eigen::RowVectorXd& x, const Matrix& gain, double eps) {
  const double inv = 1.0 / std::sqrt(x.squaredNorm() / static_cast<double>(x.size()) + eps);
  return (x * inv).cwiseProduct(gain.row(0));
}

// One query row against cached keys/values. `bias` adds per-(key, head) terms.
Eigen::RowVectorXd attend_row(const Eigen::RowVectorXd& q, const Matrix& keys, const Matrix& values, int heads,
                              const std::vector<std::uint8_t>* key_mask, const Matrix* bias_table,
                              const std::vector<int>* buckets) {
  const Eigen::Index d = q.size();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index lk = keys.rows();
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    Eigen::VectorXd s = (keys.middleCols(c0, dh) * q.segment(c0, dh).transpose()) * scale;
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < lk; ++j) {
      if (bias_table) s(j) += (*bias_table)((*buckets)[static_cast<std::size_t>(j)], h);
      if (!key_mask || (*key_mask)[static_cast<std::size_t>(j)]) m = std::max(m, s(j));
    }
    if (m == -std::numeric_limits<double>::infinity()) continue;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(lk);
    double z = 0.0;
    for (Eigen::Index j = 0; j < lk; ++j) {
      if (key_mask && !(*key_mask)[static_cast<std::size_t>(j)]) continue;
      p(j) = std::exp(s(j) - m);
      z += p(j);
    }
    p /= z;
    out.segment(c0, dh) = p.transpose() * values.middleCols(c0, dh);
  }
  return out;
}

}  // namespace

IncrementalDecoder::IncrementalDecoder(const ModelParameters& params, const EncoderOutput& enc)
    : params_(params), enc_(enc) {
  const auto& L = params.layout();
  const auto& T = params.tensors();
  for (const auto& D : L.decoder) {
    cross_keys_.push_back(enc.states * T[static_cast<std::size_t>(D.cross_k)].value);
    cross_values_.push_back(enc.states * T[static_cast<std::size_t>(D.cross_v)].value);
  }
}

IncrementalDecoder::State IncrementalDecoder::start() const {
  State s;
  const int d = params_.config().d_model;
  s.keys.assign(params_.layout().decoder.size(), Matrix(0, d));
  s.values.assign(params_.layout().decoder.size(), Matrix(0, d));
  return s;
}

Eigen::VectorXd IncrementalDecoder::advance(State& state, int token) const {
  const auto& cfg = params_.config();
  const auto& L = params_.layout();
  const auto& T = params_.tensors();
  auto W = [&](int i) -> const Matrix& { return T[static_cast<std::size_t>(i)].value; };
  if (token < 0 || token >= cfg.vocab_size) throw Error("decoder: token id out of range");
  const int t = state.steps;
  Eigen::RowVectorXd y = W(L.embedding).row(token);
  const bool biased = cfg.position_mode == PositionMode::relative_bias;
  if (!biased) y += sinusoidal_position(t, cfg.d_model).row(0);
  std::vector<int> bk;
  if (biased) {
    for (int j = 0; j <= t; ++j)
      bk.push_back(relative_bucket(j - t, false, cfg.relative_buckets, cfg.relative_max_distance));
  }
  for (std::size_t l = 0; l < L.decoder.size(); ++l) {
    const auto& D = L.decoder[l];
    Eigen::RowVectorXd h = rms_row(y, W(D.self_norm), cfg.norm_eps);
    Matrix& keys = state.keys[l];
    Matrix& values = state.values[l];
    keys.conservativeResize(t + 1, Eigen::NoChange);
    values.conservativeResize(t + 1, Eigen::NoChange);
    keys.row(t) = h * W(D.self_k);
    values.row(t) = h * W(D.self_v);
    const Eigen::RowVectorXd q = h * W(D.self_q);
    y += attend_row(q, keys, values, cfg.heads, nullptr, biased ? &W(L.decoder_bias) : nullptr, &bk) * W(D.self_o);

    h = rms_row(y, W(D.cross_norm), cfg.norm_eps);
    const Eigen::RowVectorXd cq = h * W(D.cross_q);
    y += attend_row(cq, cross_keys_[l], cross_values_[l], cfg.heads, &enc_.mask, nullptr, nullptr) * W(D.cross_o);

    h = rms_row(y, W(D.ffn_norm), cfg.norm_eps);
    const Eigen::RowVectorXd inner = (h * W(D.ffn_in)).cwiseMax(0.0);
    y += inner * W(D.ffn_out);
  }
  state.steps = t + 1;
  y = rms_row(y, W(L.decoder_norm), cfg.norm_eps);
  Eigen::VectorXd logits = (y * W(L.lm_head)).transpose();
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["vocab_size"] = cfg.vocab_size;
  j["d_model"] = cfg.d_model;
  j["layers"] = cfg.layers;
  j["heads"] = cfg.heads;
  j["ffn_inner"] = cfg.ffn_inner;
  j["picker_widths"] = cfg.picker_widths;
  j["picker_arity"] = cfg.picker_arity;
  j["relative_buckets"] = cfg.relative_buckets;
  j["relative_max_distance"] = cfg.relative_max_distance;
  j["position_mode"] = cfg.position_mode == PositionMode::additive ? "additive" : "relative_bias";
  j["dropout"] = cfg.dropout;
  j["norm_eps"] = cfg.norm_eps;
  j["seed"] = cfg.seed;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn_inner = j.at("ffn_inner").get<int>();
  cfg.picker_widths = j.at("picker_widths").get<std::vector<int>>();
  cfg.picker_arity = j.at("picker_arity").get<int>();
  cfg.relative_buckets = j.at("relative_buckets").get<int>();
  cfg.relative_max_distance = j.at("relative_max_distance").get<int>();
  cfg.position_mode = j.at("position_mode").get<std::string>() == "additive" ? PositionMode::additive
                                                                               : PositionMode::relative_bias;
  cfg.dropout = j.at("dropout").get<double>();
  cfg.norm_eps = j.at("norm_eps").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

namespace {

constexpr char kMagic[8] = {'J', 'E', 'T', 'C', 'K', 'P', 'T', '1'};

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f32_le(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params, const CheckpointMeta& meta) {
  json manifest;
  manifest["format"] = "jet-checkpoint";
  manifest["version"] = 1;
  manifest["config"] = json::parse(config_to_json(params.config()));
  manifest["seed"] = params.config().seed;
  manifest["extra"] = json::parse(meta.extra_json);
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : params.tensors()) {
    tensors.push_back({{"name", t.name},
                       {"shape", {t.value.rows(), t.value.cols()}},
                       {"offset", offset},
                       {"decay", t.decay}});
    offset += static_cast<std::uint64_t>(t.value.size()) * 4;
  }
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params.tensors()) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) write_f32_le(out, static_cast<float>(t.value.data()[i]));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ModelParameters load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw Error(path.string() + ": not a checkpoint");
  const std::uint64_t len = read_u64_le(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error(path.string() + ": truncated manifest");
  const json manifest = json::parse(text);
  ModelParameters params(config_from_json(manifest.at("config").dump()));
  const std::streampos payload = in.tellg();
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    Matrix& m = params.get(name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
      throw Error(path.string() + ": tensor '" + name + "' shape does not match its config");
    in.seekg(payload + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    std::vector<unsigned char> buf(static_cast<std::size_t>(m.size()) * 4);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw Error(path.string() + ": truncated payload for '" + name + "'");
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[static_cast<std::size_t>(i * 4 + b)]) << (8 * b);
      m.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  if (meta) meta->extra_json = manifest.value("extra", json::object()).dump();
  return params;
}

}  // namespace jet
