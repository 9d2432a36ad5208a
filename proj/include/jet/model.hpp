#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "jet/tape.hpp"

namespace jet {

class Rng;

enum class PositionMode {
  relative_bias,  // bucketed relative-position bias on attention logits
  additive,       // sinusoidal absolute embedding added to the token embedding
};

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int ffn_inner = 128;
  /// Picker FNN widths from the encoder width to the output arity, e.g.
  /// {64, 32, 16, 3}. ReLU follows every affine map except the last.
  std::vector<int> picker_widths = {64, 32, 16, 3};
  int picker_arity = 3;  // 1 for soft labels, 3 for BIO tags
  int relative_buckets = 32;
  int relative_max_distance = 128;
  PositionMode position_mode = PositionMode::relative_bias;
  double dropout = 0.1;
  double norm_eps = 1e-6;
  std::uint64_t seed = 0;

  /// Toy defaults for a given vocabulary and picker arity.
  static ModelConfig toy(int vocab_size, int arity = 3);
  int head_width() const { return d_model / heads; }
  void validate() const;
};

/// Named trainable tensors.
struct Tensor {
  std::string name;
  Matrix value;
  bool decay = true;  // subject to decoupled weight decay
};

class ModelParameters {
 public:
  ModelParameters() = default;
  explicit ModelParameters(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t count() const { return tensors_.size(); }
  int index_of(const std::string& name) const;
  Matrix& get(const std::string& name) { return tensors_[static_cast<std::size_t>(index_of(name))].value; }
  const Matrix& get(const std::string& name) const {
    return tensors_[static_cast<std::size_t>(index_of(name))].value;
  }
  bool is_picker(std::size_t index) const;
  std::size_t scalar_count() const;
  bool all_finite() const;

  /// Zero-filled buffers shaped like every tensor.
  std::vector<Matrix> zeros_like() const;

  struct EncoderLayer {
    int attn_norm, q, k, v, o, ffn_norm, ffn_in, ffn_out;
  };
  struct DecoderLayer {
    int self_norm, self_q, self_k, self_v, self_o;
    int cross_norm, cross_q, cross_k, cross_v, cross_o;
    int ffn_norm, ffn_in, ffn_out;
  };
  struct Layout {
    int embedding = -1, encoder_bias = -1, decoder_bias = -1;
    int encoder_norm = -1, decoder_norm = -1, lm_head = -1;
    std::vector<EncoderLayer> encoder;
    std::vector<DecoderLayer> decoder;
    std::vector<int> picker_weights, picker_biases;
  };
  const Layout& layout() const { return layout_; }

 private:
  void add(std::string name, Matrix value, bool decay);
  void build_layout();

  ModelConfig config_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, int> index_;
  Layout layout_;
};

using Gradients = std::vector<Matrix>;

/// Seed-deterministic scaled normal initialization; biases and norms start
/// at 0 and 1.
ModelParameters init_parameters(const ModelConfig& cfg);

/// T5 relative-position bucket for (key position - query position).
int relative_bucket(int relative_position, bool bidirectional, int num_buckets, int max_distance);
/// Sinusoidal absolute position embedding, 1 x d.
Matrix sinusoidal_position(int position, int d_model);

/// Graph-building forward passes. Parameter leaves are created lazily once
/// per tape; when `grads` is set they accumulate into it.
class ForwardPass {
 public:
  ForwardPass(Tape& tape, const ModelParameters& params, Gradients* grads = nullptr, Rng* dropout_rng = nullptr);

  Tape& tape() { return tape_; }
  Tape::Var param(int index);

  Tape::Var embed(std::span<const int> ids);
  /// Encoder stack over one sequence; returns E^L (length x d_model).
  Tape::Var encode(std::span<const int> ids, std::span<const std::uint8_t> mask);
  /// Picker logits (length x arity).
  Tape::Var picker_logits(Tape::Var encoded);
  /// Decoder logits for every decoder input position (steps x vocab).
  Tape::Var decoder_logits(Tape::Var encoded, std::span<const std::uint8_t> encoder_mask,
                           std::span<const int> decoder_ids);

 private:
  Tape::Var maybe_dropout(Tape::Var x);
  std::vector<int> buckets(int lq, int lk, bool bidirectional) const;

  Tape& tape_;
  const ModelParameters& params_;
  Gradients* grads_;
  Rng* rng_;
  std::vector<Tape::Var> leaves_;
};

struct EncoderOutput {
  Matrix states;  // length x d_model
  std::vector<std::uint8_t> mask;
};

/// Token embeddings for `ids` (plus the additive position term in additive mode).
Matrix embed(std::span<const int> ids, const ModelParameters& params);
/// Inference-mode encoder (no dropout, no gradients). An empty mask means
/// every position is real.
EncoderOutput encode(std::span<const int> ids, std::span<const std::uint8_t> mask, const ModelParameters& params);
/// Encodes every row of a padded batch; rows are independent.
std::vector<EncoderOutput> encode_batch(std::span<const int> ids, std::span<const std::uint8_t> mask, int rows,
                                        int width, const ModelParameters& params);
/// Per-position picker output: length x 3 class distribution in hard mode,
/// length x 1 importance probability in soft mode.
Matrix picker_forward(const EncoderOutput& enc, const ModelParameters& params);
/// Per-step next-token distributions (steps x vocab).
Matrix decode_forward(const EncoderOutput& enc, std::span<const int> decoder_ids, const ModelParameters& params);

/// Incremental decoder with per-layer self-attention caches, for search.
class IncrementalDecoder {
 public:
  struct State {
    std::vector<Matrix> keys;    // per layer, steps x d_model
    std::vector<Matrix> values;  // per layer, steps x d_model
    int steps = 0;
  };

  IncrementalDecoder(const ModelParameters& params, const EncoderOutput& enc);
  State start() const;
  /// Feeds `token` at the next position and returns the log-probabilities of
  /// the following token.
  Eigen::VectorXd advance(State& state, int token) const;

 private:
  const ModelParameters& params_;
  const EncoderOutput& enc_;
  std::vector<Matrix> cross_keys_;
  std::vector<Matrix> cross_values_;
};

/// Checkpoint container: magic "JETCKPT1", u64 little-endian manifest length,
/// JSON manifest, then float32 little-endian tensor payloads in manifest order.
struct CheckpointMeta {
  std::string extra_json = "{}";  // caller-defined object stored under "extra"
};
void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params,
                     const CheckpointMeta& meta = {});
ModelParameters load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json);

}  // namespace jet
