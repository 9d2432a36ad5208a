#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "jet/corpus.hpp"

namespace jet {

/// Word vectors keyed by token. Tokens absent from the table resolve through
/// the fallback policy.
class EmbeddingTable {
 public:
  enum class Fallback {
    zero,  // absent tokens have no vector and score 0
    hash,  // absent tokens get a seeded pseudo-random vector
  };

  EmbeddingTable(int dimension, Fallback fallback, std::uint64_t seed = 0);

  /// Table with no stored vectors where every token hashes to a vector.
  static EmbeddingTable hashed(int dimension, std::uint64_t seed);
  /// Plain-text word-vector file: header "count dim", then "token v1 ... vd".
  static EmbeddingTable load_text(const std::filesystem::path& path, Fallback fallback,
                                  std::uint64_t seed = 0);

  int dimension() const { return dimension_; }
  Fallback fallback() const { return fallback_; }
  std::size_t stored() const { return vectors_.size(); }

  void add(const std::string& token, std::vector<double> vec);
  bool contains(const std::string& token) const { return vectors_.count(token) > 0; }
  /// Stored vector, else the fallback (nullopt for Fallback::zero).
  std::optional<std::vector<double>> lookup(const std::string& token) const;

 private:
  std::vector<double> hash_vector(const std::string& token) const;

  int dimension_;
  Fallback fallback_;
  std::uint64_t seed_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// A token surviving normalization: its position among the input tokens and
/// its normalized form.
struct NormalizedToken {
  std::size_t index;
  std::string form;
  friend bool operator==(const NormalizedToken&, const NormalizedToken&) = default;
};

/// Normalized reference tokens missing from the incomplete utterance.
struct ClueTokenSet {
  std::set<std::string> tokens;
  std::map<std::string, std::vector<std::string>> surface_forms;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

/// Context-word by clue-token similarity matrix. Exact normalized-string
/// matches score exactly 1; any other pair scores strictly below 1.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::vector<double> row(std::size_t i) const;
};

enum class LabelMode { soft, hard, defined, none };
std::string to_string(LabelMode mode);
LabelMode parse_label_mode(std::string_view name);

enum class BioTag : std::uint8_t { O = 0, B = 1, I = 2 };
char to_char(BioTag t);
BioTag parse_bio(std::string_view s);

/// Per-context-utterance word labels. Exactly one of `tags` / `scores` is
/// populated, depending on the mode.
struct PickerLabels {
  LabelMode mode = LabelMode::hard;
  std::vector<std::vector<BioTag>> tags;
  std::vector<std::vector<double>> scores;

  std::size_t utterances() const { return mode == LabelMode::soft ? scores.size() : tags.size(); }
  std::size_t words_in(std::size_t u) const {
    return mode == LabelMode::soft ? scores[u].size() : tags[u].size();
  }
  void validate() const;
};

struct LabeledSample {
  DialogueSample sample;
  std::optional<PickerLabels> labels;
};

/// Drops stopwords (and punctuation-only tokens), then lowercases,
/// lemmatizes and stems the survivors as configured.
std::vector<NormalizedToken> normalize(const std::vector<std::string>& tokens, const LanguageConfig& cfg);
std::string normalize_form(const std::string& token, const LanguageConfig& cfg);

ClueTokenSet extract_clue_tokens(const std::string& reference, const std::string& incomplete,
                                 const LanguageConfig& cfg);

/// Cosine similarity; zero vectors score 0.
double similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Scores every normalized context word against every clue. Each context
/// token also carries its surface form for embedding lookup.
struct ContextWord {
  std::string surface;
  std::string form;
};
ScoreMatrix score_matrix(const std::vector<ContextWord>& context, const ClueTokenSet& clues,
                         const EmbeddingTable& emb);

/// soft_i = clamp(max_j d_ij, 0, 1); 0 for rows without columns.
std::vector<double> soft_labels(const ScoreMatrix& d);
/// hard_i = 1 iff max_j d_ij == 1.
std::vector<std::uint8_t> hard_labels(const ScoreMatrix& d);
/// Row-wise variants for raw score rows.
double soft_label(const std::vector<double>& row);
std::uint8_t hard_label(const std::vector<double>& row);

/// Maximal runs of marked words become B I I ...; everything else O.
std::vector<BioTag> to_bio(const std::vector<std::uint8_t>& bits);

LabeledSample label_sample(const DialogueSample& sample, LabelMode mode, const EmbeddingTable& emb,
                           const LanguageConfig& cfg);

/// Normalized forms of the context words tagged B or I.
std::set<std::string> important_tokens(const LabeledSample& labeled, const LanguageConfig& cfg);

/// Fraction of context words marked important (tag != O, or mean score).
double label_density(const std::vector<LabeledSample>& corpus);

/// JSONL in/out. Labeled records mirror the input and add a "labels" field:
/// {"mode":"hard","tags":[["O","B",...],...]} or {"mode":"soft","scores":[[...],...]}.
std::vector<LabeledSample> load_labeled_corpus(const std::filesystem::path& path);
void save_labeled_corpus(const std::filesystem::path& path, const std::vector<LabeledSample>& corpus);

}  // namespace jet
