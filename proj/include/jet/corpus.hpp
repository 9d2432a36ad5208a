#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace jet {

/// One restoration instance: dialogue context H, incomplete utterance U and,
/// outside of inference, the reference rewrite R.
struct DialogueSample {
  std::string id;
  std::vector<std::string> context;  // oldest first
  std::string incomplete;
  std::optional<std::string> reference;

  /// Throws jet::Error when an invariant is violated.
  void validate() const;
};

enum class Language { english, chinese, other };
enum class Granularity { whitespace_word, character, subword };

using StopwordSet = std::unordered_set<std::string>;

/// Piece inventory for the greedy longest-match subword mode. Continuation
/// pieces carry a "##" prefix.
struct SubwordInventory {
  std::unordered_set<std::string> pieces;
  static SubwordInventory load(const std::filesystem::path& path);
};

struct LanguageConfig {
  Language language = Language::english;
  std::shared_ptr<const StopwordSet> stopwords = std::make_shared<StopwordSet>();
  bool lemmatize = true;
  bool stem = true;
  bool lowercase = true;
  Granularity granularity = Granularity::whitespace_word;
  std::shared_ptr<const SubwordInventory> subwords;

  /// English defaults: whitespace words, lowercase, lemmatize, stem, bundled
  /// stopword list.
  static LanguageConfig english();
  /// Chinese defaults: characters, no lemmatization or stemming, bundled list.
  static LanguageConfig chinese();
  static LanguageConfig for_language(Language lang);

  bool is_stopword(std::string_view token) const;
  void validate() const;
};

std::string to_string(Language lang);
Language parse_language(std::string_view name);
std::string to_string(Granularity g);
Granularity parse_granularity(std::string_view name);

/// Bundled stopword list for a language (empty for Language::other).
std::shared_ptr<const StopwordSet> default_stopwords(Language lang);
/// Reads a one-token-per-line stopword file; blank lines are skipped.
std::shared_ptr<const StopwordSet> load_stopwords(const std::filesystem::path& path);

/// Parses JSONL records {"context": [...], "utterance": "...", "reference":
/// "...", "id": ...}. Ids default to the zero-based record index.
std::vector<DialogueSample> load_corpus(const std::filesystem::path& path,
                                        std::string_view schema = "jsonl");
std::vector<DialogueSample> parse_corpus(std::string_view text, std::string_view schema = "jsonl");
void save_corpus(const std::filesystem::path& path, const std::vector<DialogueSample>& samples);

/// Word-level units: whitespace words, or code points in character mode.
std::vector<std::string> split_words(std::string_view text, const LanguageConfig& cfg);
/// Model pieces of one word (identity unless the granularity is subword).
std::vector<std::string> word_pieces(const std::string& word, const LanguageConfig& cfg);
std::vector<std::string> tokenize(std::string_view text, const LanguageConfig& cfg);
/// Inverse of tokenize up to normalization.
std::string detokenize(const std::vector<std::string>& tokens, const LanguageConfig& cfg);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kX1 = 4;
  static constexpr int kX2 = 5;
  static constexpr int kReserved = 6;
  static constexpr std::array<std::string_view, kReserved> kReservedTokens = {
      "<pad>", "<s>", "</s>", "<unk>", "[X1]", "[X2]"};

  Vocabulary();
  /// `tokens` must start with the reserved tokens in order and be unique.
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  static bool is_reserved(int id) { return id >= 0 && id < kReserved; }

  std::uint64_t fingerprint() const;
  std::string to_json() const;
  static Vocabulary from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Reserved tokens first, then corpus tokens by descending frequency with
/// lexicographic tie-breaking, truncated to `max_size` entries in total.
Vocabulary build_vocab(const std::vector<DialogueSample>& samples, int max_size,
                       const LanguageConfig& cfg);

std::vector<int> ids_of(const std::vector<std::string>& tokens, const Vocabulary& vocab);

}  // namespace jet
