#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jet/corpus.hpp"

namespace jet {

using Tokens = std::vector<std::string>;

/// ROUGE-n F1 from clipped n-gram overlap; 0 when either side has no n-grams.
double rouge_n(const Tokens& pred, const Tokens& ref, int n);

/// Corpus BLEU over orders 1..n with uniform weights and the brevity penalty,
/// unsmoothed: any zero precision gives 0.
double bleu_n(const std::vector<std::pair<Tokens, Tokens>>& corpus, int n);

/// Sentence BLEU with add-one smoothing on orders above 1; per-sample
/// diagnostics only.
double sentence_bleu(const Tokens& pred, const Tokens& ref, int n);

/// F-score over the n-grams that contain at least one restored word, a word
/// of the sequence absent from the incomplete utterance's token multiset.
double restoration_f(const Tokens& pred, const Tokens& ref, const Tokens& incomplete, int n);

/// 1 when the strings match after collapsing whitespace runs and trimming.
int exact_match(const std::string& pred, const std::string& ref);

enum class PickupMode { any, all };
std::string to_string(PickupMode mode);
PickupMode parse_pickup_mode(std::string_view name);

struct PickupItem {
  std::set<std::string> prediction;  // normalized prediction tokens
  std::set<std::string> important;   // normalized important tokens
};
/// Share of samples whose prediction holds any (or all) of their important
/// tokens. Samples without important tokens are left out.
double pickup_ratio(const std::vector<PickupItem>& items, PickupMode mode);

/// Mean absolute difference in code points.
double length_difference(const std::vector<std::pair<std::string, std::string>>& pairs);

struct LengthBucket {
  std::string label;
  std::size_t lo = 0;
  std::optional<std::size_t> hi;  // exclusive; open when absent
};
/// "<100", "100-200", ">=200".
std::vector<LengthBucket> default_length_buckets();

struct LengthItem {
  Tokens pred;
  Tokens ref;
  std::size_t input_chars = 0;
};
/// Corpus BLEU per input-length bucket; empty buckets are absent.
std::map<std::string, double> bleu_by_length(const std::vector<LengthItem>& items, int n,
                                             const std::vector<LengthBucket>& buckets);

/// Spans [begin, end) of a BIO tag sequence (O=0, B=1, I=2). An I that
/// does not continue a span opens a new one.
std::vector<std::pair<int, int>> bio_spans(const std::vector<int>& tags);

/// Micro span-level F1 over aligned gold/predicted BIO sequences; 1 when
/// neither side has spans.
double bio_span_f1(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred);

struct EvalConfig {
  LanguageConfig language = LanguageConfig::english();
  PickupMode pickup = PickupMode::any;
  std::vector<LengthBucket> buckets = default_length_buckets();
  int bucket_bleu_order = 4;
};

/// Every score except `difference` is a percentage.
struct EvalReport {
  double rouge1 = 0, rouge2 = 0;
  double bleu1 = 0, bleu2 = 0, bleu4 = 0;
  double f1 = 0, f2 = 0, f3 = 0;
  double em = 0;
  std::optional<double> pickup_ratio;
  double difference = 0;
  std::map<std::string, double> bleu_by_length;
  std::map<std::string, std::size_t> bucket_counts;
  std::size_t samples = 0;

  std::string to_json() const;
  std::string to_table() const;
};

/// Scores predictions (by sample id) against the gold corpus. `important`
/// maps sample ids to normalized important tokens; samples absent from it
/// are left out of the pickup ratio.
EvalReport evaluate(const std::unordered_map<std::string, std::string>& predictions,
                    const std::vector<DialogueSample>& gold,
                    const std::unordered_map<std::string, std::set<std::string>>& important, const EvalConfig& cfg);

/// Reads {"id","prediction"} JSONL. Duplicate ids are an error.
std::unordered_map<std::string, std::string> load_predictions(const std::filesystem::path& path);

/// Character length of the serialized input used for bucketing: context
/// utterances and the incomplete utterance joined by single spaces.
std::size_t input_length(const DialogueSample& sample);

}  // namespace jet
