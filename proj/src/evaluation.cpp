#include "jet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "jet/common.hpp"
#include "jet/labeler.hpp"

namespace jet {

using nlohmann::json;

namespace {

using NgramCounts = std::map<Tokens, int>;

NgramCounts ngrams(const Tokens& toks, int n) {
  NgramCounts out;
  const auto k = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + k <= toks.size(); ++i) ++out[Tokens(toks.begin() + i, toks.begin() + i + k)];
  return out;
}

int total(const NgramCounts& c) {
  int t = 0;
  for (const auto& [g, k] : c) t += k;
  return t;
}

int clipped_overlap(const NgramCounts& a, const NgramCounts& b) {
  int o = 0;
  for (const auto& [g, k] : a) {
    auto it = b.find(g);
    if (it != b.end()) o += std::min(k, it->second);
  }
  return o;
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

void check_order(int n) {
  if (n < 1) throw Error("n-gram order must be >= 1");
}

struct RestoredCounts {
  int matched = 0;
  int pred = 0;
  int ref = 0;
};

NgramCounts restored_ngrams(const Tokens& toks, const std::set<std::string>& incomplete, int n) {
  NgramCounts out;
  const auto k = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + k <= toks.size(); ++i) {
    bool restored = false;
    for (std::size_t j = i; j < i + k; ++j) restored = restored || !incomplete.count(toks[j]);
    if (restored) ++out[Tokens(toks.begin() + i, toks.begin() + i + k)];
  }
  return out;
}

RestoredCounts restored_counts(const Tokens& pred, const Tokens& ref, const Tokens& incomplete, int n) {
  const std::set<std::string> inc(incomplete.begin(), incomplete.end());
  const NgramCounts p = restored_ngrams(pred, inc, n);
  const NgramCounts r = restored_ngrams(ref, inc, n);
  return {clipped_overlap(p, r), total(p), total(r)};
}

double restored_f(const RestoredCounts& c) {
  if (c.pred == 0 && c.ref == 0) return 1.0;
  if (c.pred == 0 || c.ref == 0) return 0.0;
  return harmonic(static_cast<double>(c.matched) / c.pred, static_cast<double>(c.matched) / c.ref);
}

double pct(double x) { return 100.0 * x; }

}  // namespace

double rouge_n(const Tokens& pred, const Tokens& ref, int n) {
  check_order(n);
  const NgramCounts p = ngrams(pred, n);
  const NgramCounts r = ngrams(ref, n);
  const int tp = total(p), tr = total(r);
  if (tp == 0 || tr == 0) return 0.0;
  const int o = clipped_overlap(p, r);
  return harmonic(static_cast<double>(o) / tp, static_cast<double>(o) / tr);
}

double bleu_n(const std::vector<std::pair<Tokens, Tokens>>& corpus, int n) {
  check_order(n);
  if (corpus.empty()) throw Error("bleu: empty corpus");
  std::vector<long> matched(static_cast<std::size_t>(n), 0), possible(static_cast<std::size_t>(n), 0);
  long pred_len = 0, ref_len = 0;
  for (const auto& [pred, ref] : corpus) {
    pred_len += static_cast<long>(pred.size());
    ref_len += static_cast<long>(ref.size());
    for (int k = 1; k <= n; ++k) {
      const NgramCounts p = ngrams(pred, k);
      matched[static_cast<std::size_t>(k - 1)] += clipped_overlap(p, ngrams(ref, k));
      possible[static_cast<std::size_t>(k - 1)] += total(p);
    }
  }
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (matched[i] == 0 || possible[i] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[i]) / static_cast<double>(possible[i]));
  }
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(pred_len)));
  return bp * std::exp(log_sum / n);
}

double sentence_bleu(const Tokens& pred, const Tokens& ref, int n) {
  check_order(n);
  if (pred.empty()) return 0.0;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const NgramCounts p = ngrams(pred, k);
    double m = clipped_overlap(p, ngrams(ref, k));
    double t = total(p);
    if (k > 1) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp =
      std::exp(std::min(0.0, 1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size())));
  return bp * std::exp(log_sum / n);
}

double restoration_f(const Tokens& pred, const Tokens& ref, const Tokens& incomplete, int n) {
  check_order(n);
  return restored_f(restored_counts(pred, ref, incomplete, n));
}

int exact_match(const std::string& pred, const std::string& ref) {
  return collapse_whitespace(pred) == collapse_whitespace(ref) ? 1 : 0;
}

std::string to_string(PickupMode mode) { return mode == PickupMode::any ? "any" : "all"; }

PickupMode parse_pickup_mode(std::string_view name) {
  if (name == "any") return PickupMode::any;
  if (name == "all") return PickupMode::all;
  throw Error("unknown pickup mode '" + std::string(name) + "' (expected any or all)");
}

double pickup_ratio(const std::vector<PickupItem>& items, PickupMode mode) {
  int counted = 0, hit = 0;
  for (const auto& it : items) {
    if (it.important.empty()) continue;
    ++counted;
    int found = 0;
    for (const auto& t : it.important) found += it.prediction.count(t) ? 1 : 0;
    const bool ok = mode == PickupMode::any ? found > 0 : found == static_cast<int>(it.important.size());
    hit += ok ? 1 : 0;
  }
  if (counted == 0) throw Error("pickup_ratio: no sample has important tokens");
  return static_cast<double>(hit) / counted;
}

double length_difference(const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) throw Error("length_difference: empty corpus");
  double sum = 0.0;
  for (const auto& [p, r] : pairs)
    sum += std::abs(static_cast<double>(utf8::length(p)) - static_cast<double>(utf8::length(r)));
  return sum / static_cast<double>(pairs.size());
}

std::vector<LengthBucket> default_length_buckets() {
  return {{"<100", 0, 100}, {"100-200", 100, 200}, {">=200", 200, std::nullopt}};
}

std::map<std::string, double> bleu_by_length(const std::vector<LengthItem>& items, int n,
                                             const std::vector<LengthBucket>& buckets) {
  if (buckets.empty()) throw Error("bleu_by_length: no buckets");
  std::vector<LengthBucket> sorted = buckets;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
  if (sorted.front().lo != 0) throw Error("bleu_by_length: buckets must start at 0");
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& b = sorted[i];
    if (b.hi && *b.hi <= b.lo) throw Error("bleu_by_length: empty bucket '" + b.label + "'");
    if (i + 1 < sorted.size()) {
      if (!b.hi || *b.hi > sorted[i + 1].lo)
        throw Error("bleu_by_length: buckets '" + b.label + "' and '" + sorted[i + 1].label + "' overlap");
      if (*b.hi < sorted[i + 1].lo)
        throw Error("bleu_by_length: gap between '" + b.label + "' and '" + sorted[i + 1].label + "'");
    } else if (b.hi) {
      throw Error("bleu_by_length: last bucket must be open-ended");
    }
  }
  std::map<std::string, std::vector<std::pair<Tokens, Tokens>>> parts;
  for (const auto& it : items) {
    for (const auto& b : sorted) {
      if (it.input_chars >= b.lo && (!b.hi || it.input_chars < *b.hi)) {
        parts[b.label].emplace_back(it.pred, it.ref);
        break;
      }
    }
  }
  std::map<std::string, double> out;
  for (const auto& [label, corpus] : parts) out[label] = bleu_n(corpus, n);
  return out;
}

std::vector<std::pair<int, int>> bio_spans(const std::vector<int>& tags) {
  std::vector<std::pair<int, int>> out;
  int start = -1;
  for (int i = 0; i <= static_cast<int>(tags.size()); ++i) {
    const int t = i < static_cast<int>(tags.size()) ? tags[static_cast<std::size_t>(i)] : 0;
    const bool opens = t == 1 || (t == 2 && start < 0);
    if (start >= 0 && t != 2) {
      out.emplace_back(start, i);
      start = -1;
    }
    if (opens) start = i;
  }
  return out;
}

double bio_span_f1(const std::vector<std::vector<int>>& gold, const std::vector<std::vector<int>>& pred) {
  if (gold.size() != pred.size()) throw Error("bio_span_f1: sequence count mismatch");
  long matched = 0, n_gold = 0, n_pred = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) throw Error("bio_span_f1: sequence length mismatch");
    const auto g = bio_spans(gold[i]);
    const auto p = bio_spans(pred[i]);
    const std::set<std::pair<int, int>> gs(g.begin(), g.end());
    for (const auto& sp : p) matched += gs.count(sp);
    n_gold += static_cast<long>(g.size());
    n_pred += static_cast<long>(p.size());
  }
  if (n_gold == 0 && n_pred == 0) return 1.0;
  if (n_gold == 0 || n_pred == 0) return 0.0;
  return harmonic(static_cast<double>(matched) / n_pred, static_cast<double>(matched) / n_gold);
}

std::size_t input_length(const DialogueSample& sample) {
  std::vector<std::string> parts = sample.context;
  parts.push_back(sample.incomplete);
  return utf8::length(join(parts, " "));
}

EvalReport evaluate(const std::unordered_map<std::string, std::string>& predictions,
                    const std::vector<DialogueSample>& gold,
                    const std::unordered_map<std::string, std::set<std::string>>& important, const EvalConfig& cfg) {
  if (gold.empty()) throw Error("evaluate: empty gold corpus");
  EvalReport rep;
  rep.samples = gold.size();
  std::vector<std::pair<Tokens, Tokens>> pairs;
  std::vector<std::pair<std::string, std::string>> strings;
  std::vector<LengthItem> by_len;
  std::vector<PickupItem> pickup;
  RestoredCounts rc[3];
  double r1 = 0, r2 = 0;
  int em = 0;
  for (const auto& s : gold) {
    if (!s.reference) throw Error("evaluate: gold sample " + s.id + " has no reference");
    auto it = predictions.find(s.id);
    if (it == predictions.end()) throw Error("evaluate: no prediction for sample id '" + s.id + "'");
    const std::string& pred = it->second;
    const Tokens p = split_words(pred, cfg.language);
    const Tokens r = split_words(*s.reference, cfg.language);
    const Tokens inc = split_words(s.incomplete, cfg.language);
    r1 += rouge_n(p, r, 1);
    r2 += rouge_n(p, r, 2);
    for (int n = 1; n <= 3; ++n) {
      const RestoredCounts c = restored_counts(p, r, inc, n);
      rc[n - 1].matched += c.matched;
      rc[n - 1].pred += c.pred;
      rc[n - 1].ref += c.ref;
    }
    em += exact_match(pred, *s.reference);
    pairs.emplace_back(p, r);
    strings.emplace_back(pred, *s.reference);
    by_len.push_back({p, r, input_length(s)});
    auto imp = important.find(s.id);
    if (imp != important.end()) {
      PickupItem item;
      item.important = imp->second;
      for (const auto& t : normalize(p, cfg.language)) item.prediction.insert(t.form);
      pickup.push_back(std::move(item));
    }
  }
  const double n = static_cast<double>(gold.size());
  rep.rouge1 = pct(r1 / n);
  rep.rouge2 = pct(r2 / n);
  rep.bleu1 = pct(bleu_n(pairs, 1));
  rep.bleu2 = pct(bleu_n(pairs, 2));
  rep.bleu4 = pct(bleu_n(pairs, 4));
  rep.f1 = pct(restored_f(rc[0]));
  rep.f2 = pct(restored_f(rc[1]));
  rep.f3 = pct(restored_f(rc[2]));
  rep.em = pct(em / n);
  const bool any_important =
      std::any_of(pickup.begin(), pickup.end(), [](const PickupItem& i) { return !i.important.empty(); });
  if (any_important) rep.pickup_ratio = pct(pickup_ratio(pickup, cfg.pickup));
  rep.difference = length_difference(strings);
  for (const auto& [label, v] : bleu_by_length(by_len, cfg.bucket_bleu_order, cfg.buckets))
    rep.bleu_by_length[label] = pct(v);
  for (const auto& b : cfg.buckets) {
    std::size_t c = 0;
    for (const auto& it : by_len) c += (it.input_chars >= b.lo && (!b.hi || it.input_chars < *b.hi)) ? 1 : 0;
    if (c) rep.bucket_counts[b.label] = c;
  }
  return rep;
}

namespace {

double round1(double x) { return std::round(x * 10.0) / 10.0; }

std::string fmt1(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", x);
  return buf;
}

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["samples"] = samples;
  j["rouge1"] = round1(rouge1);
  j["rouge2"] = round1(rouge2);
  j["bleu1"] = round1(bleu1);
  j["bleu2"] = round1(bleu2);
  j["bleu4"] = round1(bleu4);
  j["f1"] = round1(f1);
  j["f2"] = round1(f2);
  j["f3"] = round1(f3);
  j["em"] = round1(em);
  j["pickup_ratio"] = pickup_ratio ? json(round1(*pickup_ratio)) : json(nullptr);
  j["difference"] = std::round(difference * 100.0) / 100.0;
  json buckets = json::object();
  for (const auto& [label, v] : bleu_by_length)
    buckets[label] = {{"bleu", round1(v)}, {"samples", bucket_counts.count(label) ? bucket_counts.at(label) : 0}};
  j["bleu_by_length"] = buckets;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::string out;
  auto row = [&out](const std::string& name, const std::string& value) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-18s %10s\n", name.c_str(), value.c_str());
    out += buf;
  };
  row("samples", std::to_string(samples));
  row("ROUGE-1", fmt1(rouge1));
  row("ROUGE-2", fmt1(rouge2));
  row("BLEU-1", fmt1(bleu1));
  row("BLEU-2", fmt1(bleu2));
  row("BLEU-4", fmt1(bleu4));
  row("f1", fmt1(f1));
  row("f2", fmt1(f2));
  row("f3", fmt1(f3));
  row("EM", fmt1(em));
  row("pickup ratio", pickup_ratio ? fmt1(*pickup_ratio) : "n/a");
  char diff[32];
  std::snprintf(diff, sizeof(diff), "%.2f", difference);
  row("difference", diff);
  for (const auto& [label, v] : bleu_by_length) row("BLEU " + label, fmt1(v));
  return out;
}

std::unordered_map<std::string, std::string> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictions " + path.string());
  std::unordered_map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (collapse_whitespace(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.contains("id")) throw Error(path.string() + ":" + std::to_string(lineno) + ": missing field 'id'");
    if (!j.contains("prediction") || !j["prediction"].is_string())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": missing field 'prediction'");
    const std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    if (!out.emplace(id, j["prediction"].get<std::string>()).second)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": duplicate id '" + id + "'");
  }
  return out;
}

}  // namespace jet
