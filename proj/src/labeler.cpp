#include "jet/labeler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "jet/common.hpp"
#include "jet/morphology.hpp"

namespace jet {

using nlohmann::json;

// ---------------------------------------------------------------------------
// EmbeddingTable

EmbeddingTable::EmbeddingTable(int dimension, Fallback fallback, std::uint64_t seed)
    : dimension_(dimension), fallback_(fallback), seed_(seed) {
  if (dimension < 1) throw Error("embedding dimension must be >= 1");
}

EmbeddingTable EmbeddingTable::hashed(int dimension, std::uint64_t seed) {
  return EmbeddingTable(dimension, Fallback::hash, seed);
}

EmbeddingTable EmbeddingTable::load_text(const std::filesystem::path& path, Fallback fallback,
                                         std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty embedding file");
  std::istringstream header(line);
  long count = 0;
  int dim = 0;
  if (!(header >> count >> dim) || count < 0 || dim < 1)
    throw Error(path.string() + ": bad header, expected \"count dim\"");
  EmbeddingTable table(dim, fallback, seed);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    std::vector<double> vec;
    vec.reserve(static_cast<std::size_t>(dim));
    double v = 0.0;
    while (row >> v) vec.push_back(v);
    if (static_cast<int>(vec.size()) != dim)
      throw Error(path.string() + ": line " + std::to_string(line_no) + " has " +
                  std::to_string(vec.size()) + " components, expected " + std::to_string(dim));
    table.add(token, std::move(vec));
  }
  return table;
}

void EmbeddingTable::add(const std::string& token, std::vector<double> vec) {
  if (static_cast<int>(vec.size()) != dimension_)
    throw Error("embedding for '" + token + "' has wrong dimension");
  vectors_[token] = std::move(vec);
}

std::optional<std::vector<double>> EmbeddingTable::lookup(const std::string& token) const {
  if (auto it = vectors_.find(token); it != vectors_.end()) return it->second;
  if (fallback_ == Fallback::hash) return hash_vector(token);
  return std::nullopt;
}

std::vector<double> EmbeddingTable::hash_vector(const std::string& token) const {
  std::uint64_t state = fnv1a(token) ^ splitmix64(seed_);
  std::vector<double> v(static_cast<std::size_t>(dimension_));
  for (auto& x : v) {
    state = splitmix64(state);
    x = static_cast<double>(state >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Labels

std::vector<double> ScoreMatrix::row(std::size_t i) const {
  return {values.begin() + static_cast<std::ptrdiff_t>(i * cols),
          values.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols)};
}

std::string to_string(LabelMode mode) {
  switch (mode) {
    case LabelMode::soft: return "soft";
    case LabelMode::hard: return "hard";
    case LabelMode::defined: return "defined";
    case LabelMode::none: return "none";
  }
  return "none";
}

LabelMode parse_label_mode(std::string_view name) {
  if (name == "soft") return LabelMode::soft;
  if (name == "hard") return LabelMode::hard;
  if (name == "defined") return LabelMode::defined;
  if (name == "none") return LabelMode::none;
  throw Error("unknown label mode '" + std::string(name) + "'");
}

char to_char(BioTag t) {
  switch (t) {
    case BioTag::O: return 'O';
    case BioTag::B: return 'B';
    case BioTag::I: return 'I';
  }
  return 'O';
}

BioTag parse_bio(std::string_view s) {
  if (s == "O") return BioTag::O;
  if (s == "B") return BioTag::B;
  if (s == "I") return BioTag::I;
  throw Error("invalid BIO tag '" + std::string(s) + "'");
}

void PickerLabels::validate() const {
  if (mode == LabelMode::soft) {
    for (const auto& u : scores) {
      for (double s : u) {
        if (!(s >= 0.0 && s <= 1.0)) throw Error("soft label outside [0,1]");
      }
    }
    return;
  }
  for (std::size_t u = 0; u < tags.size(); ++u) {
    BioTag prev = BioTag::O;
    for (BioTag t : tags[u]) {
      if (t == BioTag::I && prev == BioTag::O)
        throw Error("utterance " + std::to_string(u) + ": I tag without preceding B or I");
      prev = t;
    }
  }
}

namespace {

const std::set<std::string>& cjk_punctuation() {
  static const std::set<std::string> marks = {"，", "。", "？", "！", "、", "：", "；", "“", "”",
                                              "‘", "’", "（", "）", "《", "》", "…", "—", "·"};
  return marks;
}

bool is_punctuation(const std::string& token) {
  for (const auto& cp : utf8::code_points(token)) {
    const bool ascii_punct = cp.size() == 1 && std::ispunct(static_cast<unsigned char>(cp[0]));
    if (!ascii_punct && !cjk_punctuation().count(cp)) return false;
  }
  return !token.empty();
}

}  // namespace

std::string normalize_form(const std::string& token, const LanguageConfig& cfg) {
  std::string form = cfg.lowercase ? to_lower_ascii(token) : token;
  if (cfg.lemmatize) form = lemmatize_noun(form);
  if (cfg.stem) form = porter_stem(form);
  return form;
}

std::vector<NormalizedToken> normalize(const std::vector<std::string>& tokens, const LanguageConfig& cfg) {
  std::vector<NormalizedToken> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (cfg.is_stopword(tokens[i]) || is_punctuation(tokens[i])) continue;
    out.push_back({i, normalize_form(tokens[i], cfg)});
  }
  return out;
}

ClueTokenSet extract_clue_tokens(const std::string& reference, const std::string& incomplete,
                                 const LanguageConfig& cfg) {
  std::set<std::string> inc_forms;
  for (auto& t : normalize(split_words(incomplete, cfg), cfg)) inc_forms.insert(t.form);
  ClueTokenSet clues;
  const auto ref_words = split_words(reference, cfg);
  for (const auto& t : normalize(ref_words, cfg)) {
    if (inc_forms.count(t.form)) continue;
    clues.tokens.insert(t.form);
    auto& surfaces = clues.surface_forms[t.form];
    if (std::find(surfaces.begin(), surfaces.end(), ref_words[t.index]) == surfaces.end())
      surfaces.push_back(ref_words[t.index]);
  }
  return clues;
}

double similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

// Stored vector for the normalized form, then any surface form, then the
// table's fallback for the normalized form.
std::optional<std::vector<double>> resolve(const EmbeddingTable& emb, const std::string& form,
                                           const std::vector<std::string>& surfaces) {
  if (emb.contains(form)) return emb.lookup(form);
  for (const auto& s : surfaces) {
    if (emb.contains(s)) return emb.lookup(s);
  }
  return emb.lookup(form);
}

}  // namespace

ScoreMatrix score_matrix(const std::vector<ContextWord>& context, const ClueTokenSet& clues,
                         const EmbeddingTable& emb) {
  ScoreMatrix d;
  d.rows = context.size();
  d.cols = clues.size();
  d.values.assign(d.rows * d.cols, 0.0);
  if (d.cols == 0) return d;
  std::vector<std::string> clue_forms(clues.tokens.begin(), clues.tokens.end());
  std::vector<std::optional<std::vector<double>>> clue_vecs;
  for (const auto& c : clue_forms) {
    auto it = clues.surface_forms.find(c);
    clue_vecs.push_back(resolve(emb, c, it == clues.surface_forms.end() ? std::vector<std::string>{} : it->second));
  }
  const double below_one = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < d.rows; ++i) {
    std::optional<std::vector<double>> hv;
    bool resolved = false;
    for (std::size_t j = 0; j < d.cols; ++j) {
      double& cell = d.values[i * d.cols + j];
      if (context[i].form == clue_forms[j]) {
        cell = 1.0;
        continue;
      }
      if (!resolved) {
        hv = resolve(emb, context[i].form, {context[i].surface});
        resolved = true;
      }
      if (!hv || !clue_vecs[j]) continue;
      cell = std::min(similarity(*hv, *clue_vecs[j]), below_one);
    }
  }
  return d;
}

double soft_label(const std::vector<double>& row) {
  if (row.empty()) return 0.0;
  return std::clamp(*std::max_element(row.begin(), row.end()), 0.0, 1.0);
}

std::uint8_t hard_label(const std::vector<double>& row) {
  if (row.empty()) return 0;
  return *std::max_element(row.begin(), row.end()) == 1.0 ? 1 : 0;
}

std::vector<double> soft_labels(const ScoreMatrix& d) {
  std::vector<double> out(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) out[i] = soft_label(d.row(i));
  return out;
}

std::vector<std::uint8_t> hard_labels(const ScoreMatrix& d) {
  std::vector<std::uint8_t> out(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) out[i] = hard_label(d.row(i));
  return out;
}

std::vector<BioTag> to_bio(const std::vector<std::uint8_t>& bits) {
  std::vector<BioTag> out(bits.size(), BioTag::O);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) continue;
    out[i] = (i > 0 && bits[i - 1]) ? BioTag::I : BioTag::B;
  }
  return out;
}

LabeledSample label_sample(const DialogueSample& sample, LabelMode mode, const EmbeddingTable& emb,
                           const LanguageConfig& cfg) {
  if (mode != LabelMode::soft && mode != LabelMode::hard)
    throw Error("label_sample: mode must be soft or hard, got " + to_string(mode));
  if (!sample.reference) throw Error("sample " + sample.id + ": labels require a reference");
  const ClueTokenSet clues = extract_clue_tokens(*sample.reference, sample.incomplete, cfg);
  PickerLabels labels;
  labels.mode = mode;
  for (const auto& utterance : sample.context) {
    const auto words = split_words(utterance, cfg);
    const auto norm = normalize(words, cfg);
    std::vector<ContextWord> ctx;
    ctx.reserve(norm.size());
    for (const auto& t : norm) ctx.push_back({words[t.index], t.form});
    const ScoreMatrix d = score_matrix(ctx, clues, emb);
    if (mode == LabelMode::soft) {
      const auto soft = soft_labels(d);
      std::vector<double> scores(words.size(), 0.0);
      for (std::size_t k = 0; k < norm.size(); ++k) scores[norm[k].index] = soft[k];
      labels.scores.push_back(std::move(scores));
    } else {
      const auto hard = hard_labels(d);
      std::vector<std::uint8_t> bits(words.size(), 0);
      for (std::size_t k = 0; k < norm.size(); ++k) bits[norm[k].index] = hard[k];
      labels.tags.push_back(to_bio(bits));
    }
  }
  return {sample, std::move(labels)};
}

std::set<std::string> important_tokens(const LabeledSample& labeled, const LanguageConfig& cfg) {
  std::set<std::string> out;
  if (!labeled.labels) return out;
  const auto& labels = *labeled.labels;
  const auto& ctx = labeled.sample.context;
  for (std::size_t u = 0; u < ctx.size() && u < labels.utterances(); ++u) {
    const auto words = split_words(ctx[u], cfg);
    for (std::size_t w = 0; w < words.size() && w < labels.words_in(u); ++w) {
      const bool marked = labels.mode == LabelMode::soft ? labels.scores[u][w] == 1.0
                                                         : labels.tags[u][w] != BioTag::O;
      if (marked && !cfg.is_stopword(words[w])) out.insert(normalize_form(words[w], cfg));
    }
  }
  return out;
}

double label_density(const std::vector<LabeledSample>& corpus) {
  double marked = 0.0;
  double total = 0.0;
  for (const auto& s : corpus) {
    if (!s.labels) continue;
    for (std::size_t u = 0; u < s.labels->utterances(); ++u) {
      for (std::size_t w = 0; w < s.labels->words_in(u); ++w) {
        marked += s.labels->mode == LabelMode::soft ? s.labels->scores[u][w]
                                                    : (s.labels->tags[u][w] != BioTag::O ? 1.0 : 0.0);
        total += 1.0;
      }
    }
  }
  return total > 0.0 ? marked / total : 0.0;
}

// ---------------------------------------------------------------------------
// Labeled JSONL

namespace {

PickerLabels labels_from_json(const json& j, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no);
  if (!j.is_object() || !j.contains("mode")) throw Error(where + ": 'labels' needs a 'mode'");
  PickerLabels labels;
  labels.mode = parse_label_mode(j.at("mode").get<std::string>());
  if (labels.mode == LabelMode::soft) {
    if (!j.contains("scores")) throw Error(where + ": soft labels need 'scores'");
    labels.scores = j.at("scores").get<std::vector<std::vector<double>>>();
  } else if (labels.mode == LabelMode::hard || labels.mode == LabelMode::defined) {
    if (!j.contains("tags")) throw Error(where + ": labels need 'tags'");
    for (const auto& utt : j.at("tags")) {
      std::vector<BioTag> tags;
      for (const auto& t : utt) tags.push_back(parse_bio(t.get<std::string>()));
      labels.tags.push_back(std::move(tags));
    }
  } else {
    throw Error(where + ": label mode 'none' cannot be stored");
  }
  try {
    labels.validate();
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
  return labels;
}

json labels_to_json(const PickerLabels& labels) {
  json j;
  j["mode"] = to_string(labels.mode);
  if (labels.mode == LabelMode::soft) {
    j["scores"] = labels.scores;
  } else {
    json tags = json::array();
    for (const auto& utt : labels.tags) {
      json row = json::array();
      for (BioTag t : utt) row.push_back(std::string(1, to_char(t)));
      tags.push_back(std::move(row));
    }
    j["tags"] = std::move(tags);
  }
  return j;
}

}  // namespace

std::vector<LabeledSample> load_labeled_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<DialogueSample> samples;
  try {
    samples = parse_corpus(text);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  std::vector<LabeledSample> out;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    const json rec = json::parse(line);
    LabeledSample ls{samples[out.size()], std::nullopt};
    if (rec.contains("labels") && !rec.at("labels").is_null()) {
      ls.labels = labels_from_json(rec.at("labels"), line_no);
      if (ls.labels->utterances() != ls.sample.context.size())
        throw Error(path.string() + ": line " + std::to_string(line_no) +
                    ": label utterance count does not match context");
    }
    out.push_back(std::move(ls));
  }
  return out;
}

void save_labeled_corpus(const std::filesystem::path& path, const std::vector<LabeledSample>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& ls : corpus) {
    json rec;
    rec["id"] = ls.sample.id;
    rec["context"] = ls.sample.context;
    rec["utterance"] = ls.sample.incomplete;
    if (ls.sample.reference) rec["reference"] = *ls.sample.reference;
    if (ls.labels) rec["labels"] = labels_to_json(*ls.labels);
    out << rec.dump() << '\n';
  }
}

}  // namespace jet
