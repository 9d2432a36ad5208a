#include "jet/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "jet/common.hpp"
#include "resources.hpp"

namespace jet {

using nlohmann::json;

void DialogueSample::validate() const {
  if (context.empty()) throw Error("sample " + id + ": context is empty");
  if (collapse_whitespace(incomplete).empty())
    throw Error("sample " + id + ": incomplete utterance is empty");
  if (reference && collapse_whitespace(*reference).empty())
    throw Error("sample " + id + ": reference is empty");
}

SubwordInventory SubwordInventory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open subword inventory " + path.string());
  SubwordInventory inv;
  std::string line;
  while (std::getline(in, line)) {
    line = collapse_whitespace(line);
    if (!line.empty()) inv.pieces.insert(line);
  }
  return inv;
}

namespace {

std::shared_ptr<const StopwordSet> parse_stopwords(std::istream& in) {
  auto set = std::make_shared<StopwordSet>();
  std::string line;
  while (std::getline(in, line)) {
    line = collapse_whitespace(line);
    if (!line.empty()) set->insert(line);
  }
  return set;
}

}  // namespace

std::shared_ptr<const StopwordSet> default_stopwords(Language lang) {
  static const auto english = [] {
    std::istringstream in{std::string(resources::kEnglishStopwords)};
    return parse_stopwords(in);
  }();
  static const auto chinese = [] {
    std::istringstream in{std::string(resources::kChineseStopwords)};
    return parse_stopwords(in);
  }();
  switch (lang) {
    case Language::english: return english;
    case Language::chinese: return chinese;
    case Language::other: break;
  }
  return std::make_shared<StopwordSet>();
}

std::shared_ptr<const StopwordSet> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stopword file " + path.string());
  return parse_stopwords(in);
}

LanguageConfig LanguageConfig::english() {
  LanguageConfig cfg;
  cfg.language = Language::english;
  cfg.stopwords = default_stopwords(Language::english);
  return cfg;
}

LanguageConfig LanguageConfig::chinese() {
  LanguageConfig cfg;
  cfg.language = Language::chinese;
  cfg.stopwords = default_stopwords(Language::chinese);
  cfg.lemmatize = false;
  cfg.stem = false;
  cfg.granularity = Granularity::character;
  return cfg;
}

LanguageConfig LanguageConfig::for_language(Language lang) {
  switch (lang) {
    case Language::english: return english();
    case Language::chinese: return chinese();
    case Language::other: break;
  }
  LanguageConfig cfg;
  cfg.language = Language::other;
  cfg.lemmatize = false;
  cfg.stem = false;
  return cfg;
}

bool LanguageConfig::is_stopword(std::string_view token) const {
  if (!stopwords) return false;
  if (stopwords->count(std::string(token))) return true;
  return stopwords->count(to_lower_ascii(token)) > 0;
}

void LanguageConfig::validate() const {
  if (language == Language::chinese && (lemmatize || stem))
    throw Error("chinese language config must not lemmatize or stem");
}

std::string to_string(Language lang) {
  switch (lang) {
    case Language::english: return "english";
    case Language::chinese: return "chinese";
    case Language::other: return "other";
  }
  return "other";
}

Language parse_language(std::string_view name) {
  if (name == "english" || name == "en") return Language::english;
  if (name == "chinese" || name == "zh") return Language::chinese;
  if (name == "other") return Language::other;
  throw Error("unknown language '" + std::string(name) + "'");
}

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::whitespace_word: return "whitespace";
    case Granularity::character: return "character";
    case Granularity::subword: return "subword";
  }
  return "whitespace";
}

Granularity parse_granularity(std::string_view name) {
  if (name == "whitespace" || name == "word") return Granularity::whitespace_word;
  if (name == "character" || name == "char") return Granularity::character;
  if (name == "subword") return Granularity::subword;
  throw Error("unknown granularity '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Corpus IO

namespace {

DialogueSample parse_record(const json& rec, std::size_t line_no, std::size_t index) {
  const std::string where = "line " + std::to_string(line_no);
  if (!rec.is_object()) throw Error(where + ": record is not a JSON object");
  DialogueSample s;
  if (!rec.contains("context")) throw Error(where + ": missing field 'context'");
  if (!rec.contains("utterance")) throw Error(where + ": missing field 'utterance'");
  const auto& ctx = rec.at("context");
  if (!ctx.is_array()) throw Error(where + ": field 'context' must be an array of strings");
  for (const auto& u : ctx) {
    if (!u.is_string()) throw Error(where + ": field 'context' must be an array of strings");
    s.context.push_back(u.get<std::string>());
  }
  if (!rec.at("utterance").is_string()) throw Error(where + ": field 'utterance' must be a string");
  s.incomplete = rec.at("utterance").get<std::string>();
  if (rec.contains("reference") && !rec.at("reference").is_null()) {
    if (!rec.at("reference").is_string()) throw Error(where + ": field 'reference' must be a string");
    s.reference = rec.at("reference").get<std::string>();
  }
  if (rec.contains("id") && !rec.at("id").is_null()) {
    const auto& id = rec.at("id");
    s.id = id.is_string() ? id.get<std::string>() : id.dump();
  } else {
    s.id = std::to_string(index);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(where + ": " + e.what());
  }
  return s;
}

}  // namespace

std::vector<DialogueSample> parse_corpus(std::string_view text, std::string_view schema) {
  if (schema != "jsonl") throw Error("unsupported corpus schema '" + std::string(schema) + "'");
  std::vector<DialogueSample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    out.push_back(parse_record(rec, line_no, out.size()));
  }
  if (out.empty()) throw Error("corpus is empty");
  return out;
}

std::vector<DialogueSample> load_corpus(const std::filesystem::path& path, std::string_view schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_corpus(buf.str(), schema);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void save_corpus(const std::filesystem::path& path, const std::vector<DialogueSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : samples) {
    json rec;
    rec["id"] = s.id;
    rec["context"] = s.context;
    rec["utterance"] = s.incomplete;
    if (s.reference) rec["reference"] = *s.reference;
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tokenization

namespace {

bool is_space_code_point(const std::string& cp) {
  if (cp.size() == 1) return std::isspace(static_cast<unsigned char>(cp[0])) != 0;
  return cp == "　" || cp == " ";
}

std::vector<std::string> greedy_pieces(const std::string& word, const SubwordInventory& inv) {
  const auto cps = utf8::code_points(word);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < cps.size()) {
    std::size_t end = cps.size();
    std::string found;
    for (; end > start; --end) {
      std::string cand = start > 0 ? "##" : "";
      for (std::size_t k = start; k < end; ++k) cand += cps[k];
      if (inv.pieces.count(cand)) {
        found = std::move(cand);
        break;
      }
    }
    if (found.empty()) {
      // Unknown code point: emit it as its own piece.
      found = (start > 0 ? "##" : "") + cps[start];
      end = start + 1;
    }
    out.push_back(std::move(found));
    start = end;
  }
  return out;
}

}  // namespace

std::vector<std::string> split_words(std::string_view text, const LanguageConfig& cfg) {
  std::string norm = collapse_whitespace(text);
  if (cfg.lowercase) norm = to_lower_ascii(norm);
  std::vector<std::string> out;
  if (cfg.granularity == Granularity::character) {
    for (auto& cp : utf8::code_points(norm)) {
      if (!is_space_code_point(cp)) out.push_back(std::move(cp));
    }
    return out;
  }
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    if (end > start) out.push_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::vector<std::string> word_pieces(const std::string& word, const LanguageConfig& cfg) {
  if (cfg.granularity != Granularity::subword || !cfg.subwords) return {word};
  return greedy_pieces(word, *cfg.subwords);
}

std::vector<std::string> tokenize(std::string_view text, const LanguageConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& w : split_words(text, cfg)) {
    for (auto& p : word_pieces(w, cfg)) out.push_back(std::move(p));
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens, const LanguageConfig& cfg) {
  switch (cfg.granularity) {
    case Granularity::character: return join(tokens, "");
    case Granularity::whitespace_word: return join(tokens, " ");
    case Granularity::subword: {
      std::string out;
      for (const auto& t : tokens) {
        if (t.rfind("##", 0) == 0 && !out.empty()) {
          out += t.substr(2);
        } else {
          if (!out.empty()) out += ' ';
          out += t;
        }
      }
      return out;
    }
  }
  return join(tokens, " ");
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.empty()) {
    for (auto t : kReservedTokens) tokens.emplace_back(t);
  }
  if (tokens.size() < static_cast<std::size_t>(kReserved))
    throw Error("vocabulary is missing reserved tokens");
  for (int i = 0; i < kReserved; ++i) {
    if (tokens[i] != kReservedTokens[i])
      throw Error("vocabulary reserved id " + std::to_string(i) + " must be " +
                  std::string(kReservedTokens[i]));
  }
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw Error("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return h;
}

std::string Vocabulary::to_json() const { return json(tokens_).dump(); }

Vocabulary Vocabulary::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("invalid vocabulary JSON: ") + e.what());
  }
  if (!j.is_array()) throw Error("vocabulary JSON must be an array of tokens");
  return Vocabulary(j.get<std::vector<std::string>>());
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

Vocabulary build_vocab(const std::vector<DialogueSample>& samples, int max_size,
                       const LanguageConfig& cfg) {
  if (max_size <= Vocabulary::kReserved)
    throw Error("vocabulary max_size " + std::to_string(max_size) + " leaves no room beyond the " +
                std::to_string(Vocabulary::kReserved) + " reserved tokens");
  std::map<std::string, long> counts;
  auto count = [&](const std::string& text) {
    for (auto& t : tokenize(text, cfg)) ++counts[t];
  };
  for (const auto& s : samples) {
    for (const auto& u : s.context) count(u);
    count(s.incomplete);
    if (s.reference) count(*s.reference);
  }
  std::vector<std::pair<std::string, long>> ranked;
  for (auto& [tok, n] : counts) {
    bool reserved = false;
    for (auto r : Vocabulary::kReservedTokens) reserved = reserved || tok == r;
    if (!reserved) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  for (auto t : Vocabulary::kReservedTokens) tokens.emplace_back(t);
  for (const auto& [tok, n] : ranked) {
    if (static_cast<int>(tokens.size()) >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<int> ids_of(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.id(t));
  return out;
}

}  // namespace jet
