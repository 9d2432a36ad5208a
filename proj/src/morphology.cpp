#include "jet/morphology.hpp"

#include <array>
#include <functional>
#include <unordered_map>

#include "jet/common.hpp"

namespace jet {

namespace {

// ---------------------------------------------------------------------------
// Porter stemmer

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool is_consonant(const std::string& w, std::size_t i) {
  if (is_vowel(w[i])) return false;
  if (w[i] == 'y') {
    bool negate = false;
    while (i > 0 && w[i] == 'y') {
      negate = !negate;
      --i;
    }
    return !is_vowel(w[i]) != negate;
  }
  return true;
}

// y is a consonant iff it starts the word or follows a vowel.
std::vector<bool> consonant_flags(const std::string& w) {
  std::vector<bool> flags(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (is_vowel(w[i]))
      flags[i] = false;
    else if (w[i] == 'y')
      flags[i] = i == 0 ? true : !flags[i - 1];
    else
      flags[i] = true;
  }
  return flags;
}

int measure(const std::string& stem) {
  const auto flags = consonant_flags(stem);
  int m = 0;
  for (std::size_t i = 1; i < flags.size(); ++i) {
    if (!flags[i - 1] && flags[i]) ++m;
  }
  return m;
}

bool contains_vowel(const std::string& stem) {
  for (bool c : consonant_flags(stem)) {
    if (!c) return true;
  }
  return false;
}

bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string drop(const std::string& w, std::size_t n) { return w.substr(0, w.size() - n); }

bool ends_double_consonant(const std::string& w) {
  return w.size() >= 2 && w[w.size() - 1] == w[w.size() - 2] && is_consonant(w, w.size() - 1);
}

bool ends_cvc(const std::string& w) {
  const std::size_t n = w.size();
  if (n >= 3 && is_consonant(w, n - 3) && !is_consonant(w, n - 2) && is_consonant(w, n - 1) &&
      w[n - 1] != 'w' && w[n - 1] != 'x' && w[n - 1] != 'y')
    return true;
  return n == 2 && !is_consonant(w, 0) && is_consonant(w, 1);
}

using Condition = std::function<bool(const std::string&)>;

struct Rule {
  std::string suffix;  // "*d" denotes a double consonant ending
  std::string replacement;
  Condition condition;
};

// First rule whose suffix matches decides the outcome, even when its
// condition fails.
std::string apply_rules(const std::string& word, const std::vector<Rule>& rules) {
  for (const auto& r : rules) {
    if (r.suffix == "*d" && ends_double_consonant(word)) {
      const std::string stem = drop(word, 2);
      if (!r.condition || r.condition(stem)) return stem + r.replacement;
      return word;
    }
    if (r.suffix != "*d" && ends_with(word, r.suffix)) {
      const std::string stem = drop(word, r.suffix.size());
      if (!r.condition || r.condition(stem)) return stem + r.replacement;
      return word;
    }
  }
  return word;
}

bool positive_measure(const std::string& s) { return measure(s) > 0; }
bool measure_gt1(const std::string& s) { return measure(s) > 1; }

std::string step1a(const std::string& w) {
  if (ends_with(w, "ies") && w.size() == 4) return drop(w, 3) + "ie";
  return apply_rules(w, {{"sses", "ss", {}}, {"ies", "i", {}}, {"ss", "ss", {}}, {"s", "", {}}});
}

std::string step1b(const std::string& w) {
  if (ends_with(w, "ied")) return drop(w, 3) + (w.size() == 4 ? "ie" : "i");
  if (ends_with(w, "eed")) {
    const std::string stem = drop(w, 3);
    return measure(stem) > 0 ? stem + "ee" : w;
  }
  std::string stem;
  bool matched = false;
  for (std::string_view suffix : {"ed", "ing"}) {
    if (ends_with(w, suffix)) {
      stem = drop(w, suffix.size());
      if (contains_vowel(stem)) {
        matched = true;
        break;
      }
    }
  }
  if (!matched) return w;
  const char last = stem.empty() ? '\0' : stem.back();
  return apply_rules(
      stem, {{"at", "ate", {}},
             {"bl", "ble", {}},
             {"iz", "ize", {}},
             {"*d", std::string(1, last), [last](const std::string&) { return last != 'l' && last != 's' && last != 'z'; }},
             {"", "e", [](const std::string& s) { return measure(s) == 1 && ends_cvc(s); }}});
}

std::string step1c(const std::string& w) {
  return apply_rules(w, {{"y", "i", [](const std::string& s) { return s.size() > 1 && is_consonant(s, s.size() - 1); }}});
}

std::string step2(const std::string& w) {
  if (ends_with(w, "alli") && positive_measure(drop(w, 4))) return step2(drop(w, 4) + "al");
  std::vector<Rule> rules = {
      {"ational", "ate", positive_measure}, {"tional", "tion", positive_measure},
      {"enci", "ence", positive_measure},   {"anci", "ance", positive_measure},
      {"izer", "ize", positive_measure},    {"bli", "ble", positive_measure},
      {"alli", "al", positive_measure},     {"entli", "ent", positive_measure},
      {"eli", "e", positive_measure},       {"ousli", "ous", positive_measure},
      {"ization", "ize", positive_measure}, {"ation", "ate", positive_measure},
      {"ator", "ate", positive_measure},    {"alism", "al", positive_measure},
      {"iveness", "ive", positive_measure}, {"fulness", "ful", positive_measure},
      {"ousness", "ous", positive_measure}, {"aliti", "al", positive_measure},
      {"iviti", "ive", positive_measure},   {"biliti", "ble", positive_measure},
      {"fulli", "ful", positive_measure},
      {"logi", "log", [w](const std::string&) { return positive_measure(drop(w, 3)); }},
  };
  return apply_rules(w, rules);
}

std::string step3(const std::string& w) {
  return apply_rules(w, {{"icate", "ic", positive_measure},
                         {"ative", "", positive_measure},
                         {"alize", "al", positive_measure},
                         {"iciti", "ic", positive_measure},
                         {"ical", "ic", positive_measure},
                         {"ful", "", positive_measure},
                         {"ness", "", positive_measure}});
}

std::string step4(const std::string& w) {
  return apply_rules(
      w, {{"al", "", measure_gt1},    {"ance", "", measure_gt1}, {"ence", "", measure_gt1},
          {"er", "", measure_gt1},    {"ic", "", measure_gt1},   {"able", "", measure_gt1},
          {"ible", "", measure_gt1},  {"ant", "", measure_gt1},  {"ement", "", measure_gt1},
          {"ment", "", measure_gt1},  {"ent", "", measure_gt1},
          {"ion", "", [](const std::string& s) { return measure(s) > 1 && !s.empty() && (s.back() == 's' || s.back() == 't'); }},
          {"ou", "", measure_gt1},    {"ism", "", measure_gt1},  {"ate", "", measure_gt1},
          {"iti", "", measure_gt1},   {"ous", "", measure_gt1},  {"ive", "", measure_gt1},
          {"ize", "", measure_gt1}});
}

std::string step5a(const std::string& w) {
  if (ends_with(w, "e")) {
    const std::string stem = drop(w, 1);
    const int m = measure(stem);
    if (m > 1) return stem;
    if (m == 1 && !ends_cvc(stem)) return stem;
  }
  return w;
}

std::string step5b(const std::string& w) {
  return apply_rules(w, {{"ll", "l", [w](const std::string&) { return measure(drop(w, 1)) > 1; }}});
}

const std::unordered_map<std::string, std::string>& irregular_stems() {
  static const std::unordered_map<std::string, std::string> table = {
      {"sky", "sky"},         {"skies", "sky"},      {"dying", "die"},     {"lying", "lie"},
      {"tying", "tie"},       {"news", "news"},      {"innings", "inning"}, {"inning", "inning"},
      {"outings", "outing"},  {"outing", "outing"},  {"cannings", "canning"}, {"canning", "canning"},
      {"howe", "howe"},       {"proceed", "proceed"}, {"exceed", "exceed"}, {"succeed", "succeed"},
  };
  return table;
}

}  // namespace

std::string porter_stem(std::string_view word) {
  std::string w = to_lower_ascii(word);
  if (auto it = irregular_stems().find(w); it != irregular_stems().end()) return it->second;
  if (word.size() <= 2) return w;
  w = step1a(w);
  w = step1b(w);
  w = step1c(w);
  w = step2(w);
  w = step3(w);
  w = step4(w);
  w = step5a(w);
  w = step5b(w);
  return w;
}

// ---------------------------------------------------------------------------
// Noun lemmatizer

namespace {

const std::unordered_map<std::string, std::string>& irregular_nouns() {
  static const std::unordered_map<std::string, std::string> table = {
      {"men", "man"},       {"women", "woman"},   {"children", "child"}, {"feet", "foot"},
      {"teeth", "tooth"},   {"geese", "goose"},   {"mice", "mouse"},     {"lice", "louse"},
      {"oxen", "ox"},       {"people", "people"}, {"data", "datum"},     {"criteria", "criterion"},
      {"phenomena", "phenomenon"}, {"wolves", "wolf"}, {"knives", "knife"}, {"wives", "wife"},
      {"lives", "life"},    {"leaves", "leaf"},   {"halves", "half"},    {"shelves", "shelf"},
      {"thieves", "thief"}, {"loaves", "loaf"},   {"calves", "calf"},
  };
  return table;
}

bool is_ascii_alpha(std::string_view w) {
  for (char c : w) {
    if (!(c >= 'a' && c <= 'z')) return false;
  }
  return true;
}

}  // namespace

std::string lemmatize_noun(std::string_view word) {
  std::string w(word);
  if (auto it = irregular_nouns().find(w); it != irregular_nouns().end()) return it->second;
  if (w.size() <= 3 || !is_ascii_alpha(w)) return w;
  if (ends_with(w, "men") && w.size() > 4) return drop(w, 3) + "man";
  if (ends_with(w, "ies") && w.size() > 4) return drop(w, 3) + "y";
  for (std::string_view suffix : {"sses", "shes", "ches", "xes", "zes"}) {
    if (ends_with(w, suffix)) return drop(w, 2);
  }
  // Singular nouns that merely end in s.
  for (std::string_view suffix : {"ss", "us", "is", "ous", "ics"}) {
    if (ends_with(w, suffix)) return w;
  }
  if (ends_with(w, "s")) return drop(w, 1);
  return w;
}

}  // namespace jet
