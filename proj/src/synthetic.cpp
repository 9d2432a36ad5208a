#include "jet/synthetic.hpp"

#include <fstream>

#include "json.hpp"

#include "jet/common.hpp"
#include "jet/labeler.hpp"

namespace jet {

using nlohmann::json;

namespace {

std::string fill(const std::string& pattern, const std::string& entity) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t at = pattern.find("{e}", pos);
    if (at == std::string::npos) break;
    out.append(pattern, pos, at - pos);
    out += entity;
    pos = at + 3;
  }
  out.append(pattern, pos);
  return out;
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

}  // namespace

void SynthTemplates::validate() const {
  if (categories.empty()) throw Error("synth templates: no categories");
  for (const auto& c : categories) {
    if (c.entities.empty() || c.openers.empty() || c.questions.empty())
      throw Error("synth templates: category '" + c.name + "' needs entities, openers and questions");
    for (const auto& o : c.openers) {
      if (o.find("{e}") == std::string::npos)
        throw Error("synth templates: opener without {e} in category '" + c.name + "'");
    }
    for (const auto& [inc, ref] : c.questions) {
      if (inc.find("{e}") != std::string::npos || ref.find("{e}") == std::string::npos)
        throw Error("synth templates: question '" + inc + "' must restore {e} in its reference only");
    }
  }
  if (categories.size() < 2 && !distractors.empty())
    throw Error("synth templates: distractors need at least two categories");
}

SynthTemplates SynthTemplates::builtin() {
  SynthTemplates t;
  t.categories = {
      {"band",
       {"paramore", "coldplay", "radiohead", "arctic monkeys", "daft punk", "metallica", "foo fighters", "muse"},
       {"i have been listening to {e} a lot lately", "{e} is my favorite band", "do you know the band {e}"},
       {"{e} released a new album last year", "yes {e} are very popular"},
       {{"when did they tour", "when did {e} tour"},
        {"did they win any awards", "did {e} win any awards"},
        {"what was their first album", "what was the first album of {e}"},
        {"who sings for them", "who sings for {e}"}}},
      {"city",
       {"paris", "tokyo", "new york", "berlin", "madrid", "buenos aires", "cairo", "sydney"},
       {"i am planning a trip to {e}", "my sister just moved to {e}", "have you ever been to {e}"},
       {"{e} is lovely in the spring", "many tourists visit {e} every year"},
       {{"what is the weather like there", "what is the weather like in {e}"},
        {"how many people live there", "how many people live in {e}"},
        {"what should i eat there", "what should i eat in {e}"},
        {"is it expensive", "is {e} expensive"}}},
      {"book",
       {"moby dick", "dune", "emma", "ulysses", "beloved", "dracula", "frankenstein", "middlemarch"},
       {"i just finished reading {e}", "my book club picked {e}", "have you read {e}"},
       {"{e} is a classic", "many readers love {e}"},
       {{"who wrote it", "who wrote {e}"},
        {"when was it published", "when was {e} published"},
        {"is there a movie version", "is there a movie version of {e}"},
        {"how long is it", "how long is {e}"}}},
      {"director",
       {"kubrick", "nolan", "scorsese", "hitchcock", "kurosawa", "tarantino", "bigelow", "spielberg"},
       {"i watched a film by {e} yesterday", "{e} is my favorite director", "what do you think of {e}"},
       {"{e} has made many famous films", "critics often praise {e}"},
       {{"what else did he make", "what else did {e} make"},
        {"where was he born", "where was {e} born"},
        {"did he win an oscar", "did {e} win an oscar"},
        {"what was his first film", "what was the first film of {e}"}}},
      {"food",
       {"sushi", "lasagna", "paella", "ramen", "tacos", "croissants", "dumplings", "falafel"},
       {"i want to cook {e} tonight", "we ordered {e} for lunch", "my favorite dish is {e}"},
       {"{e} is easy to make at home", "{e} tastes great with friends"},
       {{"how long does it take", "how long does {e} take"},
        {"is it healthy", "is {e} healthy"},
        {"what do i need", "what do i need for {e}"},
        {"where did it originate", "where did {e} originate"}}},
  };
  t.fillers = {"that sounds fun", "i see", "sure let me check", "good question", "tell me more"};
  t.distractors = {"my friend keeps talking about {e}", "last week someone mentioned {e}",
                   "i also like {e} sometimes"};
  return t;
}

SynthTemplates SynthTemplates::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open templates " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
  SynthTemplates t;
  try {
    for (const auto& c : j.at("categories")) {
      SynthCategory cat;
      cat.name = c.at("name").get<std::string>();
      cat.entities = c.at("entities").get<std::vector<std::string>>();
      cat.openers = c.at("openers").get<std::vector<std::string>>();
      cat.replies = c.value("replies", std::vector<std::string>{});
      for (const auto& q : c.at("questions")) cat.questions.emplace_back(q.at(0).get<std::string>(), q.at(1).get<std::string>());
      t.categories.push_back(std::move(cat));
    }
    t.fillers = j.value("fillers", std::vector<std::string>{});
    t.distractors = j.value("distractors", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed templates: " + e.what());
  }
  t.validate();
  return t;
}

std::vector<DialogueSample> synthesize(std::size_t size, std::uint64_t seed, const SynthTemplates& templates) {
  if (size < 1) throw Error("synth: size must be >= 1");
  templates.validate();
  const LanguageConfig english = LanguageConfig::english();
  Rng rng(seed);
  std::vector<DialogueSample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100) throw Error("synth: templates cannot produce a sample with a clue token");
      const auto c = static_cast<std::size_t>(rng.below(templates.categories.size()));
      const SynthCategory& cat = templates.categories[c];
      const std::string& entity = pick(cat.entities, rng);
      const auto& [incomplete, reference] = pick(cat.questions, rng);

      DialogueSample s;
      s.id = "synth-" + std::to_string(i);
      s.context.push_back(fill(pick(cat.openers, rng), entity));
      if (!cat.replies.empty() && rng.uniform() < 0.5) s.context.push_back(fill(pick(cat.replies, rng), entity));
      if (!templates.distractors.empty() && rng.uniform() < 0.5) {
        auto other = static_cast<std::size_t>(rng.below(templates.categories.size() - 1));
        if (other >= c) ++other;
        const std::string turn =
            fill(pick(templates.distractors, rng), pick(templates.categories[other].entities, rng));
        if (rng.uniform() < 0.5)
          s.context.insert(s.context.begin(), turn);
        else
          s.context.push_back(turn);
      }
      if (!templates.fillers.empty() && rng.uniform() < 0.3) s.context.push_back(pick(templates.fillers, rng));
      s.incomplete = incomplete;
      s.reference = fill(reference, entity);
      if (extract_clue_tokens(*s.reference, s.incomplete, english).empty()) continue;
      out.push_back(std::move(s));
      break;
    }
  }
  return out;
}

}  // namespace jet
