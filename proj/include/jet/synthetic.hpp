#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "jet/corpus.hpp"

namespace jet {

/// Templates for synthetic restoration dialogues. "{e}" marks the entity
/// slot; questions pair an incomplete utterance with its restored form.
struct SynthCategory {
  std::string name;
  std::vector<std::string> entities;
  std::vector<std::string> openers;  // user turns introducing the entity
  std::vector<std::string> replies;  // optional follow-up turns
  std::vector<std::pair<std::string, std::string>> questions;
};

struct SynthTemplates {
  std::vector<SynthCategory> categories;
  std::vector<std::string> fillers;      // entity-free turns
  std::vector<std::string> distractors;  // turns naming an entity of another category

  void validate() const;
  static SynthTemplates builtin();
  /// JSON document {"categories":[{"name","entities","openers","replies",
  /// "questions":[[incomplete, reference],...]}], "fillers":[...], "distractors":[...]}.
  static SynthTemplates load(const std::filesystem::path& path);
};

/// Seed-deterministic corpus of `size` samples. Every reference re-inserts
/// an entity the incomplete utterance leaves out, so each sample has at
/// least one clue token under the English normalizer.
std::vector<DialogueSample> synthesize(std::size_t size, std::uint64_t seed,
                                       const SynthTemplates& templates = SynthTemplates::builtin());

}  // namespace jet
