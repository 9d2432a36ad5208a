#pragma once

#include <string>
#include <string_view>

namespace jet {

/// Porter suffix stripper with the NLTK extensions (irregular-form table,
/// "ies"/"ied" short-word rules, consonant-preceded y->i, extra step-2 rules).
/// Input is lowercased first; words of length <= 2 pass through unchanged.
std::string porter_stem(std::string_view word);

/// Dictionary-free noun lemmatizer: an irregular-plural table followed by the
/// WordNet noun detachment rules, applied with guards in place of the
/// dictionary lookup.
std::string lemmatize_noun(std::string_view word);

}  // namespace jet
