#pragma once

#include <string>
#include <vector>

#include "svac/tokenizer.hpp"

namespace svac {

struct VerbEntry {
    std::string base;  // "walk"
    std::string third; // "walks"
    std::string past;  // "walked"
};

// Word lists the prompt grid draws from. Every answer form must be a single
// token with a leading space, names a single token both sentence-initially
// and after a space, and prefixes exactly two tokens once the comma is
// appended; validate() enforces all of that against the live tokenizer.
struct Lexicon {
    std::vector<std::string> names;
    std::string pronoun_singular; // lowercase, e.g. "she"
    std::string pronoun_plural;   // "they"
    std::vector<VerbEntry> regular_verbs;
    std::vector<VerbEntry> irregular_verbs;
    std::vector<std::string> neutral_prefixes; // without trailing comma
    std::vector<std::string> past_prefixes;

    static Lexicon load(const std::string& path); // JSON file
    void validate(const Tokenizer& tok) const;    // throws ValidationError
};

} // namespace svac
