#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "svac/lexicon.hpp"
#include "svac/rng.hpp"

namespace svac {

enum class Tense { present, past };

struct PromptFactors {
    bool is_plural = false;
    bool is_negated = false;
    bool has_prefix = false;
    bool is_pronoun = false;
    Tense tense = Tense::present;
    bool use_irregular = false;

    auto operator<=>(const PromptFactors&) const = default;

    // 0..63; bit order: plural, negated, prefix, pronoun, past, irregular
    int cell_index() const;
    static PromptFactors from_cell(int index);
    std::string label() const; // e.g. "Singular|Affirmative|Without|Name|Present|Regular"
};

enum class Factor { is_plural, is_negated, has_prefix, is_pronoun, tense, use_irregular };

constexpr std::array<Factor, 6> kAllFactors = {
    Factor::is_plural, Factor::is_negated,  Factor::has_prefix,
    Factor::is_pronoun, Factor::tense,      Factor::use_irregular};

const char* factor_name(Factor f);
Factor factor_from_name(const std::string& name); // throws ValidationError
PromptFactors flipped(PromptFactors f, Factor which);

// Indices into the lexicon lists; enough to replay a prompt exactly and to
// carry the same word choices into a counterfactual.
struct LexiconChoices {
    std::size_t name1 = 0;
    std::size_t name2 = 0; // distinct from name1
    std::size_t verb = 0;  // into regular or irregular list per factors
    std::size_t prefix = 0;
};

struct PromptInstance {
    PromptFactors factors;
    std::string text;      // ends where the verb goes, no trailing space
    std::string correct;   // answer token string, leading space included
    std::string incorrect;
    std::uint64_t rng_seed = 0;
    LexiconChoices lexicon_choices;
};

enum class Setting {
    BASE, is_plural, is_negated, has_prefix, is_pronoun, tense_past, use_irregular, ALL
};

const char* setting_name(Setting s);
Setting setting_from_name(const std::string& name); // throws ValidationError

struct Dataset {
    std::vector<PromptInstance> instances;
    Setting setting = Setting::BASE;
    std::uint64_t seed = 0;
};

struct PromptOptions {
    // Reproduces the tense-based contrast pair for affirmative present
    // prefixed singular prompts (third-person vs past) instead of the default
    // number contrast.
    bool prefix_tense_contrast = false;
};

PromptInstance build_prompt(const PromptFactors& factors, const Lexicon& lexicon, Rng& rng,
                            const PromptOptions& opts = {});

// Renders deterministically from recorded choices (replay / counterfactuals).
PromptInstance build_from_choices(const PromptFactors& factors, const Lexicon& lexicon,
                                  const LexiconChoices& choices,
                                  const PromptOptions& opts = {});

// 64 cells x n_per_cell instances; per-cell sub-seeds derived from seed.
Dataset generate_grid(std::size_t n_per_cell, const Lexicon& lexicon, std::uint64_t seed,
                      const PromptOptions& opts = {});

// BASE fixes all factors off; single-factor settings flip exactly one factor;
// ALL cycles through all 64 cells evenly.
Dataset setting_dataset(Setting setting, std::size_t n, const Lexicon& lexicon,
                        std::uint64_t seed, const PromptOptions& opts = {});

PromptInstance counterfactual(const PromptInstance& p, Factor flip, const Lexicon& lexicon,
                              const PromptOptions& opts = {});

} // namespace svac
