#include "svac/prompts.hpp"

#include "svac/errors.hpp"

namespace svac {

int PromptFactors::cell_index() const {
    return (is_plural ? 1 : 0) | (is_negated ? 2 : 0) | (has_prefix ? 4 : 0) |
           (is_pronoun ? 8 : 0) | (tense == Tense::past ? 16 : 0) | (use_irregular ? 32 : 0);
}

PromptFactors PromptFactors::from_cell(int index) {
    PromptFactors f;
    f.is_plural = index & 1;
    f.is_negated = index & 2;
    f.has_prefix = index & 4;
    f.is_pronoun = index & 8;
    f.tense = (index & 16) ? Tense::past : Tense::present;
    f.use_irregular = index & 32;
    return f;
}

std::string PromptFactors::label() const {
    std::string out;
    out += is_plural ? "Plural" : "Singular";
    out += is_negated ? "|Negated" : "|Affirmative";
    out += has_prefix ? "|With" : "|Without";
    out += is_pronoun ? "|Pronoun" : "|Name";
    out += tense == Tense::past ? "|Past" : "|Present";
    out += use_irregular ? "|Irregular" : "|Regular";
    return out;
}

const char* factor_name(Factor f) {
    switch (f) {
        case Factor::is_plural: return "is_plural";
        case Factor::is_negated: return "is_negated";
        case Factor::has_prefix: return "has_prefix";
        case Factor::is_pronoun: return "is_pronoun";
        case Factor::tense: return "tense";
        case Factor::use_irregular: return "use_irregular";
    }
    return "?";
}

Factor factor_from_name(const std::string& name) {
    for (Factor f : kAllFactors)
        if (name == factor_name(f)) return f;
    throw ValidationError("unknown factor name: " + name);
}

PromptFactors flipped(PromptFactors f, Factor which) {
    switch (which) {
        case Factor::is_plural: f.is_plural = !f.is_plural; break;
        case Factor::is_negated: f.is_negated = !f.is_negated; break;
        case Factor::has_prefix: f.has_prefix = !f.has_prefix; break;
        case Factor::is_pronoun: f.is_pronoun = !f.is_pronoun; break;
        case Factor::tense:
            f.tense = f.tense == Tense::past ? Tense::present : Tense::past;
            break;
        case Factor::use_irregular: f.use_irregular = !f.use_irregular; break;
    }
    return f;
}

const char* setting_name(Setting s) {
    switch (s) {
        case Setting::BASE: return "BASE";
        case Setting::is_plural: return "is_plural";
        case Setting::is_negated: return "is_negated";
        case Setting::has_prefix: return "has_prefix";
        case Setting::is_pronoun: return "is_pronoun";
        case Setting::tense_past: return "tense_past";
        case Setting::use_irregular: return "use_irregular";
        case Setting::ALL: return "ALL";
    }
    return "?";
}

Setting setting_from_name(const std::string& name) {
    for (Setting s : {Setting::BASE, Setting::is_plural, Setting::is_negated,
                      Setting::has_prefix, Setting::is_pronoun, Setting::tense_past,
                      Setting::use_irregular, Setting::ALL})
        if (name == setting_name(s)) return s;
    throw ValidationError("unknown setting label: " + name);
}

namespace {

std::string capitalized(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 32);
    return s;
}

const VerbEntry& verb_for(const PromptFactors& f, const Lexicon& lex,
                          const LexiconChoices& c) {
    const auto& list = f.use_irregular ? lex.irregular_verbs : lex.regular_verbs;
    if (list.empty()) throw ValidationError("lexicon verb list is empty");
    return list[c.verb % list.size()];
}

const std::string& prefix_for(const PromptFactors& f, const Lexicon& lex,
                              const LexiconChoices& c) {
    const auto& list = f.tense == Tense::past ? lex.past_prefixes : lex.neutral_prefixes;
    if (list.empty()) throw ValidationError("lexicon prefix list is empty");
    return list[c.prefix % list.size()];
}

} // namespace

PromptInstance build_from_choices(const PromptFactors& factors, const Lexicon& lexicon,
                                  const LexiconChoices& choices, const PromptOptions& opts) {
    const VerbEntry& verb = verb_for(factors, lexicon, choices);

    std::string subject;
    if (factors.is_pronoun) {
        subject = factors.is_plural ? lexicon.pronoun_plural : lexicon.pronoun_singular;
    } else {
        const std::string& n1 = lexicon.names[choices.name1 % lexicon.names.size()];
        if (factors.is_plural) {
            const std::string& n2 = lexicon.names[choices.name2 % lexicon.names.size()];
            subject = n1 + " and " + n2;
        } else {
            subject = n1;
        }
    }

    std::string text;
    if (factors.has_prefix) {
        text = prefix_for(factors, lexicon, choices) + ", " + subject;
    } else {
        text = capitalized(subject);
    }
    if (factors.is_negated) {
        if (factors.tense == Tense::past) {
            text += " did not";
        } else {
            text += factors.is_plural ? " do not" : " does not";
        }
    }

    // Contrast pair. Negated prompts take the base form; past affirmative
    // contrasts past vs base; present affirmative contrasts by number.
    std::string correct, incorrect;
    if (factors.is_negated) {
        correct = verb.base;
        incorrect = verb.third;
    } else if (factors.tense == Tense::past) {
        correct = verb.past;
        incorrect = verb.base;
    } else if (opts.prefix_tense_contrast && factors.has_prefix && !factors.is_plural) {
        correct = verb.third;
        incorrect = verb.past;
    } else if (factors.is_plural) {
        correct = verb.base;
        incorrect = verb.third;
    } else {
        correct = verb.third;
        incorrect = verb.base;
    }

    PromptInstance p;
    p.factors = factors;
    p.text = std::move(text);
    p.correct = " " + correct;
    p.incorrect = " " + incorrect;
    p.lexicon_choices = choices;
    return p;
}

PromptInstance build_prompt(const PromptFactors& factors, const Lexicon& lexicon, Rng& rng,
                            const PromptOptions& opts) {
    if (lexicon.names.size() < 2)
        throw ValidationError("lexicon needs at least two names for plural subjects");
    LexiconChoices c;
    c.name1 = rng.below(lexicon.names.size());
    c.name2 = rng.below(lexicon.names.size() - 1);
    if (c.name2 >= c.name1) ++c.name2; // distinct second name
    const auto& verbs = factors.use_irregular ? lexicon.irregular_verbs : lexicon.regular_verbs;
    if (verbs.empty()) throw ValidationError("lexicon verb list is empty");
    c.verb = rng.below(verbs.size());
    const auto& prefixes =
        factors.tense == Tense::past ? lexicon.past_prefixes : lexicon.neutral_prefixes;
    if (prefixes.empty()) throw ValidationError("lexicon prefix list is empty");
    c.prefix = rng.below(prefixes.size());
    return build_from_choices(factors, lexicon, c, opts);
}

Dataset generate_grid(std::size_t n_per_cell, const Lexicon& lexicon, std::uint64_t seed,
                      const PromptOptions& opts) {
    if (n_per_cell < 1) throw ValidationError("generate_grid: n_per_cell must be >= 1");
    Dataset ds;
    ds.setting = Setting::ALL;
    ds.seed = seed;
    ds.instances.reserve(64 * n_per_cell);
    for (int cell = 0; cell < 64; ++cell) {
        const PromptFactors factors = PromptFactors::from_cell(cell);
        for (std::size_t k = 0; k < n_per_cell; ++k) {
            Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(cell), k);
            PromptInstance p = build_prompt(factors, lexicon, rng, opts);
            p.rng_seed = seed;
            ds.instances.push_back(std::move(p));
        }
    }
    return ds;
}

Dataset setting_dataset(Setting setting, std::size_t n, const Lexicon& lexicon,
                        std::uint64_t seed, const PromptOptions& opts) {
    if (n < 1) throw ValidationError("setting_dataset: n must be >= 1");
    Dataset ds;
    ds.setting = setting;
    ds.seed = seed;
    ds.instances.reserve(n);

    for (std::size_t k = 0; k < n; ++k) {
        PromptFactors factors; // BASE
        switch (setting) {
            case Setting::BASE: break;
            case Setting::is_plural: factors.is_plural = true; break;
            case Setting::is_negated: factors.is_negated = true; break;
            case Setting::has_prefix: factors.has_prefix = true; break;
            case Setting::is_pronoun: factors.is_pronoun = true; break;
            case Setting::tense_past: factors.tense = Tense::past; break;
            case Setting::use_irregular: factors.use_irregular = true; break;
            case Setting::ALL: factors = PromptFactors::from_cell(static_cast<int>(k % 64)); break;
        }
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(factors.cell_index()), k);
        PromptInstance p = build_prompt(factors, lexicon, rng, opts);
        p.rng_seed = seed;
        ds.instances.push_back(std::move(p));
    }
    return ds;
}

PromptInstance counterfactual(const PromptInstance& p, Factor flip, const Lexicon& lexicon,
                              const PromptOptions& opts) {
    PromptInstance cf =
        build_from_choices(flipped(p.factors, flip), lexicon, p.lexicon_choices, opts);
    cf.rng_seed = p.rng_seed;
    return cf;
}

} // namespace svac
