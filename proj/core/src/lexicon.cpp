#include "svac/lexicon.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "svac/errors.hpp"

namespace svac {

using nlohmann::json;

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("cannot open lexicon file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw AssetError("lexicon is not valid JSON: " + std::string(e.what()));
    }

    Lexicon lex;
    try {
        lex.names = j.at("names").get<std::vector<std::string>>();
        lex.pronoun_singular = j.at("pronouns").at("singular").get<std::string>();
        lex.pronoun_plural = j.at("pronouns").at("plural").get<std::string>();
        for (const char* key : {"regular_verbs", "irregular_verbs"}) {
            auto& dst = std::string(key) == "regular_verbs" ? lex.regular_verbs
                                                            : lex.irregular_verbs;
            for (const auto& v : j.at(key)) {
                dst.push_back(VerbEntry{v.at("base").get<std::string>(),
                                        v.at("third").get<std::string>(),
                                        v.at("past").get<std::string>()});
            }
        }
        lex.neutral_prefixes = j.at("neutral_prefixes").get<std::vector<std::string>>();
        lex.past_prefixes = j.at("past_prefixes").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw AssetError("lexicon is missing required fields: " + std::string(e.what()));
    }
    return lex;
}

namespace {

void require_single(const Tokenizer& tok, const std::string& text, const std::string& role) {
    if (!tok.single_token(text))
        throw ValidationError("lexicon: " + role + " '" + text +
                              "' does not encode to a single token");
}

std::string capitalized(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 32);
    return s;
}

} // namespace

void Lexicon::validate(const Tokenizer& tok) const {
    if (names.size() < 2) throw ValidationError("lexicon: need at least two names");
    if (regular_verbs.empty() || irregular_verbs.empty())
        throw ValidationError("lexicon: verb lists must be non-empty");
    if (neutral_prefixes.empty() || past_prefixes.empty())
        throw ValidationError("lexicon: prefix lists must be non-empty");

    for (const auto& n : names) {
        require_single(tok, n, "name");
        require_single(tok, " " + n, "name (after space)");
    }
    for (const auto& p : {pronoun_singular, pronoun_plural}) {
        require_single(tok, capitalized(p), "pronoun");
        require_single(tok, " " + p, "pronoun (after space)");
    }
    auto check_verbs = [&](const std::vector<VerbEntry>& verbs) {
        for (const auto& v : verbs) {
            require_single(tok, " " + v.base, "verb base form");
            require_single(tok, " " + v.third, "verb third-person form");
            require_single(tok, " " + v.past, "verb past form");
        }
    };
    check_verbs(regular_verbs);
    check_verbs(irregular_verbs);

    for (const auto& list : {neutral_prefixes, past_prefixes}) {
        for (const auto& p : list) {
            if (tok.encode(p + ",").size() != 2)
                throw ValidationError("lexicon: prefix '" + p +
                                      "' must encode to exactly two tokens with its comma");
        }
    }
}

} // namespace svac
