#include "svac/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svac/errors.hpp"

namespace svac {
namespace {

using nlohmann::json;

std::mutex g_cache_mutex;

// --- UTF-8 <-> codepoints ---------------------------------------------------

std::vector<std::uint32_t> to_codepoints(const std::string& s) {
    std::vector<std::uint32_t> cps;
    cps.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = 0;
        std::size_t n = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
            cp = (c & 0x1F) << 6 | (s[i + 1] & 0x3F);
            n = 2;
        } else if ((c >> 4) == 0xE && i + 2 < s.size()) {
            cp = (c & 0x0F) << 12 | (s[i + 1] & 0x3F) << 6 | (s[i + 2] & 0x3F);
            n = 3;
        } else if ((c >> 3) == 0x1E && i + 3 < s.size()) {
            cp = (c & 0x07) << 18 | (s[i + 1] & 0x3F) << 12 | (s[i + 2] & 0x3F) << 6 |
                 (s[i + 3] & 0x3F);
            n = 4;
        } else {
            cp = c; // lone byte; pass through
        }
        cps.push_back(cp);
        i += n;
    }
    return cps;
}

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::size_t utf8_len(const std::string& s, std::size_t byte_pos) {
    const unsigned char c = static_cast<unsigned char>(s[byte_pos]);
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return 2;
    if ((c >> 4) == 0xE) return 3;
    if ((c >> 3) == 0x1E) return 4;
    return 1;
}

// --- character classes for the GPT-2 pre-tokenizer --------------------------

struct Range {
    std::uint32_t lo, hi;
};

// Letter (L*) ranges for the scripts this toolkit realistically sees. Inputs
// outside these ranges still tokenize losslessly, they just may split
// differently from the reference implementation.
constexpr Range kLetterRanges[] = {
    {0x41, 0x5A},     {0x61, 0x7A},     {0xAA, 0xAA},     {0xB5, 0xB5},
    {0xBA, 0xBA},     {0xC0, 0xD6},     {0xD8, 0xF6},     {0xF8, 0x2C1},
    {0x370, 0x374},   {0x376, 0x377},   {0x37A, 0x37D},   {0x37F, 0x37F},
    {0x386, 0x386},   {0x388, 0x38A},   {0x38C, 0x38C},   {0x38E, 0x3A1},
    {0x3A3, 0x3F5},   {0x3F7, 0x481},   {0x48A, 0x52F},   {0x531, 0x556},
    {0x561, 0x587},   {0x5D0, 0x5EA},   {0x620, 0x64A},   {0x671, 0x6D3},
    {0x905, 0x939},   {0x958, 0x961},   {0xE01, 0xE30},   {0x10A0, 0x10C5},
    {0x1E00, 0x1FBC}, {0x1FC2, 0x1FCC}, {0x1FD0, 0x1FDB}, {0x1FE0, 0x1FEC},
    {0x1FF2, 0x1FFC}, {0x2C60, 0x2C7F}, {0x3041, 0x3096}, {0x30A1, 0x30FA},
    {0x4E00, 0x9FFF}, {0xA720, 0xA7CA}, {0xAC00, 0xD7A3}, {0xFB00, 0xFB06},
};

constexpr Range kNumberRanges[] = {
    {0x30, 0x39},   {0xB2, 0xB3},     {0xB9, 0xB9},     {0xBC, 0xBE},
    {0x660, 0x669}, {0x6F0, 0x6F9},   {0x966, 0x96F},   {0x2070, 0x2079},
    {0x2080, 0x2089}, {0xFF10, 0xFF19},
};

constexpr Range kSpaceRanges[] = {
    {0x09, 0x0D},   {0x1C, 0x1F},     {0x20, 0x20},     {0x85, 0x85},
    {0xA0, 0xA0},   {0x1680, 0x1680}, {0x2000, 0x200A}, {0x2028, 0x2029},
    {0x202F, 0x202F}, {0x205F, 0x205F}, {0x3000, 0x3000},
};

bool in_ranges(std::uint32_t cp, const Range* r, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (cp >= r[i].lo && cp <= r[i].hi) return true;
    return false;
}

bool is_letter(std::uint32_t cp) { return in_ranges(cp, kLetterRanges, std::size(kLetterRanges)); }
bool is_number(std::uint32_t cp) { return in_ranges(cp, kNumberRanges, std::size(kNumberRanges)); }
bool is_space(std::uint32_t cp) { return in_ranges(cp, kSpaceRanges, std::size(kSpaceRanges)); }

// Splits text the way GPT-2's pre-tokenizer pattern does:
//   's|'t|'re|'ve|'m|'ll|'d| ?L+| ?N+| ?[^ s L N]+|\s+(?!\S)|\s+
std::vector<std::pair<std::size_t, std::size_t>> pretokenize(
    const std::vector<std::uint32_t>& cp) {
    std::vector<std::pair<std::size_t, std::size_t>> pieces;
    const std::size_t n = cp.size();
    std::size_t i = 0;
    while (i < n) {
        // contractions
        if (cp[i] == '\'' && i + 1 < n) {
            const std::uint32_t c1 = cp[i + 1];
            if (c1 == 's' || c1 == 't' || c1 == 'm' || c1 == 'd') {
                pieces.emplace_back(i, i + 2);
                i += 2;
                continue;
            }
            if (i + 2 < n) {
                const std::uint32_t c2 = cp[i + 2];
                if ((c1 == 'r' && c2 == 'e') || (c1 == 'v' && c2 == 'e') ||
                    (c1 == 'l' && c2 == 'l')) {
                    pieces.emplace_back(i, i + 3);
                    i += 3;
                    continue;
                }
            }
        }
        const std::size_t body = (cp[i] == ' ' && i + 1 < n) ? i + 1 : i;
        if (body < n && is_letter(cp[body])) {
            std::size_t j = body;
            while (j < n && is_letter(cp[j])) ++j;
            pieces.emplace_back(i, j);
            i = j;
            continue;
        }
        if (body < n && is_number(cp[body])) {
            std::size_t j = body;
            while (j < n && is_number(cp[j])) ++j;
            pieces.emplace_back(i, j);
            i = j;
            continue;
        }
        if (body < n && !is_space(cp[body])) {
            std::size_t j = body;
            while (j < n && !is_space(cp[j]) && !is_letter(cp[j]) && !is_number(cp[j])) ++j;
            pieces.emplace_back(i, j);
            i = j;
            continue;
        }
        if (is_space(cp[i])) {
            std::size_t j = i;
            while (j < n && is_space(cp[j])) ++j;
            // trailing run is kept whole; otherwise the final space belongs to
            // the next piece
            if (j < n && j - i > 1) --j;
            if (j == i) j = i + 1; // single space before non-space: own piece
            pieces.emplace_back(i, j);
            i = j;
            continue;
        }
        // lone apostrophe with no contraction match
        pieces.emplace_back(i, i + 1);
        ++i;
    }
    return pieces;
}

} // namespace

Tokenizer Tokenizer::load(const std::string& dir) {
    Tokenizer t;

    std::ifstream vin(dir + "/vocab.json");
    if (!vin) throw AssetError("cannot open tokenizer vocab: " + dir + "/vocab.json");
    json vocab;
    try {
        vin >> vocab;
    } catch (const json::parse_error& e) {
        throw AssetError("tokenizer vocab is not valid JSON: " + std::string(e.what()));
    }
    t.id_to_token_.resize(vocab.size());
    for (auto it = vocab.begin(); it != vocab.end(); ++it) {
        const int id = it.value().get<int>();
        if (id < 0 || static_cast<std::size_t>(id) >= t.id_to_token_.size())
            throw AssetError("tokenizer vocab id out of range: " + std::to_string(id));
        t.token_to_id_[it.key()] = id;
        t.id_to_token_[id] = it.key();
    }

    std::ifstream min(dir + "/merges.txt");
    if (!min) throw AssetError("cannot open tokenizer merges: " + dir + "/merges.txt");
    std::string line;
    int rank = 0;
    while (std::getline(min, line)) {
        if (line.empty() || line[0] == '#') continue;
        const std::size_t sp = line.find(' ');
        if (sp == std::string::npos) continue;
        t.merge_rank_[line.substr(0, sp) + '\x01' + line.substr(sp + 1)] = rank++;
    }
    if (t.merge_rank_.empty()) throw AssetError("tokenizer merges file is empty: " + dir);

    // byte <-> printable-unicode mapping
    std::vector<bool> direct(256, false);
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    std::uint32_t extra = 0;
    for (int b = 0; b < 256; ++b) {
        const std::uint32_t cp = direct[b] ? static_cast<std::uint32_t>(b) : 256 + extra++;
        std::string sym;
        append_utf8(sym, cp);
        t.byte_to_sym_[b] = sym;
        t.sym_cp_to_byte_[cp] = static_cast<std::uint8_t>(b);
    }
    return t;
}

std::vector<int> Tokenizer::bpe(const std::string& piece) const {
    {
        std::lock_guard<std::mutex> lock(g_cache_mutex);
        auto it = bpe_cache_.find(piece);
        if (it != bpe_cache_.end()) return it->second;
    }

    std::vector<std::string> word;
    for (unsigned char b : piece) word.push_back(byte_to_sym_[b]);

    while (word.size() > 1) {
        int best_rank = -1;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i + 1 < word.size(); ++i) {
            auto it = merge_rank_.find(word[i] + '\x01' + word[i + 1]);
            if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
                best_rank = it->second;
                best_i = i;
            }
        }
        if (best_rank < 0) break;
        word[best_i] += word[best_i + 1];
        word.erase(word.begin() + static_cast<std::ptrdiff_t>(best_i) + 1);
    }

    std::vector<int> ids;
    ids.reserve(word.size());
    for (const auto& w : word) {
        auto it = token_to_id_.find(w);
        if (it == token_to_id_.end())
            throw AssetError("BPE produced a symbol absent from the vocab: " + w);
        ids.push_back(it->second);
    }
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    bpe_cache_[piece] = ids;
    return ids;
}

TokenSequence Tokenizer::encode(const std::string& text) const {
    TokenSequence out;
    if (text.empty()) return out;
    const auto cps = to_codepoints(text);

    // map codepoint index -> byte offset to slice the original string
    std::vector<std::size_t> byte_of(cps.size() + 1);
    std::size_t bp = 0;
    for (std::size_t ci = 0; ci < cps.size(); ++ci) {
        byte_of[ci] = bp;
        bp += utf8_len(text, bp);
    }
    byte_of[cps.size()] = text.size();

    for (const auto& [lo, hi] : pretokenize(cps)) {
        const std::string piece = text.substr(byte_of[lo], byte_of[hi] - byte_of[lo]);
        for (int id : bpe(piece)) out.ids.push_back(id);
    }
    return out;
}

std::string Tokenizer::decode_token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw ValidationError("token id out of range: " + std::to_string(id));
    std::string bytes;
    for (std::uint32_t cp : to_codepoints(id_to_token_[id])) {
        auto it = sym_cp_to_byte_.find(cp);
        if (it != sym_cp_to_byte_.end()) bytes.push_back(static_cast<char>(it->second));
    }
    return bytes;
}

std::string Tokenizer::decode(const TokenSequence& tokens) const {
    std::string out;
    for (int id : tokens.ids) out += decode_token(id);
    return out;
}

std::optional<int> Tokenizer::single_token(const std::string& text) const {
    const TokenSequence seq = encode(text);
    if (seq.ids.size() != 1) return std::nullopt;
    return seq.ids[0];
}

} // namespace svac
