#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace svac {

struct TokenSequence {
    std::vector<int> ids;

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
    std::size_t final_index() const { return ids.size() - 1; }
};

// GPT-2 byte-level BPE over the published vocab (JSON token->id) and ranked
// merges list. Encoding is total: every byte sequence maps to tokens and
// decode(encode(t)) == t.
class Tokenizer {
  public:
    // dir must contain vocab.json and merges.txt.
    static Tokenizer load(const std::string& dir);

    TokenSequence encode(const std::string& text) const;
    std::string decode(const TokenSequence& tokens) const;
    std::string decode_token(int id) const;

    // Id of `text` iff it encodes to exactly one token.
    std::optional<int> single_token(const std::string& text) const;

    std::size_t vocab_size() const { return id_to_token_.size(); }

  private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> merge_rank_; // "left\x01right" -> rank
    std::string byte_to_sym_[256];
    std::unordered_map<std::uint32_t, std::uint8_t> sym_cp_to_byte_;
    mutable std::unordered_map<std::string, std::vector<int>> bpe_cache_;

    std::vector<int> bpe(const std::string& piece) const;
};

} // namespace svac
