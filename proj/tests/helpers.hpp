#pragma once

#include <cstdlib>
#include <string>

#include "svac/lexicon.hpp"
#include "svac/matrix.hpp"
#include "svac/model.hpp"
#include "svac/rng.hpp"
#include "svac/tokenizer.hpp"

namespace svac::test {

inline std::string repo_path(const std::string& rel) {
    return std::string(SVAC_REPO_ROOT) + "/" + rel;
}

inline const Tokenizer& shared_tokenizer() {
    static Tokenizer tok = Tokenizer::load(repo_path("assets/tokenizer"));
    return tok;
}

inline const Lexicon& shared_lexicon() {
    static Lexicon lex = [] {
        Lexicon l = Lexicon::load(repo_path("assets/lexicon.json"));
        l.validate(shared_tokenizer());
        return l;
    }();
    return lex;
}

inline void fill_random(std::vector<float>& v, Rng& rng, float scale) {
    for (float& x : v) x = scale * static_cast<float>(2.0 * rng.unit() - 1.0);
}

inline void fill_random(Matrix& m, Rng& rng, float scale) { fill_random(m.data, rng, scale); }

// Small random model over the full GPT-2 vocab so real tokenizer output can be
// fed straight in. Cheap enough to build per test case.
inline Model make_tiny_model(std::uint64_t seed = 7) {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.d_model = 16;
    cfg.d_head = 4;
    cfg.vocab_size = 50257;
    cfg.context_len = 32;
    cfg.validate();

    Rng rng(seed);
    Model m;
    m.config = cfg;
    m.wte = Matrix(cfg.vocab_size, cfg.d_model);
    fill_random(m.wte, rng, 0.5f);
    m.wpe = Matrix(cfg.context_len, cfg.d_model);
    fill_random(m.wpe, rng, 0.1f);
    m.layers.resize(cfg.n_layers);
    for (auto& layer : m.layers) {
        layer.ln1_g.assign(cfg.d_model, 1.0f);
        layer.ln1_b.assign(cfg.d_model, 0.0f);
        layer.attn_qkv_w = Matrix(cfg.d_model, 3 * cfg.d_model);
        fill_random(layer.attn_qkv_w, rng, 0.25f);
        layer.attn_qkv_b.assign(3 * cfg.d_model, 0.0f);
        layer.attn_proj_w = Matrix(cfg.d_model, cfg.d_model);
        fill_random(layer.attn_proj_w, rng, 0.25f);
        layer.attn_proj_b.assign(cfg.d_model, 0.0f);
        layer.ln2_g.assign(cfg.d_model, 1.0f);
        layer.ln2_b.assign(cfg.d_model, 0.0f);
        layer.mlp_fc_w = Matrix(cfg.d_model, 4 * cfg.d_model);
        fill_random(layer.mlp_fc_w, rng, 0.25f);
        layer.mlp_fc_b.assign(4 * cfg.d_model, 0.0f);
        layer.mlp_proj_w = Matrix(4 * cfg.d_model, cfg.d_model);
        fill_random(layer.mlp_proj_w, rng, 0.25f);
        layer.mlp_proj_b.assign(cfg.d_model, 0.0f);
    }
    m.lnf_g.assign(cfg.d_model, 1.0f);
    m.lnf_b.assign(cfg.d_model, 0.0f);
    return m;
}

} // namespace svac::test
