#pragma once

#include <array>
#include <string>
#include <vector>

#include "svac/model.hpp"
#include "svac/prompts.hpp"

namespace svac {

// Linear decomposition of the correct-minus-incorrect logit difference into
// per-head residual-stream writes, with the final layernorm scale frozen to
// the run's actual value. MLP writes and biases are pooled into one residual
// term so the parts sum back to the total.
struct DlaReport {
    Matrix head_contributions; // (n_layers, n_heads)
    double embedding = 0.0;
    double pooled_residual = 0.0;
    double total = 0.0; // logit difference from the actual run
    std::string prompt_text;
    double frozen_ln_scale = 0.0; // final-position 1/sqrt(var + eps)
};

DlaReport direct_logit_attribution(const Model& model, const Tokenizer& tok,
                                   const PromptInstance& p);

struct AttentionPattern {
    HeadId head;
    std::vector<std::string> tokens; // decoded token strings
    Matrix matrix;                   // (seq, seq), causal zeros above diagonal
};

AttentionPattern attention_pattern(const Model& model, const Tokenizer& tok,
                                   const std::string& text, HeadId head);

// The four fixed probe sentences (grammatical and starred variants of the
// singular/plural base task), exported together for side-by-side inspection.
extern const std::array<const char*, 4> kProbeSentences;

std::array<AttentionPattern, 4> probe_suite(const Model& model, const Tokenizer& tok,
                                            HeadId head);

} // namespace svac
