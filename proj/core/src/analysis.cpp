#include "svac/analysis.hpp"

#include <cmath>

#include "svac/errors.hpp"

namespace svac {

const std::array<const char*, 4> kProbeSentences = {
    "Alice walks",
    "Alice walk",
    "Alice and Bob walk",
    "Alice and Bob walks",
};

DlaReport direct_logit_attribution(const Model& model, const Tokenizer& tok,
                                   const PromptInstance& p) {
    const ModelConfig& cfg = model.config;
    const auto cid = tok.single_token(p.correct);
    const auto iid = tok.single_token(p.incorrect);
    if (!cid || !iid || *cid == *iid)
        throw ValidationError("DLA: answers must be distinct single tokens");
    const TokenSequence tokens = tok.encode(p.text);
    if (tokens.empty()) throw ValidationError("DLA: prompt text tokenizes to nothing");

    const std::vector<int> ids{*cid, *iid};
    ForwardOptions opts;
    opts.capture = true;
    opts.logit_ids = &ids;
    const ForwardResult res = forward(model, tokens, {}, opts);
    const ActivationCache& cache = *res.cache;
    const std::size_t last = tokens.final_index();
    const std::size_t d = cfg.d_model;

    // Frozen final layernorm: mean subtraction stays linear and the variance
    // scale is treated as a constant from this run.
    const float* x_final = cache.final_residual().row(last);
    float mean = 0.0f, var = 0.0f;
    for (std::size_t i = 0; i < d; ++i) mean += x_final[i];
    mean /= static_cast<float>(d);
    for (std::size_t i = 0; i < d; ++i) {
        const float c = x_final[i] - mean;
        var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv_sigma = 1.0f / std::sqrt(var + cfg.ln_epsilon);

    // u = unembedding difference direction; v = u through gamma/sigma.
    std::vector<double> v(d);
    double v_sum = 0.0, u_dot_beta = 0.0;
    {
        const float* uc = model.wte.row(static_cast<std::size_t>(*cid));
        const float* ui = model.wte.row(static_cast<std::size_t>(*iid));
        for (std::size_t i = 0; i < d; ++i) {
            const double u = static_cast<double>(uc[i]) - static_cast<double>(ui[i]);
            v[i] = u * static_cast<double>(model.lnf_g[i]) * static_cast<double>(inv_sigma);
            v_sum += v[i];
            u_dot_beta += u * static_cast<double>(model.lnf_b[i]);
        }
    }
    auto attribution = [&](const double* w) {
        double dot = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            dot += v[i] * w[i];
            wsum += w[i];
        }
        return dot - (wsum / static_cast<double>(d)) * v_sum;
    };

    DlaReport report;
    report.prompt_text = p.text;
    report.total = static_cast<double>(res.logits[0]) - static_cast<double>(res.logits[1]);
    report.frozen_ln_scale = inv_sigma;
    report.head_contributions = Matrix(cfg.n_layers, cfg.n_heads);

    std::vector<double> write(d);
    std::vector<double> accounted(d, 0.0);

    // embedding write at the final position
    {
        const float* te = model.wte.row(static_cast<std::size_t>(tokens.ids[last]));
        const float* pe = model.wpe.row(last);
        for (std::size_t i = 0; i < d; ++i) {
            write[i] = static_cast<double>(te[i]) + static_cast<double>(pe[i]);
            accounted[i] = write[i];
        }
        report.embedding = attribution(write.data());
    }

    // per-head writes: z through the head's slice of the output projection
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const Matrix& proj = model.layers[l].attn_proj_w;
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const Matrix& z = cache.z(static_cast<int>(l), static_cast<int>(h));
            const float* z_last = z.row(last);
            for (std::size_t i = 0; i < d; ++i) write[i] = 0.0;
            for (std::size_t t = 0; t < cfg.d_head; ++t) {
                const float* proj_row = proj.row(h * cfg.d_head + t);
                const double zt = static_cast<double>(z_last[t]);
                for (std::size_t i = 0; i < d; ++i)
                    write[i] += zt * static_cast<double>(proj_row[i]);
            }
            report.head_contributions.at(l, h) = static_cast<float>(attribution(write.data()));
            for (std::size_t i = 0; i < d; ++i) accounted[i] += write[i];
        }
    }

    // everything else (MLP writes, attention projection biases) in one term,
    // plus the layernorm beta so the decomposition sums to the total
    for (std::size_t i = 0; i < d; ++i)
        write[i] = static_cast<double>(x_final[i]) - accounted[i];
    report.pooled_residual = attribution(write.data()) + u_dot_beta;
    return report;
}

AttentionPattern attention_pattern(const Model& model, const Tokenizer& tok,
                                   const std::string& text, HeadId head) {
    if (head.layer < 0 || static_cast<std::size_t>(head.layer) >= model.config.n_layers ||
        head.head < 0 || static_cast<std::size_t>(head.head) >= model.config.n_heads)
        throw ValidationError("attention_pattern: head out of range");
    const TokenSequence tokens = tok.encode(text);
    if (tokens.empty())
        throw ValidationError("attention_pattern: text tokenizes to nothing: " + text);

    ForwardOptions opts;
    opts.capture = true;
    const std::vector<int> none;
    opts.logit_ids = &none;
    const ForwardResult res = forward(model, tokens, {}, opts);

    AttentionPattern pat;
    pat.head = head;
    pat.matrix = res.cache->pattern(head.layer, head.head);
    pat.tokens.reserve(tokens.size());
    for (int id : tokens.ids) pat.tokens.push_back(tok.decode_token(id));
    return pat;
}

std::array<AttentionPattern, 4> probe_suite(const Model& model, const Tokenizer& tok,
                                            HeadId head) {
    return {attention_pattern(model, tok, kProbeSentences[0], head),
            attention_pattern(model, tok, kProbeSentences[1], head),
            attention_pattern(model, tok, kProbeSentences[2], head),
            attention_pattern(model, tok, kProbeSentences[3], head)};
}

} // namespace svac
