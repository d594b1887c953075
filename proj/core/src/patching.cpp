#include "svac/patching.hpp"

#include <cmath>

#include "svac/errors.hpp"
#include "svac/parallel.hpp"

namespace svac {

void ActivationPool::add(ActivationCache cache) {
    buckets_[cache.seq_len()].push_back(std::move(cache));
    ++total_;
    mean_cache_.clear();
}

const std::vector<ActivationCache>& ActivationPool::bucket(std::size_t seq_len) const {
    auto it = buckets_.find(seq_len);
    if (it == buckets_.end() || it->second.empty())
        throw ValidationError("activation pool has no entries of sequence length " +
                              std::to_string(seq_len));
    return it->second;
}

bool ActivationPool::has_bucket(std::size_t seq_len) const {
    auto it = buckets_.find(seq_len);
    return it != buckets_.end() && !it->second.empty();
}

const Matrix& ActivationPool::mean_activation(HeadId head, std::size_t seq_len) const {
    const auto key = std::make_pair(seq_len, head.layer * 1024 + head.head);
    std::lock_guard<std::mutex> lock(*mean_mutex_);
    auto it = mean_cache_.find(key);
    if (it != mean_cache_.end()) return it->second;

    const auto& entries = bucket(seq_len);
    const Matrix& first = entries.front().z(head.layer, head.head);
    Matrix mean(first.rows, first.cols);
    for (const auto& cache : entries) {
        const Matrix& z = cache.z(head.layer, head.head);
        for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += z.data[i];
    }
    const float inv = 1.0f / static_cast<float>(entries.size());
    for (float& v : mean.data) v *= inv;
    return mean_cache_.emplace(key, std::move(mean)).first->second;
}

ActivationPool collect_pool(const Model& model, const Tokenizer& tok,
                            const std::vector<PromptInstance>& prompts, std::uint64_t seed,
                            bool require_uniform_length) {
    if (prompts.empty()) throw ValidationError("collect_pool: prompt list is empty");
    ActivationPool pool;
    pool.seed = seed;
    std::size_t first_len = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const TokenSequence tokens = tok.encode(prompts[i].text);
        if (i == 0) first_len = tokens.size();
        if (require_uniform_length && tokens.size() != first_len)
            throw ValidationError(
                "collect_pool: prompt token lengths differ (" + std::to_string(first_len) +
                " vs " + std::to_string(tokens.size()) + " at index " + std::to_string(i) + ")");
        ForwardOptions opts;
        opts.capture = true;
        ForwardResult res = forward(model, tokens, {}, opts);
        pool.add(std::move(*res.cache));
    }
    return pool;
}

Matrix ablation_value(const AblationStrategy& strategy, HeadId head, std::size_t seq_len,
                      std::size_t d_head, Rng& rng) {
    switch (strategy.kind) {
        case AblationKind::zero:
            return Matrix(seq_len, d_head);
        case AblationKind::mean: {
            if (!strategy.pool || strategy.pool->empty())
                throw ValidationError("mean ablation requires a non-empty activation pool");
            return strategy.pool->mean_activation(head, seq_len);
        }
        case AblationKind::resample: {
            if (!strategy.pool || strategy.pool->empty())
                throw ValidationError("resample ablation requires a non-empty activation pool");
            const auto& entries = strategy.pool->bucket(seq_len);
            const std::size_t pick = rng.below(entries.size());
            return entries[pick].z(head.layer, head.head);
        }
    }
    throw ValidationError("unknown ablation kind");
}

namespace {

PatchSet cf_patch(const ModelConfig& cfg, const ActivationCache& cf_cache, HeadId head,
                  std::size_t run_len, LengthPolicy policy, bool& aligned) {
    PatchSet patches;
    const Matrix& z = cf_cache.z(head.layer, head.head);
    if (cf_cache.seq_len() == run_len) {
        patches.add(head, z);
        aligned = false;
    } else {
        if (policy == LengthPolicy::strict)
            throw ValidationError("counterfactual sequence length " +
                                  std::to_string(cf_cache.seq_len()) +
                                  " does not match run length " + std::to_string(run_len));
        Matrix last(1, cfg.d_head);
        for (std::size_t t = 0; t < cfg.d_head; ++t) last.at(0, t) = z.at(z.rows - 1, t);
        patches.add_final_row(head, std::move(last));
        aligned = true;
    }
    return patches;
}

struct PairContext {
    TokenSequence tokens;
    double base_ld = 0.0;
    ResidualSnapshots snapshots;
    ActivationCache cf_cache;
    std::vector<int> answer_ids;
};

PairContext prepare_pair(const Model& model, const Tokenizer& tok, const PromptInstance& p,
                         const PromptInstance& cf) {
    PairContext ctx;
    const auto cid = tok.single_token(p.correct);
    const auto iid = tok.single_token(p.incorrect);
    if (!cid || !iid || *cid == *iid)
        throw ValidationError("prompt answers must be distinct single tokens");
    ctx.answer_ids = {*cid, *iid};
    ctx.tokens = tok.encode(p.text);

    ForwardOptions base_opts;
    base_opts.logit_ids = &ctx.answer_ids;
    const ForwardResult base = forward_with_snapshots(model, ctx.tokens, ctx.snapshots, base_opts);
    ctx.base_ld = static_cast<double>(base.logits[0]) - static_cast<double>(base.logits[1]);

    const TokenSequence cf_tokens = tok.encode(cf.text);
    ForwardOptions cap;
    cap.capture = true;
    std::vector<int> none;
    cap.logit_ids = &none; // skip the full unembedding on the capture pass
    ForwardResult cf_res = forward(model, cf_tokens, {}, cap);
    ctx.cf_cache = std::move(*cf_res.cache);
    return ctx;
}

double patched_ld(const Model& model, const PairContext& ctx, HeadId head, LengthPolicy policy,
                  bool& aligned) {
    const PatchSet patches =
        cf_patch(model.config, ctx.cf_cache, head, ctx.tokens.size(), policy, aligned);
    ForwardOptions opts;
    opts.logit_ids = &ctx.answer_ids;
    const ForwardResult res = forward_resume(model, ctx.tokens, ctx.snapshots, patches, opts);
    return static_cast<double>(res.logits[0]) - static_cast<double>(res.logits[1]);
}

} // namespace

double head_effect(const Model& model, const Tokenizer& tok, const PromptInstance& p,
                   const PromptInstance& cf, HeadId head, LengthPolicy policy) {
    const PairContext ctx = prepare_pair(model, tok, p, cf);
    bool aligned = false;
    return ctx.base_ld - patched_ld(model, ctx, head, policy, aligned);
}

HeadEffectMatrix effect_matrix(const Model& model, const Tokenizer& tok, const Dataset& dataset,
                               Factor flip_factor, const Lexicon& lexicon,
                               const EffectOptions& opts) {
    if (dataset.instances.empty()) throw ValidationError("effect_matrix: dataset is empty");
    const ModelConfig& cfg = model.config;

    HeadEffectMatrix out;
    out.signed_mean = Matrix(cfg.n_layers, cfg.n_heads);
    out.abs_mean = Matrix(cfg.n_layers, cfg.n_heads);
    out.n_prompts = dataset.instances.size();
    out.flip_factor = flip_factor;

    struct PromptResult {
        Matrix effects;
        bool used = false;
        bool aligned = false;
        std::string skip_reason;
    };
    std::vector<PromptResult> per_prompt(dataset.instances.size());

    parallel_for(dataset.instances.size(), opts.workers, [&](std::size_t i) {
        PromptResult& r = per_prompt[i];
        try {
            const PromptInstance& p = dataset.instances[i];
            const PromptInstance cf = counterfactual(p, flip_factor, lexicon);
            const PairContext ctx = prepare_pair(model, tok, p, cf);
            r.effects = Matrix(cfg.n_layers, cfg.n_heads);
            bool any_aligned = false;
            for (std::size_t l = 0; l < cfg.n_layers; ++l) {
                for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                    bool aligned = false;
                    const double ld = patched_ld(
                        model, ctx, HeadId{static_cast<int>(l), static_cast<int>(h)},
                        opts.length_policy, aligned);
                    r.effects.at(l, h) = static_cast<float>(ctx.base_ld - ld);
                    any_aligned = any_aligned || aligned;
                }
            }
            r.used = true;
            r.aligned = any_aligned;
        } catch (const ValidationError& e) {
            r.skip_reason = e.what();
        }
    });

    for (const auto& r : per_prompt) {
        if (!r.used) {
            ++out.n_skipped;
            out.skip_reasons.push_back(r.skip_reason);
            continue;
        }
        ++out.n_used;
        if (r.aligned) ++out.n_aligned_final;
        for (std::size_t i = 0; i < out.signed_mean.data.size(); ++i) {
            out.signed_mean.data[i] += r.effects.data[i];
            out.abs_mean.data[i] += std::fabs(r.effects.data[i]);
        }
    }
    if (out.n_used == 0)
        throw ValidationError("effect_matrix: every prompt pair was skipped");
    const float inv = 1.0f / static_cast<float>(out.n_used);
    for (std::size_t i = 0; i < out.signed_mean.data.size(); ++i) {
        out.signed_mean.data[i] *= inv;
        out.abs_mean.data[i] *= inv;
    }
    return out;
}

std::vector<ScoredInstance> knockout_scores(const Model& model, const Tokenizer& tok,
                                            const std::set<HeadId>& circuit,
                                            const Dataset& dataset, const ActivationPool& pool,
                                            std::uint64_t seed, const KnockoutOptions& opts) {
    if (dataset.instances.empty()) throw ValidationError("knockout: dataset is empty");
    const ModelConfig& cfg = model.config;

    std::vector<HeadId> ablated;
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const HeadId id{static_cast<int>(l), static_cast<int>(h)};
            if (!circuit.count(id)) ablated.push_back(id);
        }

    AblationStrategy strategy{opts.kind, &pool};
    auto patches_for = [&](std::size_t i, const PromptInstance& p) {
        PatchSet patches;
        if (ablated.empty()) return patches;
        const std::size_t len = tok.encode(p.text).size();
        if (opts.kind == AblationKind::resample && opts.shared_donor) {
            Rng rng = Rng::derive(seed, i);
            const auto& entries = pool.bucket(len);
            const std::size_t pick = rng.below(entries.size());
            for (const HeadId& head : ablated)
                patches.add(head, entries[pick].z(head.layer, head.head));
            return patches;
        }
        for (const HeadId& head : ablated) {
            const std::uint64_t head_index =
                static_cast<std::uint64_t>(head.layer) * cfg.n_heads +
                static_cast<std::uint64_t>(head.head);
            Rng rng = Rng::derive(seed, i, head_index);
            patches.add(head, ablation_value(strategy, head, len, cfg.d_head, rng));
        }
        return patches;
    };
    return score_dataset(model, tok, dataset, patches_for, opts.workers);
}

EvalReport knockout_eval(const Model& model, const Tokenizer& tok,
                         const std::set<HeadId>& circuit, const Dataset& dataset,
                         const ActivationPool& pool, std::uint64_t seed,
                         const KnockoutOptions& opts) {
    return aggregate(knockout_scores(model, tok, circuit, dataset, pool, seed, opts));
}

} // namespace svac
