#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "svac/eval.hpp"
#include "svac/model.hpp"
#include "svac/prompts.hpp"
#include "svac/rng.hpp"

namespace svac {

// Pre-collected capture runs used as ablation donors, grouped by sequence
// length so positionwise replacement stays well defined.
class ActivationPool {
  public:
    ActivationPool() = default;

    void add(ActivationCache cache);
    std::size_t size() const { return total_; }
    bool empty() const { return total_ == 0; }
    std::uint64_t seed = 0;

    const std::vector<ActivationCache>& bucket(std::size_t seq_len) const; // throws if empty
    bool has_bucket(std::size_t seq_len) const;

    // Positionwise mean of a head's activation over the bucket's entries.
    const Matrix& mean_activation(HeadId head, std::size_t seq_len) const;

  private:
    std::map<std::size_t, std::vector<ActivationCache>> buckets_;
    mutable std::unique_ptr<std::mutex> mean_mutex_ = std::make_unique<std::mutex>();
    mutable std::map<std::pair<std::size_t, int>, Matrix> mean_cache_;
    std::size_t total_ = 0;
};

enum class AblationKind { zero, mean, resample };

struct AblationStrategy {
    AblationKind kind = AblationKind::resample;
    const ActivationPool* pool = nullptr; // required for mean/resample
};

// One capture pass per prompt; entries keep the prompt order. When
// require_uniform_length is set (the default), mixed-length prompt lists are
// rejected.
ActivationPool collect_pool(const Model& model, const Tokenizer& tok,
                            const std::vector<PromptInstance>& prompts, std::uint64_t seed,
                            bool require_uniform_length = true);

// Replacement activation for one head in a run of the given length.
Matrix ablation_value(const AblationStrategy& strategy, HeadId head, std::size_t seq_len,
                      std::size_t d_head, Rng& rng);

// How a counterfactual of a different token length is applied.
enum class LengthPolicy {
    strict,      // unequal lengths are skipped
    align_final, // patch only the final position from the donor's final position
};

struct HeadEffectMatrix {
    Matrix signed_mean; // (n_layers, n_heads), mean signed effect
    Matrix abs_mean;    // mean absolute effect
    std::size_t n_prompts = 0;
    Factor flip_factor = Factor::is_plural;
    std::size_t n_used = 0;
    std::size_t n_aligned_final = 0; // pairs patched via final-position alignment
    std::size_t n_skipped = 0;
    std::vector<std::string> skip_reasons;
};

// Baseline logit diff minus the logit diff after patching `head` with its
// activation captured on the counterfactual run.
double head_effect(const Model& model, const Tokenizer& tok, const PromptInstance& p,
                   const PromptInstance& cf, HeadId head,
                   LengthPolicy policy = LengthPolicy::align_final);

struct EffectOptions {
    LengthPolicy length_policy = LengthPolicy::align_final;
    unsigned workers = 1;
};

// Per-head mean effect over the dataset, counterfactuals generated by
// flipping `flip_factor` on each prompt.
HeadEffectMatrix effect_matrix(const Model& model, const Tokenizer& tok, const Dataset& dataset,
                               Factor flip_factor, const Lexicon& lexicon,
                               const EffectOptions& opts = {});

struct KnockoutOptions {
    AblationKind kind = AblationKind::resample;
    bool shared_donor = false; // one donor draw per prompt instead of per head
    unsigned workers = 1;
};

// Ablate every head outside the circuit on every prompt, then aggregate.
// Resample draws derive from (seed, prompt index, head index).
EvalReport knockout_eval(const Model& model, const Tokenizer& tok,
                         const std::set<HeadId>& circuit, const Dataset& dataset,
                         const ActivationPool& pool, std::uint64_t seed,
                         const KnockoutOptions& opts = {});

std::vector<ScoredInstance> knockout_scores(const Model& model, const Tokenizer& tok,
                                            const std::set<HeadId>& circuit,
                                            const Dataset& dataset, const ActivationPool& pool,
                                            std::uint64_t seed, const KnockoutOptions& opts = {});

} // namespace svac
