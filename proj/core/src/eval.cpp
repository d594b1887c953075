#include "svac/eval.hpp"

#include <cmath>

#include "svac/errors.hpp"
#include "svac/parallel.hpp"

namespace svac {

namespace {

std::pair<int, int> answer_ids(const Tokenizer& tok, const PromptInstance& p) {
    const auto c = tok.single_token(p.correct);
    if (!c)
        throw ValidationError("answer '" + p.correct + "' does not encode to a single token");
    const auto i = tok.single_token(p.incorrect);
    if (!i)
        throw ValidationError("answer '" + p.incorrect + "' does not encode to a single token");
    if (*c == *i)
        throw ValidationError("correct and incorrect answers are the same token: '" +
                              p.correct + "'");
    return {*c, *i};
}

} // namespace

double logit_diff(const Model& model, const Tokenizer& tok, const PromptInstance& p,
                  const PatchSet& patches) {
    const auto [cid, iid] = answer_ids(tok, p);
    const TokenSequence tokens = tok.encode(p.text);
    if (tokens.empty()) throw ValidationError("prompt text tokenizes to nothing: " + p.text);
    const std::vector<int> ids{cid, iid};
    ForwardOptions opts;
    opts.logit_ids = &ids;
    const ForwardResult res = forward(model, tokens, patches, opts);
    return static_cast<double>(res.logits[0]) - static_cast<double>(res.logits[1]);
}

bool classify(const Model& model, const Tokenizer& tok, const PromptInstance& p,
              const PatchSet& patches) {
    return logit_diff(model, tok, p, patches) > 0.0;
}

EvalReport aggregate(const std::vector<ScoredInstance>& results) {
    if (results.empty()) throw ValidationError("aggregate: no results");
    EvalReport r;
    r.count = results.size();
    std::size_t correct = 0;
    double sum = 0.0;
    for (const auto& s : results) {
        if (s.logit_diff > 0.0) ++correct;
        sum += s.logit_diff;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
    r.precision = 1.0;
    r.recall = r.accuracy;
    r.f1 = 2.0 * r.accuracy / (1.0 + r.accuracy);
    r.mean_logit_diff = sum / static_cast<double>(r.count);
    double sq = 0.0;
    for (const auto& s : results) {
        const double d = s.logit_diff - r.mean_logit_diff;
        sq += d * d;
    }
    r.std_logit_diff = std::sqrt(sq / static_cast<double>(r.count));
    return r;
}

std::map<std::string, EvalReport> aggregate_by_cell(const std::vector<ScoredInstance>& results) {
    std::map<std::string, std::vector<ScoredInstance>> groups;
    for (const auto& s : results) groups[s.prompt->factors.label()].push_back(s);
    std::map<std::string, EvalReport> out;
    for (const auto& [key, group] : groups) {
        EvalReport r = aggregate(group);
        r.group_key = key;
        out[key] = r;
    }
    return out;
}

std::vector<ScoredInstance> score_dataset(
    const Model& model, const Tokenizer& tok, const Dataset& dataset,
    const std::function<PatchSet(std::size_t, const PromptInstance&)>& patches_for,
    unsigned workers) {
    std::vector<ScoredInstance> results(dataset.instances.size());
    parallel_for(dataset.instances.size(), workers, [&](std::size_t i) {
        const PromptInstance& p = dataset.instances[i];
        const PatchSet patches = patches_for ? patches_for(i, p) : PatchSet{};
        results[i] = ScoredInstance{&p, logit_diff(model, tok, p, patches)};
    });
    return results;
}

EvalReport evaluate_dataset(const Model& model, const Tokenizer& tok, const Dataset& dataset,
                            unsigned workers) {
    return aggregate(score_dataset(model, tok, dataset, nullptr, workers));
}

} // namespace svac
