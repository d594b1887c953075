#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "svac/model.hpp"
#include "svac/prompts.hpp"

namespace svac {

// Label convention: each instance's true label is its correct form, so there
// are no negatives; precision is identically 1, recall equals accuracy, and
// f1 = 2*acc/(1+acc).
struct EvalReport {
    double accuracy = 0.0;
    double precision = 1.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mean_logit_diff = 0.0;
    double std_logit_diff = 0.0; // population
    std::size_t count = 0;
    std::string group_key; // optional factor-combination label
};

// Final-position logit of the correct answer token minus the incorrect one.
double logit_diff(const Model& model, const Tokenizer& tok, const PromptInstance& p,
                  const PatchSet& patches = {});

// True iff the model prefers the correct form; an exact tie counts as wrong.
bool classify(const Model& model, const Tokenizer& tok, const PromptInstance& p,
              const PatchSet& patches = {});

struct ScoredInstance {
    const PromptInstance* prompt = nullptr;
    double logit_diff = 0.0;
};

EvalReport aggregate(const std::vector<ScoredInstance>& results);

// Per factor-combination breakdown, keyed by PromptFactors::label().
std::map<std::string, EvalReport> aggregate_by_cell(const std::vector<ScoredInstance>& results);

// Scores every instance (optionally with a per-instance patch builder) and
// merges deterministically regardless of worker count.
std::vector<ScoredInstance> score_dataset(
    const Model& model, const Tokenizer& tok, const Dataset& dataset,
    const std::function<PatchSet(std::size_t, const PromptInstance&)>& patches_for,
    unsigned workers = 1);

EvalReport evaluate_dataset(const Model& model, const Tokenizer& tok, const Dataset& dataset,
                            unsigned workers = 1);

} // namespace svac
