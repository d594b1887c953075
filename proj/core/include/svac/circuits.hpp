#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "svac/patching.hpp"

namespace svac {

struct SearchConfig {
    double tolerance = 0.05;  // acceptable accuracy gap to the full model
    double min_gain = 0.005;  // minimum accuracy improvement to accept a head
    int patience = 12;        // consecutive rejections before stopping
    std::size_t eval_n = 100; // prompts per candidate evaluation
    std::uint64_t seed = 0;
};

struct ProvenanceEntry {
    HeadId head;
    double accuracy_after = 0.0;
};

struct Circuit {
    std::set<HeadId> heads;
    std::vector<ProvenanceEntry> provenance; // accepted heads, in order
    std::string setting_label;
    SearchConfig search_config;
};

// Heads in descending mean-absolute-effect order; ties break (layer, head)
// ascending.
std::vector<HeadId> rank_heads(const HeadEffectMatrix& m);

// Accuracy of a candidate circuit under knockout; pinned dataset and pool so
// candidate comparisons stay paired.
using CircuitEvaluator = std::function<EvalReport(const std::set<HeadId>&)>;

// Walks the ranked list greedily from an empty circuit, keeping heads that
// improve knockout accuracy by at least min_gain. Stops once accuracy is
// within tolerance of the full model, the list is exhausted, or patience
// consecutive candidates were rejected.
Circuit greedy_search(const std::vector<HeadId>& ranked, const CircuitEvaluator& evaluate,
                      double full_model_accuracy, const SearchConfig& cfg);

// Same acceptance rule, but starting from an existing circuit on a new
// setting; the result is always a superset of `base`.
Circuit expand_circuit(const Circuit& base, const std::vector<HeadId>& ranked,
                       const CircuitEvaluator& evaluate, double full_model_accuracy,
                       const SearchConfig& cfg);

// Production evaluator over knockout_eval with a fixed dataset/pool/seed.
CircuitEvaluator make_knockout_evaluator(const Model& model, const Tokenizer& tok,
                                         const Dataset& dataset, const ActivationPool& pool,
                                         std::uint64_t seed, const KnockoutOptions& opts = {});

struct CircuitComparison {
    std::set<HeadId> shared;
    std::set<HeadId> only_a;
    std::set<HeadId> only_b;
    double jaccard = 0.0;
};

CircuitComparison compare_circuits(const Circuit& a, const Circuit& b);

// Circuit files are JSON with stable field order. load also accepts a bare
// head list in "(layer, head), (layer, head), ..." form.
std::string circuit_to_json(const Circuit& c);
Circuit circuit_from_text(const std::string& text);
void save_circuit(const Circuit& c, const std::string& path);
Circuit load_circuit(const std::string& path);

} // namespace svac
