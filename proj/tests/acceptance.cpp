// Acceptance checks for the agreement-circuit toolkit. Each criterion prints
// exactly one PASS / FAIL / SKIP line. Checks that depend on trained-model
// behavior are skipped (with the mechanical part still exercised) when the
// checkpoint is marked synthetic in its metadata, since random weights carry
// no linguistic signal to reproduce.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "svac/analysis.hpp"
#include "svac/artifacts.hpp"
#include "svac/circuits.hpp"
#include "svac/errors.hpp"
#include "svac/eval.hpp"
#include "svac/model.hpp"
#include "svac/patching.hpp"
#include "svac/prompts.hpp"

using namespace svac;
using svac::test::repo_path;

namespace {

int g_failures = 0;

void report(const char* status, int criterion, const std::string& message) {
    std::printf("%s criterion %d: %s\n", status, criterion, message.c_str());
    std::fflush(stdout);
}

void pass(int criterion, const std::string& message) { report("PASS", criterion, message); }
void skip(int criterion, const std::string& message) { report("SKIP", criterion, message); }
void fail(int criterion, const std::string& message) {
    report("FAIL", criterion, message);
    ++g_failures;
}

struct Env {
    std::optional<ModelBundle> bundle;
    Lexicon lexicon;
    bool synthetic = false;
    std::string load_error;

    const Model& model() const { return bundle->model; }
    const Tokenizer& tok() const { return bundle->tokenizer; }
};

Env load_env() {
    Env env;
    const std::string ckpt = repo_path("testdata/model/model.safetensors");
    try {
        env.bundle = load_model(ckpt, repo_path("assets/tokenizer"));
        env.lexicon = Lexicon::load(repo_path("assets/lexicon.json"));
        env.lexicon.validate(env.bundle->tokenizer);
        const auto& meta = env.bundle->model.checkpoint_metadata;
        auto it = meta.find("synthetic");
        env.synthetic = it != meta.end() && it->second == "true";
    } catch (const std::exception& e) {
        env.load_error = e.what();
    }
    return env;
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), format, a, b, c);
    return buf;
}

// 1. The evaluator's F1 must reproduce every reference (accuracy, F1) row.
void criterion_1() {
    std::ifstream in(repo_path("tests/data/cell_metrics_reference.json"));
    if (!in) {
        fail(1, "reference metrics table missing");
        return;
    }
    nlohmann::json rows;
    in >> rows;
    if (rows.size() != 64) {
        fail(1, "expected 64 reference rows, got " + std::to_string(rows.size()));
        return;
    }
    double worst = 0.0;
    for (const auto& row : rows) {
        const double acc = row.at("accuracy").get<double>();
        const double printed_f1 = row.at("f1").get<double>();
        const int count = row.at("count").get<int>();
        const int correct = static_cast<int>(std::lround(acc * count));
        std::vector<PromptInstance> prompts(static_cast<std::size_t>(count));
        std::vector<ScoredInstance> scores;
        for (int i = 0; i < count; ++i)
            scores.push_back(ScoredInstance{&prompts[static_cast<std::size_t>(i)],
                                            i < correct ? 1.0 : -1.0});
        const EvalReport r = aggregate(scores);
        worst = std::max({worst, std::fabs(r.f1 - printed_f1),
                          std::fabs(r.precision - row.at("precision").get<double>()),
                          std::fabs(r.recall - row.at("recall").get<double>())});
    }
    if (worst <= 0.005)
        pass(1, fmt("F1/precision/recall algebra matches all 64 reference rows "
                    "(max deviation %.4f)",
                    worst));
    else
        fail(1, fmt("metric deviation %.4f exceeds 0.005", worst));
}

// 2. Full-model directional reproduction at desk scale. Also produces the
//    artifact reused by the determinism criterion.
std::string criterion_2(const Env& env) {
    const std::size_t n = 25;
    const Dataset base_ds = setting_dataset(Setting::BASE, n, env.lexicon, 101);
    const auto base_scores = score_dataset(env.model(), env.tok(), base_ds, nullptr, 1);
    const EvalReport base = aggregate(base_scores);

    const Dataset neg_ds = setting_dataset(Setting::is_negated, n, env.lexicon, 101);
    const EvalReport negated = evaluate_dataset(env.model(), env.tok(), neg_ds);

    const Dataset grid = generate_grid(n, env.lexicon, 101);
    const auto grid_scores = score_dataset(env.model(), env.tok(), grid, nullptr, 1);
    const auto by_cell = aggregate_by_cell(grid_scores);

    const std::string artifact =
        report_to_json(base, aggregate_by_cell(base_scores)) + report_to_json(negated, {});

    if (env.synthetic) {
        skip(2, fmt("pipeline ran (BASE acc %.2f over %g prompts) but directional targets "
                    "need a trained checkpoint; this one is synthetic",
                    base.accuracy, static_cast<double>(n)));
        return artifact;
    }

    std::string problems;
    if (base.accuracy < 0.50 || base.accuracy > 0.80)
        problems += fmt(" BASE accuracy %.2f outside [0.50, 0.80];", base.accuracy);
    if (base.mean_logit_diff <= 0.0)
        problems += fmt(" BASE mean logit diff %.2f not positive;", base.mean_logit_diff);
    if (negated.accuracy < 0.75)
        problems += fmt(" negated accuracy %.2f below 0.75;", negated.accuracy);
    for (const auto& [label, r] : by_cell) {
        if (label.find("Negated") != std::string::npos &&
            label.find("Present") != std::string::npos &&
            label.find("Irregular") != std::string::npos && r.accuracy < 0.9)
            problems += " cell " + label + fmt(" accuracy %.2f below 0.9;", r.accuracy);
    }
    if (problems.empty())
        pass(2, fmt("BASE acc %.2f (mean ld %+.2f), negated acc %.2f, all negated-present-"
                    "irregular cells >= 0.9",
                    base.accuracy, base.mean_logit_diff, negated.accuracy));
    else
        fail(2, "directional targets missed:" + problems);
    return artifact;
}

// 3. Head-effect matrix over 50 BASE prompts with the is_plural flip.
HeadEffectMatrix criterion_3(const Env& env) {
    const Dataset ds = setting_dataset(Setting::BASE, 50, env.lexicon, 103);
    EffectOptions opts;
    opts.workers = 1;
    const HeadEffectMatrix m =
        effect_matrix(env.model(), env.tok(), ds, Factor::is_plural, env.lexicon, opts);
    if (m.n_used != 50 || !m.abs_mean.all_finite()) {
        fail(3, fmt("effect matrix malformed: %g of 50 prompt pairs used",
                    static_cast<double>(m.n_used)));
        return m;
    }
    const auto ranked = rank_heads(m);
    const std::string top = "(" + std::to_string(ranked[0].layer) + "," +
                            std::to_string(ranked[0].head) + "), (" +
                            std::to_string(ranked[1].layer) + "," +
                            std::to_string(ranked[1].head) + "), (" +
                            std::to_string(ranked[2].layer) + "," +
                            std::to_string(ranked[2].head) + ")";
    if (env.synthetic) {
        skip(3, "effect matrix computed over 50 pairs (top-3: " + top +
                    ") but the expected ranking needs a trained checkpoint");
        return m;
    }
    const bool has_11_7 = ranked[0] == HeadId{11, 7} || ranked[1] == HeadId{11, 7} ||
                          ranked[2] == HeadId{11, 7};
    const int late = (ranked[0].layer == 11) + (ranked[1].layer == 11) +
                     (ranked[2].layer == 11);
    if (has_11_7 && late >= 2)
        pass(3, "top-3 heads " + top + " include (11,7) with >= 2 in layer 11");
    else
        fail(3, "top-3 heads " + top + " miss the expected late-layer ranking");
    return m;
}

// 4. Self-patching every head must not move any final logit.
void criterion_4(const Env& env) {
    const ModelConfig& cfg = env.model().config;
    const Dataset ds = setting_dataset(Setting::ALL, 10, env.lexicon, 107);
    float worst = 0.0f;
    for (const auto& p : ds.instances) {
        const TokenSequence tokens = env.tok().encode(p.text);
        ForwardOptions capture;
        capture.capture = true;
        ResidualSnapshots snaps;
        const ForwardResult base = forward_with_snapshots(env.model(), tokens, snaps, capture);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                PatchSet patches;
                patches.add(HeadId{static_cast<int>(l), static_cast<int>(h)},
                            base.cache->z(static_cast<int>(l), static_cast<int>(h)));
                const ForwardResult patched =
                    forward_resume(env.model(), tokens, snaps, patches);
                for (std::size_t i = 0; i < patched.logits.size(); ++i)
                    worst = std::max(worst, std::fabs(patched.logits[i] - base.logits[i]));
            }
        }
    }
    if (worst < 1e-5f)
        pass(4, fmt("identity patches over 10 prompts x 144 heads move logits by at most %.2g",
                    worst));
    else
        fail(4, fmt("identity patch moved a logit by %.2g (limit 1e-5)", worst));
}

// 5. Knockout anchors. Returns the serialized scores for the determinism check.
std::string criterion_5(const Env& env) {
    const ModelConfig& cfg = env.model().config;
    const Dataset ds = setting_dataset(Setting::BASE, 25, env.lexicon, 109);
    const Dataset pool_ds = setting_dataset(Setting::BASE, 16, env.lexicon, 110);
    const ActivationPool pool =
        collect_pool(env.model(), env.tok(), pool_ds.instances, 110);

    std::set<HeadId> everything;
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        for (std::size_t h = 0; h < cfg.n_heads; ++h)
            everything.insert(HeadId{static_cast<int>(l), static_cast<int>(h)});

    const auto full_scores = score_dataset(env.model(), env.tok(), ds, nullptr, 1);
    const auto ko_scores =
        knockout_scores(env.model(), env.tok(), everything, ds, pool, 111);
    bool bit_exact = full_scores.size() == ko_scores.size();
    for (std::size_t i = 0; bit_exact && i < full_scores.size(); ++i)
        bit_exact = full_scores[i].logit_diff == ko_scores[i].logit_diff;

    const Circuit base_circuit = load_circuit(repo_path("assets/circuits/base.circuit"));
    const EvalReport circuit_report =
        knockout_eval(env.model(), env.tok(), base_circuit.heads, ds, pool, 111);
    const EvalReport full = aggregate(full_scores);
    const std::string artifact =
        report_to_json(circuit_report, {}) + report_to_json(full, {});

    if (!bit_exact) {
        fail(5, "all-144-head knockout does not reproduce the full model bit-exactly");
        return artifact;
    }
    if (env.synthetic) {
        skip(5, fmt("all-144-head knockout is bit-exact; the 12-head reference circuit scored "
                    "%.2f vs full %.2f, but its accuracy anchor (0.65) needs a trained "
                    "checkpoint",
                    circuit_report.accuracy, full.accuracy));
        return artifact;
    }
    std::string problems;
    if (std::fabs(circuit_report.accuracy - full.accuracy) > 0.15)
        problems += fmt(" circuit acc %.2f vs full %.2f differs by more than 0.15;",
                        circuit_report.accuracy, full.accuracy);
    if (std::fabs(circuit_report.accuracy - 0.65) > 0.15)
        problems += fmt(" circuit acc %.2f more than 0.15 from the 0.65 anchor;",
                        circuit_report.accuracy);
    if (problems.empty())
        pass(5, fmt("all-144 knockout bit-exact; 12-head circuit acc %.2f (full %.2f)",
                    circuit_report.accuracy, full.accuracy));
    else
        fail(5, "knockout anchors missed:" + problems);
    return artifact;
}

// 6. Greedy search sanity on the BASE setting.
void criterion_6(const Env& env, const HeadEffectMatrix& effects) {
    const auto ranked = rank_heads(effects);
    const Dataset eval_ds = setting_dataset(Setting::BASE, 25, env.lexicon, 113);
    const Dataset pool_ds = setting_dataset(Setting::BASE, 16, env.lexicon, 114);
    const ActivationPool pool =
        collect_pool(env.model(), env.tok(), pool_ds.instances, 114);
    const double full_acc = evaluate_dataset(env.model(), env.tok(), eval_ds).accuracy;

    SearchConfig cfg;
    cfg.eval_n = eval_ds.instances.size();
    cfg.seed = 115;
    const CircuitEvaluator evaluate =
        make_knockout_evaluator(env.model(), env.tok(), eval_ds, pool, cfg.seed);
    const Circuit found = greedy_search(ranked, evaluate, full_acc, cfg);

    bool monotone = true;
    double last = -1.0;
    for (const auto& e : found.provenance) {
        monotone = monotone && e.accuracy_after >= last + cfg.min_gain;
        last = e.accuracy_after;
    }
    if (!monotone) {
        fail(6, "provenance log is not monotone under the min_gain rule");
        return;
    }
    const double final_acc =
        found.heads.empty() ? evaluate({}).accuracy : found.provenance.back().accuracy_after;
    if (env.synthetic) {
        skip(6, fmt("search ran (found %g heads, acc %.2f vs full %.2f) with monotone "
                    "provenance; size/accuracy/overlap targets need a trained checkpoint",
                    static_cast<double>(found.heads.size()), final_acc, full_acc));
        return;
    }
    const Circuit reference = load_circuit(repo_path("assets/circuits/base.circuit"));
    const CircuitComparison cmp = compare_circuits(found, reference);
    std::string problems;
    if (found.heads.size() > 24)
        problems += fmt(" circuit has %g heads (limit 24);",
                        static_cast<double>(found.heads.size()));
    if (final_acc < full_acc - 0.10)
        problems += fmt(" accuracy %.2f more than 0.10 below full %.2f;", final_acc, full_acc);
    if (cmp.shared.size() < 4)
        problems += fmt(" only %g heads shared with the reference circuit (need 4);",
                        static_cast<double>(cmp.shared.size()));
    if (problems.empty())
        pass(6, fmt("found %g heads, acc %.2f (full %.2f), monotone provenance",
                    static_cast<double>(found.heads.size()), final_acc, full_acc));
    else
        fail(6, "search sanity missed:" + problems);
}

// 7. Attribution completeness over 100 prompts.
void criterion_7(const Env& env) {
    const Dataset ds = setting_dataset(Setting::ALL, 100, env.lexicon, 117);
    double worst = 0.0;
    for (const auto& p : ds.instances) {
        const DlaReport r = direct_logit_attribution(env.model(), env.tok(), p);
        double head_sum = 0.0;
        for (float v : r.head_contributions.data) head_sum += v;
        worst = std::max(worst,
                         std::fabs(r.embedding + head_sum + r.pooled_residual - r.total));
    }
    if (worst < 1e-3)
        pass(7, fmt("attribution residual at most %.2g over 100 prompts", worst));
    else
        fail(7, fmt("attribution residual %.2g exceeds 1e-3", worst));
}

// 8. Attention-pattern validity on the probe sentences.
void criterion_8(const Env& env) {
    const ModelConfig& cfg = env.model().config;
    float worst_row = 0.0f, head08_max = 0.0f;
    bool causal = true;
    for (const char* text : kProbeSentences) {
        const TokenSequence tokens = env.tok().encode(text);
        ForwardOptions opts;
        opts.capture = true;
        const std::vector<int> none;
        opts.logit_ids = &none;
        const ForwardResult res = forward(env.model(), tokens, {}, opts);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            for (std::size_t h = 0; h < cfg.n_heads; ++h) {
                const Matrix& p = res.cache->pattern(static_cast<int>(l),
                                                     static_cast<int>(h));
                for (std::size_t q = 0; q < p.rows; ++q) {
                    float sum = 0.0f;
                    for (std::size_t k = 0; k < p.cols; ++k) {
                        if (k > q && p.at(q, k) != 0.0f) causal = false;
                        sum += p.at(q, k);
                    }
                    worst_row = std::max(worst_row, std::fabs(sum - 1.0f));
                }
                if (l == 0 && h == 8) {
                    const std::size_t last = tokens.final_index();
                    for (std::size_t k = 0; k < p.cols; ++k)
                        head08_max = std::max(head08_max, p.at(last, k));
                }
            }
        }
    }
    std::string problems;
    if (worst_row > 1e-5f) problems += fmt(" row sum off by %.2g;", worst_row);
    if (!causal) problems += " nonzero attention above the diagonal;";
    if (head08_max >= 0.9f)
        problems += fmt(" head (0,8) final-query max %.2f not below 0.9;", head08_max);
    if (problems.empty())
        pass(8, fmt("rows sum to 1 (max error %.2g), causal zeros exact, head (0,8) "
                    "final-query max %.2f",
                    worst_row, head08_max));
    else
        fail(8, "attention validity missed:" + problems);
}

// 9. Byte-identical artifacts across reruns and worker counts.
void criterion_9(const Env& env, const std::string& verify_artifact,
                 const std::string& knockout_artifact, const HeadEffectMatrix& effects) {
    // rerun the criterion-2 evaluation with a different worker count
    const Dataset base_ds = setting_dataset(Setting::BASE, 25, env.lexicon, 101);
    const auto base_scores = score_dataset(env.model(), env.tok(), base_ds, nullptr, 3);
    const Dataset neg_ds = setting_dataset(Setting::is_negated, 25, env.lexicon, 101);
    const EvalReport negated = evaluate_dataset(env.model(), env.tok(), neg_ds, 3);
    const std::string verify_rerun =
        report_to_json(aggregate(base_scores), aggregate_by_cell(base_scores)) +
        report_to_json(negated, {});

    // rerun the criterion-3 effect matrix threaded
    const Dataset eff_ds = setting_dataset(Setting::BASE, 50, env.lexicon, 103);
    EffectOptions opts;
    opts.workers = 3;
    const HeadEffectMatrix effects_rerun =
        effect_matrix(env.model(), env.tok(), eff_ds, Factor::is_plural, env.lexicon, opts);

    // rerun the criterion-5 knockout threaded
    const Dataset ko_ds = setting_dataset(Setting::BASE, 25, env.lexicon, 109);
    const Dataset pool_ds = setting_dataset(Setting::BASE, 16, env.lexicon, 110);
    const ActivationPool pool =
        collect_pool(env.model(), env.tok(), pool_ds.instances, 110);
    const Circuit base_circuit = load_circuit(repo_path("assets/circuits/base.circuit"));
    KnockoutOptions ko_opts;
    ko_opts.workers = 3;
    const EvalReport circuit_report = knockout_eval(env.model(), env.tok(),
                                                    base_circuit.heads, ko_ds, pool, 111,
                                                    ko_opts);
    const auto full_scores = score_dataset(env.model(), env.tok(), ko_ds, nullptr, 3);
    const std::string knockout_rerun =
        report_to_json(circuit_report, {}) + report_to_json(aggregate(full_scores), {});

    std::string problems;
    if (verify_rerun != verify_artifact) problems += " evaluation reports differ;";
    if (effect_matrix_to_json(effects_rerun) != effect_matrix_to_json(effects))
        problems += " effect matrices differ;";
    if (knockout_rerun != knockout_artifact) problems += " knockout reports differ;";
    if (problems.empty())
        pass(9, "evaluation, effect-matrix, and knockout artifacts are byte-identical "
                "across reruns and worker counts");
    else
        fail(9, "determinism violated:" + problems);
}

} // namespace

int main() {
    pin_blas_single_thread();
    criterion_1();

    const Env env = load_env();
    if (!env.bundle) {
        const std::string why = "no usable checkpoint (" + env.load_error + ")";
        for (int c = 2; c <= 9; ++c) skip(c, why);
        return g_failures == 0 ? 0 : 1;
    }
    if (env.synthetic)
        std::printf("note: checkpoint metadata marks it synthetic; trained-model targets "
                    "are reported as SKIP\n");

    const std::string verify_artifact = criterion_2(env);
    const HeadEffectMatrix effects = criterion_3(env);
    criterion_4(env);
    const std::string knockout_artifact = criterion_5(env);
    criterion_6(env, effects);
    criterion_7(env);
    criterion_8(env);
    criterion_9(env, verify_artifact, knockout_artifact, effects);

    return g_failures == 0 ? 0 : 1;
}
