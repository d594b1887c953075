// Command-line front end: seeded, reproducible experiment runs over the core
// library. Every subcommand writes its artifacts plus a manifest with content
// hashes under the run directory.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "svac/analysis.hpp"
#include "svac/artifacts.hpp"
#include "svac/circuits.hpp"
#include "svac/errors.hpp"
#include "svac/eval.hpp"
#include "svac/model.hpp"
#include "svac/parallel.hpp"
#include "svac/patching.hpp"
#include "svac/prompts.hpp"

namespace {

using nlohmann::ordered_json;
using namespace svac;

struct RunConfig {
    std::string model_path;
    std::string tokenizer_dir = "assets/tokenizer";
    std::string lexicon_path = "assets/lexicon.json";
    std::string out_dir;
    std::string setting = "BASE";
    std::string flip = "is_plural";
    std::string ablation = "resample";
    std::size_t n_per_cell = 25;
    std::size_t pool_n = 16;
    std::uint64_t dataset_seed = 1;
    std::uint64_t pool_seed = 2;
    std::uint64_t search_seed = 3;
    double tolerance = 0.05;
    double min_gain = 0.005;
    int patience = 12;
    std::size_t eval_n = 25;
    unsigned workers = 0; // 0 = hardware parallelism
    bool full_profile = false;
    bool prefix_tense_contrast = false;
};

ordered_json config_snapshot(const RunConfig& c) {
    return {{"model", c.model_path},
            {"tokenizer", c.tokenizer_dir},
            {"lexicon", c.lexicon_path},
            {"out", c.out_dir},
            {"setting", c.setting},
            {"flip", c.flip},
            {"ablation", c.ablation},
            {"n_per_cell", c.n_per_cell},
            {"pool_n", c.pool_n},
            {"dataset_seed", c.dataset_seed},
            {"pool_seed", c.pool_seed},
            {"search_seed", c.search_seed},
            {"tolerance", c.tolerance},
            {"min_gain", c.min_gain},
            {"patience", c.patience},
            {"eval_n", c.eval_n},
            {"full", c.full_profile},
            {"prefix_tense_contrast", c.prefix_tense_contrast}};
}

void apply_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("cannot open config file: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const ordered_json::parse_error& e) {
        throw AssetError("config file is not valid JSON: " + std::string(e.what()));
    }
    c.model_path = j.value("model", c.model_path);
    c.tokenizer_dir = j.value("tokenizer", c.tokenizer_dir);
    c.lexicon_path = j.value("lexicon", c.lexicon_path);
    c.out_dir = j.value("out", c.out_dir);
    c.setting = j.value("setting", c.setting);
    c.flip = j.value("flip", c.flip);
    c.ablation = j.value("ablation", c.ablation);
    c.n_per_cell = j.value("n_per_cell", c.n_per_cell);
    c.pool_n = j.value("pool_n", c.pool_n);
    c.dataset_seed = j.value("dataset_seed", c.dataset_seed);
    c.pool_seed = j.value("pool_seed", c.pool_seed);
    c.search_seed = j.value("search_seed", c.search_seed);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.min_gain = j.value("min_gain", c.min_gain);
    c.patience = j.value("patience", c.patience);
    c.eval_n = j.value("eval_n", c.eval_n);
    c.workers = j.value("workers", c.workers);
    c.full_profile = j.value("full", c.full_profile);
    c.prefix_tense_contrast = j.value("prefix_tense_contrast", c.prefix_tense_contrast);
}

void finalize(RunConfig& c, const std::string& subcommand) {
    if (c.full_profile) {
        c.n_per_cell = 100;
        c.pool_n = 64;
        c.eval_n = 100;
    }
    if (c.model_path.empty()) {
        if (const char* env = std::getenv("MODEL_DIR"))
            c.model_path = std::string(env) + "/model.safetensors";
    }
    if (c.model_path.empty())
        throw AssetError("no model checkpoint: pass --model or set MODEL_DIR");
    if (c.out_dir.empty()) c.out_dir = "runs/" + subcommand;
    if (c.workers == 0) c.workers = default_workers();
}

struct LoadedRun {
    ModelBundle bundle;
    Lexicon lexicon;
};

LoadedRun load_run(const RunConfig& c) {
    LoadedRun run{load_model(c.model_path, c.tokenizer_dir), Lexicon::load(c.lexicon_path)};
    run.lexicon.validate(run.bundle.tokenizer);
    return run;
}

PromptOptions prompt_options(const RunConfig& c) {
    PromptOptions opts;
    opts.prefix_tense_contrast = c.prefix_tense_contrast;
    return opts;
}

AblationKind ablation_kind(const RunConfig& c) {
    if (c.ablation == "zero") return AblationKind::zero;
    if (c.ablation == "mean") return AblationKind::mean;
    if (c.ablation == "resample") return AblationKind::resample;
    throw ValidationError("unknown ablation strategy: " + c.ablation);
}

SearchConfig search_config(const RunConfig& c) {
    SearchConfig s;
    s.tolerance = c.tolerance;
    s.min_gain = c.min_gain;
    s.patience = c.patience;
    s.eval_n = c.eval_n;
    s.seed = c.search_seed;
    return s;
}

void print_report(const std::string& label, const EvalReport& r) {
    std::printf("%-28s acc %.3f  f1 %.3f  mean_ld %+.3f  std_ld %.3f  n %zu\n", label.c_str(),
                r.accuracy, r.f1, r.mean_logit_diff, r.std_logit_diff, r.count);
}

int cmd_gen(const RunConfig& c) {
    LoadedRun run = load_run(c);
    const Setting setting = setting_from_name(c.setting);
    const std::size_t n = setting == Setting::ALL || setting == Setting::BASE
                              ? c.n_per_cell
                              : c.n_per_cell * 2;
    Dataset ds = setting_dataset(setting, n, run.lexicon, c.dataset_seed, prompt_options(c));
    RunDirectory out(c.out_dir);
    out.write("dataset.jsonl", dataset_to_jsonl(ds));
    out.write_manifest(config_snapshot(c).dump());
    std::printf("wrote %zu prompts (%s) to %s\n", ds.instances.size(), c.setting.c_str(),
                out.root().c_str());
    return 0;
}

int cmd_verify(const RunConfig& c) {
    LoadedRun run = load_run(c);
    RunDirectory out(c.out_dir);
    ordered_json summary = ordered_json::array();
    for (int s = 0; s <= static_cast<int>(Setting::ALL); ++s) {
        const Setting setting = static_cast<Setting>(s);
        const std::size_t n = setting == Setting::ALL ? c.n_per_cell * 8 : c.n_per_cell;
        Dataset ds = setting_dataset(setting, n, run.lexicon, c.dataset_seed, prompt_options(c));
        const auto scores = score_dataset(run.bundle.model, run.bundle.tokenizer, ds, nullptr,
                                          c.workers);
        EvalReport r = aggregate(scores);
        r.group_key = setting_name(setting);
        print_report(r.group_key, r);
        out.write(std::string("report_") + setting_name(setting) + ".json",
                  report_to_json(r, aggregate_by_cell(scores)));
        summary.push_back({{"setting", r.group_key},
                           {"accuracy", r.accuracy},
                           {"f1", r.f1},
                           {"mean_logit_diff", r.mean_logit_diff},
                           {"count", r.count}});
    }
    out.write("summary.json", summary.dump(2) + "\n");
    out.write_manifest(config_snapshot(c).dump());
    return 0;
}

int cmd_effects(const RunConfig& c) {
    LoadedRun run = load_run(c);
    Dataset ds = setting_dataset(setting_from_name(c.setting), c.n_per_cell, run.lexicon,
                                 c.dataset_seed, prompt_options(c));
    EffectOptions opts;
    opts.workers = c.workers;
    const HeadEffectMatrix m = effect_matrix(run.bundle.model, run.bundle.tokenizer, ds,
                                             factor_from_name(c.flip), run.lexicon, opts);
    const auto ranked = rank_heads(m);
    for (std::size_t i = 0; i < 10 && i < ranked.size(); ++i)
        std::printf("#%zu  (%d, %d)  |effect| %.4f\n", i + 1, ranked[i].layer, ranked[i].head,
                    m.abs_mean.at(ranked[i].layer, ranked[i].head));
    RunDirectory out(c.out_dir);
    out.write("effects.json", effect_matrix_to_json(m));
    out.write("effects.tsv", effect_matrix_to_tsv(m));
    out.write_manifest(config_snapshot(c).dump());
    return 0;
}

struct SearchParts {
    Dataset eval_ds;
    ActivationPool pool;
    std::vector<HeadId> ranked;
    double full_accuracy = 0.0;
};

SearchParts prepare_search(const RunConfig& c, const LoadedRun& run) {
    SearchParts parts;
    const Setting setting = setting_from_name(c.setting);
    Dataset effect_ds = setting_dataset(setting, c.n_per_cell, run.lexicon, c.dataset_seed,
                                        prompt_options(c));
    EffectOptions eopts;
    eopts.workers = c.workers;
    const HeadEffectMatrix m = effect_matrix(run.bundle.model, run.bundle.tokenizer, effect_ds,
                                             factor_from_name(c.flip), run.lexicon, eopts);
    parts.ranked = rank_heads(m);

    parts.eval_ds = setting_dataset(setting, c.eval_n, run.lexicon,
                                    Rng::derive(c.dataset_seed, 1000).next(),
                                    prompt_options(c));
    Dataset pool_ds = setting_dataset(setting, c.pool_n, run.lexicon, c.pool_seed,
                                      prompt_options(c));
    const bool uniform = setting != Setting::ALL;
    parts.pool = collect_pool(run.bundle.model, run.bundle.tokenizer, pool_ds.instances,
                              c.pool_seed, uniform);
    parts.full_accuracy =
        evaluate_dataset(run.bundle.model, run.bundle.tokenizer, parts.eval_ds, c.workers)
            .accuracy;
    return parts;
}

KnockoutOptions knockout_options(const RunConfig& c) {
    KnockoutOptions opts;
    opts.kind = ablation_kind(c);
    opts.workers = c.workers;
    return opts;
}

int cmd_search(const RunConfig& c) {
    LoadedRun run = load_run(c);
    SearchParts parts = prepare_search(c, run);
    const CircuitEvaluator evaluate =
        make_knockout_evaluator(run.bundle.model, run.bundle.tokenizer, parts.eval_ds,
                                parts.pool, c.search_seed, knockout_options(c));
    Circuit circuit = greedy_search(parts.ranked, evaluate, parts.full_accuracy,
                                    search_config(c));
    circuit.setting_label = c.setting;
    std::printf("found %zu heads; full-model accuracy %.3f\n", circuit.heads.size(),
                parts.full_accuracy);
    for (const auto& e : circuit.provenance)
        std::printf("  + (%d, %d) -> acc %.3f\n", e.head.layer, e.head.head, e.accuracy_after);
    RunDirectory out(c.out_dir);
    out.write("circuit.json", circuit_to_json(circuit));
    out.write_manifest(config_snapshot(c).dump());
    return 0;
}

int cmd_expand(const RunConfig& c, const std::string& base_path) {
    LoadedRun run = load_run(c);
    Circuit base = load_circuit(base_path);
    SearchParts parts = prepare_search(c, run);
    const CircuitEvaluator evaluate =
        make_knockout_evaluator(run.bundle.model, run.bundle.tokenizer, parts.eval_ds,
                                parts.pool, c.search_seed, knockout_options(c));
    base.setting_label = c.setting;
    Circuit circuit = expand_circuit(base, parts.ranked, evaluate, parts.full_accuracy,
                                     search_config(c));
    const EvalReport final_report = evaluate(circuit.heads);
    std::printf("expanded %zu -> %zu heads; circuit acc %.3f, full acc %.3f\n",
                base.heads.size(), circuit.heads.size(), final_report.accuracy,
                parts.full_accuracy);
    RunDirectory out(c.out_dir);
    out.write("circuit.json", circuit_to_json(circuit));
    out.write_manifest(config_snapshot(c).dump());
    return 0;
}

int cmd_knockout(const RunConfig& c, const std::string& circuit_path) {
    LoadedRun run = load_run(c);
    const Circuit circuit = load_circuit(circuit_path);
    const Setting setting = setting_from_name(c.setting);
    Dataset ds = setting_dataset(setting, c.eval_n, run.lexicon, c.dataset_seed,
                                 prompt_options(c));
    Dataset pool_ds = setting_dataset(setting, c.pool_n, run.lexicon, c.pool_seed,
                                      prompt_options(c));
    const ActivationPool pool =
        collect_pool(run.bundle.model, run.bundle.tokenizer, pool_ds.instances, c.pool_seed,
                     setting != Setting::ALL);
    const auto scores = knockout_scores(run.bundle.model, run.bundle.tokenizer, circuit.heads,
                                        ds, pool, c.search_seed, knockout_options(c));
    EvalReport r = aggregate(scores);
    r.group_key = c.setting;
    const EvalReport full = evaluate_dataset(run.bundle.model, run.bundle.tokenizer, ds,
                                             c.workers);
    std::printf("circuit of %zu heads on %s:\n", circuit.heads.size(), c.setting.c_str());
    print_report("  circuit", r);
    print_report("  full model", full);
    RunDirectory out(c.out_dir);
    out.write("knockout.json", report_to_json(r, aggregate_by_cell(scores)));
    out.write("full_model.json", report_to_json(full, {}));
    out.write_manifest(config_snapshot(c).dump());
    return 0;
}

int cmd_attn(const RunConfig& c, const std::string& head_text,
             std::vector<std::string> texts) {
    LoadedRun run = load_run(c);
    const Circuit heads = circuit_from_text("(" + head_text + ")");
    const HeadId head = *heads.heads.begin();
    if (texts.empty())
        texts.assign(kProbeSentences.begin(), kProbeSentences.end());
    RunDirectory out(c.out_dir);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const AttentionPattern p =
            attention_pattern(run.bundle.model, run.bundle.tokenizer, texts[i], head);
        const std::string stem = "attn_L" + std::to_string(head.layer) + "H" +
                                 std::to_string(head.head) + "_" + std::to_string(i);
        out.write(stem + ".tsv", attention_pattern_to_tsv(p));
        out.write(stem + ".pgm", attention_pattern_to_pgm(p));
        std::printf("%s: %zu tokens\n", texts[i].c_str(), p.tokens.size());
    }
    out.write_manifest(config_snapshot(c).dump());
    return 0;
}

int cmd_dla(const RunConfig& c) {
    LoadedRun run = load_run(c);
    Dataset ds = setting_dataset(setting_from_name(c.setting), c.n_per_cell, run.lexicon,
                                 c.dataset_seed, prompt_options(c));
    RunDirectory out(c.out_dir);
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < ds.instances.size(); ++i) {
        const DlaReport r =
            direct_logit_attribution(run.bundle.model, run.bundle.tokenizer, ds.instances[i]);
        double head_sum = 0.0;
        for (float v : r.head_contributions.data) head_sum += v;
        rows.push_back({{"text", r.prompt_text},
                        {"total", r.total},
                        {"embedding", r.embedding},
                        {"head_sum", head_sum},
                        {"pooled_residual", r.pooled_residual}});
        if (i == 0) out.write("dla_first.json", dla_report_to_json(r));
    }
    out.write("dla.json", rows.dump(2) + "\n");
    out.write_manifest(config_snapshot(c).dump());
    std::printf("attributed %zu prompts\n", ds.instances.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    pin_blas_single_thread();

    RunConfig cfg;
    // The config file is applied before flag parsing so flags win.
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                apply_config_file(cfg, argv[i + 1]);
            } catch (const AssetError& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }
    }

    CLI::App app{"subject-verb agreement circuit toolkit for GPT-2 Small"};
    app.require_subcommand(1);
    std::string config_path, base_path, circuit_path, head_text;
    std::vector<std::string> texts;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (flags override it)");
        sub->add_option("--model", cfg.model_path,
                        "model.safetensors path (default: $MODEL_DIR/model.safetensors)");
        sub->add_option("--tokenizer", cfg.tokenizer_dir, "tokenizer asset directory");
        sub->add_option("--lexicon", cfg.lexicon_path, "lexicon JSON path");
        sub->add_option("--out", cfg.out_dir, "run output directory");
        sub->add_option("--setting", cfg.setting,
                        "BASE, is_plural, is_negated, has_prefix, is_pronoun, tense_past, "
                        "use_irregular, or ALL");
        sub->add_option("--flip", cfg.flip, "factor flipped for counterfactuals");
        sub->add_option("--ablation", cfg.ablation, "zero, mean, or resample");
        sub->add_option("--n", cfg.n_per_cell, "prompts per setting (per cell for gen)");
        sub->add_option("--pool", cfg.pool_n, "ablation donor pool size");
        sub->add_option("--seed", cfg.dataset_seed, "dataset seed");
        sub->add_option("--pool-seed", cfg.pool_seed, "pool seed");
        sub->add_option("--search-seed", cfg.search_seed, "search/knockout seed");
        sub->add_option("--tolerance", cfg.tolerance, "accuracy gap tolerance");
        sub->add_option("--min-gain", cfg.min_gain, "minimum accuracy gain per head");
        sub->add_option("--patience", cfg.patience, "consecutive rejections before stopping");
        sub->add_option("--eval-n", cfg.eval_n, "prompts per candidate evaluation");
        sub->add_option("--workers", cfg.workers, "parallel forward passes (0 = hardware)");
        sub->add_flag("--full", cfg.full_profile, "paper-scale sizes (n 100, pool 64, eval 100)");
        sub->add_flag("--prefix-tense-contrast", cfg.prefix_tense_contrast,
                      "third-person vs past contrast for affirmative prefixed prompts");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a prompt dataset");
    add_common(gen);
    CLI::App* verify = app.add_subcommand("verify", "evaluate the full model on all settings");
    add_common(verify);
    CLI::App* effects = app.add_subcommand("effects", "per-head patching effect matrix");
    add_common(effects);
    CLI::App* search = app.add_subcommand("search", "greedy circuit search");
    add_common(search);
    CLI::App* expand = app.add_subcommand("expand", "expand a base circuit on a new setting");
    add_common(expand);
    expand->add_option("--base", base_path, "base circuit file")->required();
    CLI::App* knockout = app.add_subcommand("knockout", "evaluate a circuit under knockout");
    add_common(knockout);
    knockout->add_option("--circuit", circuit_path, "circuit file")->required();
    CLI::App* attn = app.add_subcommand("attn", "export attention patterns for one head");
    add_common(attn);
    attn->add_option("--head", head_text, "head as layer,head (e.g. 11,7)")->required();
    attn->add_option("--text", texts, "probe text (repeatable; default: built-in probes)");
    CLI::App* dla = app.add_subcommand("dla", "direct logit attribution per prompt");
    add_common(dla);

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        RunConfig run_cfg = cfg;
        finalize(run_cfg, sub->get_name());
        if (sub == gen) return cmd_gen(run_cfg);
        if (sub == verify) return cmd_verify(run_cfg);
        if (sub == effects) return cmd_effects(run_cfg);
        if (sub == search) return cmd_search(run_cfg);
        if (sub == expand) return cmd_expand(run_cfg, base_path);
        if (sub == knockout) return cmd_knockout(run_cfg, circuit_path);
        if (sub == attn) return cmd_attn(run_cfg, head_text, texts);
        if (sub == dla) return cmd_dla(run_cfg);
    } catch (const AssetError& e) {
        std::cerr << "asset error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
