#include "svac/circuits.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svac/errors.hpp"

namespace svac {

using nlohmann::ordered_json;

std::vector<HeadId> rank_heads(const HeadEffectMatrix& m) {
    if (!m.abs_mean.all_finite())
        throw ValidationError("rank_heads: effect matrix has non-finite entries");
    std::vector<HeadId> heads;
    heads.reserve(m.abs_mean.data.size());
    for (std::size_t l = 0; l < m.abs_mean.rows; ++l)
        for (std::size_t h = 0; h < m.abs_mean.cols; ++h)
            heads.push_back(HeadId{static_cast<int>(l), static_cast<int>(h)});
    std::stable_sort(heads.begin(), heads.end(), [&](const HeadId& a, const HeadId& b) {
        const float ea = m.abs_mean.at(a.layer, a.head);
        const float eb = m.abs_mean.at(b.layer, b.head);
        if (ea != eb) return ea > eb;
        return a < b;
    });
    return heads;
}

namespace {

Circuit run_greedy(std::set<HeadId> heads, std::vector<ProvenanceEntry> provenance,
                   double start_accuracy, const std::vector<HeadId>& ranked,
                   const CircuitEvaluator& evaluate, double full_model_accuracy,
                   const SearchConfig& cfg) {
    if (!(cfg.tolerance > 0.0)) throw ValidationError("search config: tolerance must be > 0");
    if (cfg.min_gain < 0.0) throw ValidationError("search config: min_gain must be >= 0");
    if (cfg.patience < 1) throw ValidationError("search config: patience must be >= 1");

    Circuit circuit;
    circuit.heads = std::move(heads);
    circuit.provenance = std::move(provenance);
    circuit.search_config = cfg;

    double accuracy = start_accuracy;
    int rejects = 0;
    for (const HeadId& candidate : ranked) {
        if (accuracy >= full_model_accuracy - cfg.tolerance) break;
        if (circuit.heads.count(candidate)) continue;

        std::set<HeadId> trial = circuit.heads;
        trial.insert(candidate);
        const EvalReport r = evaluate(trial);
        if (r.accuracy >= accuracy + cfg.min_gain) {
            circuit.heads = std::move(trial);
            circuit.provenance.push_back(ProvenanceEntry{candidate, r.accuracy});
            accuracy = r.accuracy;
            rejects = 0;
        } else {
            if (++rejects >= cfg.patience) break;
        }
    }
    return circuit;
}

} // namespace

Circuit greedy_search(const std::vector<HeadId>& ranked, const CircuitEvaluator& evaluate,
                      double full_model_accuracy, const SearchConfig& cfg) {
    const EvalReport empty = evaluate({});
    return run_greedy({}, {}, empty.accuracy, ranked, evaluate, full_model_accuracy, cfg);
}

Circuit expand_circuit(const Circuit& base, const std::vector<HeadId>& ranked,
                       const CircuitEvaluator& evaluate, double full_model_accuracy,
                       const SearchConfig& cfg) {
    const EvalReport start = evaluate(base.heads);
    Circuit out = run_greedy(base.heads, base.provenance, start.accuracy, ranked, evaluate,
                             full_model_accuracy, cfg);
    out.setting_label = base.setting_label;
    return out;
}

CircuitEvaluator make_knockout_evaluator(const Model& model, const Tokenizer& tok,
                                         const Dataset& dataset, const ActivationPool& pool,
                                         std::uint64_t seed, const KnockoutOptions& opts) {
    return [&model, &tok, &dataset, &pool, seed, opts](const std::set<HeadId>& circuit) {
        return knockout_eval(model, tok, circuit, dataset, pool, seed, opts);
    };
}

CircuitComparison compare_circuits(const Circuit& a, const Circuit& b) {
    CircuitComparison cmp;
    for (const auto& h : a.heads)
        (b.heads.count(h) ? cmp.shared : cmp.only_a).insert(h);
    for (const auto& h : b.heads)
        if (!a.heads.count(h)) cmp.only_b.insert(h);
    const std::size_t uni = cmp.shared.size() + cmp.only_a.size() + cmp.only_b.size();
    cmp.jaccard = uni == 0 ? 1.0
                           : static_cast<double>(cmp.shared.size()) / static_cast<double>(uni);
    return cmp;
}

std::string circuit_to_json(const Circuit& c) {
    ordered_json j;
    j["setting"] = c.setting_label;
    j["heads"] = ordered_json::array();
    for (const auto& h : c.heads) j["heads"].push_back({h.layer, h.head});
    j["provenance"] = ordered_json::array();
    for (const auto& e : c.provenance)
        j["provenance"].push_back({{"layer", e.head.layer},
                                   {"head", e.head.head},
                                   {"accuracy_after", e.accuracy_after}});
    j["search_config"] = {{"tolerance", c.search_config.tolerance},
                          {"min_gain", c.search_config.min_gain},
                          {"patience", c.search_config.patience},
                          {"eval_n", c.search_config.eval_n},
                          {"seed", c.search_config.seed}};
    return j.dump(2) + "\n";
}

namespace {

Circuit circuit_from_pair_list(const std::string& text) {
    Circuit c;
    std::size_t i = 0;
    auto skip_space = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    auto skip_ws = [&] {
        while (i < text.size() &&
               (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == ','))
            ++i;
    };
    auto read_int = [&]() -> int {
        skip_space();
        std::size_t start = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        if (start == i) throw AssetError("circuit list: expected a number near offset " +
                                         std::to_string(start));
        return std::stoi(text.substr(start, i - start));
    };
    while (true) {
        skip_ws();
        if (i >= text.size()) break;
        if (text[i] != '(')
            throw AssetError("circuit list: expected '(' near offset " + std::to_string(i));
        ++i;
        const int layer = read_int();
        skip_space();
        if (i >= text.size() || text[i] != ',')
            throw AssetError("circuit list: expected ',' inside pair");
        ++i;
        const int head = read_int();
        skip_space();
        if (i >= text.size() || text[i] != ')')
            throw AssetError("circuit list: expected ')' to close pair");
        ++i;
        c.heads.insert(HeadId{layer, head});
    }
    if (c.heads.empty()) throw AssetError("circuit list: no head pairs found");
    return c;
}

} // namespace

Circuit circuit_from_text(const std::string& text) {
    const std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw AssetError("circuit file is empty");
    if (text[first] == '(') return circuit_from_pair_list(text);

    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw AssetError("circuit file is neither JSON nor a head-pair list: " +
                         std::string(e.what()));
    }
    Circuit c;
    c.setting_label = j.value("setting", "");
    for (const auto& pair : j.at("heads"))
        c.heads.insert(HeadId{pair.at(0).get<int>(), pair.at(1).get<int>()});
    if (j.contains("provenance")) {
        for (const auto& e : j["provenance"])
            c.provenance.push_back(ProvenanceEntry{
                HeadId{e.at("layer").get<int>(), e.at("head").get<int>()},
                e.at("accuracy_after").get<double>()});
    }
    if (j.contains("search_config")) {
        const auto& s = j["search_config"];
        c.search_config.tolerance = s.value("tolerance", c.search_config.tolerance);
        c.search_config.min_gain = s.value("min_gain", c.search_config.min_gain);
        c.search_config.patience = s.value("patience", c.search_config.patience);
        c.search_config.eval_n = s.value("eval_n", c.search_config.eval_n);
        c.search_config.seed = s.value("seed", c.search_config.seed);
    }
    return c;
}

void save_circuit(const Circuit& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw AssetError("cannot write circuit file: " + path);
    out << circuit_to_json(c);
}

Circuit load_circuit(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("cannot open circuit file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return circuit_from_text(buf.str());
}

} // namespace svac
