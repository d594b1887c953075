#include <doctest.h>

#include <limits>
#include <map>

#include "helpers.hpp"
#include "svac/circuits.hpp"
#include "svac/errors.hpp"

using namespace svac;

namespace {

HeadEffectMatrix fake_matrix(std::size_t layers, std::size_t heads) {
    HeadEffectMatrix m;
    m.signed_mean = Matrix(layers, heads);
    m.abs_mean = Matrix(layers, heads);
    return m;
}

// Evaluator whose accuracy is a fixed per-head gain, additive in circuit
// membership; unknown heads contribute nothing.
CircuitEvaluator additive(std::map<HeadId, double> gains, double base = 0.0) {
    return [gains = std::move(gains), base](const std::set<HeadId>& circuit) {
        EvalReport r;
        r.accuracy = base;
        for (const auto& h : circuit) {
            auto it = gains.find(h);
            if (it != gains.end()) r.accuracy += it->second;
        }
        r.count = 1;
        return r;
    };
}

} // namespace

TEST_CASE("rank_heads orders by absolute effect with stable ties") {
    HeadEffectMatrix m = fake_matrix(2, 3);
    m.abs_mean.at(0, 0) = 0.1f;
    m.abs_mean.at(0, 1) = 0.5f;
    m.abs_mean.at(0, 2) = 0.5f;
    m.abs_mean.at(1, 0) = 0.9f;
    m.abs_mean.at(1, 1) = 0.0f;
    m.abs_mean.at(1, 2) = 0.2f;
    const auto ranked = rank_heads(m);
    REQUIRE(ranked.size() == 6);
    CHECK(ranked[0] == HeadId{1, 0});
    CHECK(ranked[1] == HeadId{0, 1}); // tie broken by (layer, head)
    CHECK(ranked[2] == HeadId{0, 2});
    CHECK(ranked[3] == HeadId{1, 2});
    CHECK(ranked[4] == HeadId{0, 0});
    CHECK(ranked[5] == HeadId{1, 1});

    m.abs_mean.at(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(rank_heads(m), ValidationError);
}

TEST_CASE("greedy search keeps improving heads in rank order") {
    const std::vector<HeadId> ranked{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}};
    SearchConfig cfg;
    cfg.tolerance = 0.05;
    cfg.min_gain = 0.1;
    cfg.patience = 3;

    const auto evaluate = additive({{HeadId{0, 0}, 0.4},
                                    {HeadId{0, 1}, 0.05}, // below min_gain, rejected
                                    {HeadId{0, 2}, 0.3},
                                    {HeadId{0, 3}, 0.3}});
    const Circuit c = greedy_search(ranked, evaluate, 1.0, cfg);
    // 0.4 + 0.3 + 0.3 = 1.0 >= 1.0 - tolerance, so search stops before (0, 4)
    CHECK(c.heads == std::set<HeadId>{{0, 0}, {0, 2}, {0, 3}});
    REQUIRE(c.provenance.size() == 3);
    CHECK(c.provenance[0].head == HeadId{0, 0});
    CHECK(c.provenance[0].accuracy_after == doctest::Approx(0.4));
    CHECK(c.provenance[2].accuracy_after == doctest::Approx(1.0));
    for (std::size_t i = 1; i < c.provenance.size(); ++i)
        CHECK(c.provenance[i].accuracy_after >=
              c.provenance[i - 1].accuracy_after + cfg.min_gain);
}

TEST_CASE("greedy search stops on patience") {
    std::vector<HeadId> ranked;
    for (int h = 0; h < 10; ++h) ranked.push_back(HeadId{0, h});
    SearchConfig cfg;
    cfg.min_gain = 0.1;
    cfg.patience = 4;
    const Circuit c = greedy_search(ranked, additive({{HeadId{0, 0}, 0.2}}), 1.0, cfg);
    CHECK(c.heads == std::set<HeadId>{{0, 0}});
}

TEST_CASE("greedy search accepts a single sufficient head") {
    SearchConfig cfg;
    cfg.tolerance = 0.1;
    cfg.min_gain = 0.01;
    const Circuit c = greedy_search({HeadId{3, 3}}, additive({{HeadId{3, 3}, 0.95}}), 1.0, cfg);
    CHECK(c.heads == std::set<HeadId>{{3, 3}});
    REQUIRE(c.provenance.size() == 1);
}

TEST_CASE("greedy search returns empty when the start is already within tolerance") {
    SearchConfig cfg;
    cfg.tolerance = 0.5;
    const Circuit c = greedy_search({HeadId{0, 0}}, additive({{HeadId{0, 0}, 0.3}}, 0.6), 1.0,
                                    cfg);
    CHECK(c.heads.empty());
}

TEST_CASE("search config validation") {
    SearchConfig bad;
    bad.tolerance = 0.0;
    CHECK_THROWS_AS(greedy_search({}, additive({}), 1.0, bad), ValidationError);
    bad = SearchConfig{};
    bad.patience = 0;
    CHECK_THROWS_AS(greedy_search({}, additive({}), 1.0, bad), ValidationError);
    bad = SearchConfig{};
    bad.min_gain = -0.1;
    CHECK_THROWS_AS(greedy_search({}, additive({}), 1.0, bad), ValidationError);
}

TEST_CASE("expand_circuit returns a superset and keeps provenance history") {
    Circuit base;
    base.heads = {HeadId{0, 0}};
    base.provenance = {{HeadId{0, 0}, 0.4}};
    base.setting_label = "BASE";

    SearchConfig cfg;
    cfg.min_gain = 0.1;
    cfg.patience = 5;
    const std::vector<HeadId> ranked{{0, 0}, {1, 1}, {2, 2}};
    const Circuit out = expand_circuit(
        base, ranked, additive({{HeadId{0, 0}, 0.4}, {HeadId{1, 1}, 0.3}}), 1.0, cfg);
    CHECK(out.heads == std::set<HeadId>{{0, 0}, {1, 1}});
    REQUIRE(out.provenance.size() == 2);
    CHECK(out.provenance[0].head == HeadId{0, 0});
    CHECK(out.provenance[1].head == HeadId{1, 1});
    CHECK(out.setting_label == "BASE");
    for (const auto& h : base.heads) CHECK(out.heads.count(h) == 1);
}

TEST_CASE("compare_circuits") {
    Circuit a, b;
    a.heads = {HeadId{0, 0}, HeadId{1, 1}, HeadId{2, 2}};
    b.heads = {HeadId{1, 1}, HeadId{2, 2}, HeadId{3, 3}};
    const CircuitComparison cmp = compare_circuits(a, b);
    CHECK(cmp.shared == std::set<HeadId>{{1, 1}, {2, 2}});
    CHECK(cmp.only_a == std::set<HeadId>{{0, 0}});
    CHECK(cmp.only_b == std::set<HeadId>{{3, 3}});
    CHECK(cmp.jaccard == doctest::Approx(0.5));
    CHECK(compare_circuits({}, {}).jaccard == 1.0);
}

TEST_CASE("circuit files round-trip") {
    Circuit c;
    c.heads = {HeadId{11, 7}, HeadId{0, 4}};
    c.provenance = {{HeadId{11, 7}, 0.5}, {HeadId{0, 4}, 0.62}};
    c.setting_label = "BASE";
    c.search_config.eval_n = 25;
    const std::string path = "/tmp/svac_test_circuit.json";
    save_circuit(c, path);
    const Circuit back = load_circuit(path);
    CHECK(back.heads == c.heads);
    REQUIRE(back.provenance.size() == 2);
    CHECK(back.provenance[1].accuracy_after == doctest::Approx(0.62));
    CHECK(back.setting_label == "BASE");
    CHECK(back.search_config.eval_n == 25);
    CHECK(circuit_to_json(back) == circuit_to_json(c));
}

TEST_CASE("circuit pair-list parsing") {
    const Circuit c = circuit_from_text("(11, 6), (0, 4)\n(11,4) (2,1),");
    CHECK(c.heads == std::set<HeadId>{{11, 6}, {0, 4}, {11, 4}, {2, 1}});
    CHECK_THROWS_AS(circuit_from_text(""), AssetError);
    CHECK_THROWS_AS(circuit_from_text("(1, )"), AssetError);
    CHECK_THROWS_AS(circuit_from_text("nonsense"), AssetError);
    CHECK_THROWS_AS(load_circuit("/nonexistent.circuit"), AssetError);
}

TEST_CASE("reference circuit assets parse") {
    const Circuit base = load_circuit(svac::test::repo_path("assets/circuits/base.circuit"));
    CHECK(base.heads.size() == 12);
    CHECK(base.heads.count(HeadId{11, 7}) == 1);
    const Circuit complex_c =
        load_circuit(svac::test::repo_path("assets/circuits/complex.circuit"));
    CHECK(complex_c.heads.size() == 125);
    for (const auto& h : base.heads) CHECK(complex_c.heads.count(h) == 1);
}
