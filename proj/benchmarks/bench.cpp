#include <filesystem>
#include <string>

#include <benchmark/benchmark.h>

#include "svac/model.hpp"
#include "svac/patching.hpp"
#include "svac/rng.hpp"
#include "svac/tokenizer.hpp"

namespace {

std::string repo_path(const std::string& rel) {
    return std::string(SVAC_REPO_ROOT) + "/" + rel;
}

const svac::Tokenizer& tokenizer() {
    static svac::Tokenizer tok = svac::Tokenizer::load(repo_path("assets/tokenizer"));
    return tok;
}

// Random weights at real GPT-2 Small shape; timing does not depend on values.
const svac::Model& model() {
    static svac::Model m = [] {
        svac::ModelConfig cfg;
        svac::Rng rng(1);
        svac::Model model;
        model.config = cfg;
        auto fill = [&](auto& dst) {
            for (float& x : dst) x = 0.02f * static_cast<float>(2.0 * rng.unit() - 1.0);
        };
        model.wte = svac::Matrix(cfg.vocab_size, cfg.d_model);
        fill(model.wte.data);
        model.wpe = svac::Matrix(cfg.context_len, cfg.d_model);
        fill(model.wpe.data);
        model.layers.resize(cfg.n_layers);
        for (auto& l : model.layers) {
            l.ln1_g.assign(cfg.d_model, 1.0f);
            l.ln1_b.assign(cfg.d_model, 0.0f);
            l.attn_qkv_w = svac::Matrix(cfg.d_model, 3 * cfg.d_model);
            fill(l.attn_qkv_w.data);
            l.attn_qkv_b.assign(3 * cfg.d_model, 0.0f);
            l.attn_proj_w = svac::Matrix(cfg.d_model, cfg.d_model);
            fill(l.attn_proj_w.data);
            l.attn_proj_b.assign(cfg.d_model, 0.0f);
            l.ln2_g.assign(cfg.d_model, 1.0f);
            l.ln2_b.assign(cfg.d_model, 0.0f);
            l.mlp_fc_w = svac::Matrix(cfg.d_model, 4 * cfg.d_model);
            fill(l.mlp_fc_w.data);
            l.mlp_fc_b.assign(4 * cfg.d_model, 0.0f);
            l.mlp_proj_w = svac::Matrix(4 * cfg.d_model, cfg.d_model);
            fill(l.mlp_proj_w.data);
            l.mlp_proj_b.assign(cfg.d_model, 0.0f);
        }
        model.lnf_g.assign(cfg.d_model, 1.0f);
        model.lnf_b.assign(cfg.d_model, 0.0f);
        return model;
    }();
    return m;
}

void BM_TokenizerEncode(benchmark::State& state) {
    const std::string text = "Usually, Alice and Bob do not walk to the market together";
    for (auto _ : state) benchmark::DoNotOptimize(tokenizer().encode(text));
}
BENCHMARK(BM_TokenizerEncode);

void BM_ForwardFullLogits(benchmark::State& state) {
    const svac::TokenSequence tokens = tokenizer().encode("Usually, Alice and Bob do not");
    for (auto _ : state) benchmark::DoNotOptimize(svac::forward(model(), tokens));
}
BENCHMARK(BM_ForwardFullLogits);

void BM_ForwardRestrictedLogits(benchmark::State& state) {
    const svac::TokenSequence tokens = tokenizer().encode("Usually, Alice and Bob do not");
    const std::vector<int> ids{11114, 2513};
    svac::ForwardOptions opts;
    opts.logit_ids = &ids;
    for (auto _ : state)
        benchmark::DoNotOptimize(svac::forward(model(), tokens, {}, opts));
}
BENCHMARK(BM_ForwardRestrictedLogits);

void BM_ForwardResumeLateLayer(benchmark::State& state) {
    const svac::TokenSequence tokens = tokenizer().encode("Usually, Alice and Bob do not");
    const std::vector<int> ids{11114, 2513};
    svac::ForwardOptions opts;
    opts.logit_ids = &ids;
    svac::ResidualSnapshots snaps;
    svac::forward_with_snapshots(model(), tokens, snaps, opts);
    svac::ForwardOptions capture;
    capture.capture = true;
    const svac::ForwardResult cached = svac::forward(model(), tokens, {}, capture);
    svac::PatchSet patches;
    patches.add(svac::HeadId{11, 7}, cached.cache->z(11, 7));
    for (auto _ : state)
        benchmark::DoNotOptimize(svac::forward_resume(model(), tokens, snaps, patches, opts));
}
BENCHMARK(BM_ForwardResumeLateLayer);

void BM_ForwardWithCapture(benchmark::State& state) {
    const svac::TokenSequence tokens = tokenizer().encode("Usually, Alice and Bob do not");
    svac::ForwardOptions opts;
    opts.capture = true;
    for (auto _ : state)
        benchmark::DoNotOptimize(svac::forward(model(), tokens, {}, opts));
}
BENCHMARK(BM_ForwardWithCapture);

} // namespace

int main(int argc, char** argv) {
    svac::pin_blas_single_thread();
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    return 0;
}
