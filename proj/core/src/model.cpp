#include "svac/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "svac/errors.hpp"

namespace svac {
namespace {

void layernorm_row(const float* x, float* out, std::size_t d, const float* g,
                   const float* b, float eps) {
    float mean = 0.0f;
    for (std::size_t i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t i = 0; i < d; ++i) {
        const float c = x[i] - mean;
        var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * g[i] + b[i];
}

void layernorm(const Matrix& x, Matrix& out, const std::vector<float>& g,
               const std::vector<float>& b, float eps) {
    out = Matrix(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r)
        layernorm_row(x.row(r), out.row(r), x.cols, g.data(), b.data(), eps);
}

// GPT-2's tanh-approximated GELU.
float gelu(float x) {
    constexpr float k = 0.7978845608028654f; // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

void add_bias(Matrix& m, const std::vector<float>& b) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        float* row = m.row(r);
        for (std::size_t c = 0; c < m.cols; ++c) row[c] += b[c];
    }
}

struct ForwardScratch {
    Matrix xn, qkv, zcat, attn_out, h1, h2;
};

} // namespace

void ModelConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_head == 0 || vocab_size == 0 ||
        context_len == 0)
        throw ValidationError("model config: all counts must be positive");
    if (d_model != n_heads * d_head)
        throw ValidationError("model config: d_model must equal n_heads * d_head");
    if (!(ln_epsilon > 0.0f))
        throw ValidationError("model config: ln_epsilon must be positive");
}

ActivationCache::ActivationCache(const ModelConfig& cfg, std::size_t seq)
    : seq_(seq), n_heads_(cfg.n_heads) {
    head_z_.assign(cfg.n_layers * cfg.n_heads, Matrix(seq, cfg.d_head));
    patterns_.assign(cfg.n_layers * cfg.n_heads, Matrix(seq, seq));
    final_residual_ = Matrix(seq, cfg.d_model);
}

void PatchSet::add(HeadId head, Matrix values) {
    if (entries_.count(head))
        throw ValidationError("patch set: duplicate head (" + std::to_string(head.layer) +
                              "," + std::to_string(head.head) + ")");
    entries_[head] = Entry{std::move(values), false};
}

void PatchSet::add_final_row(HeadId head, Matrix values) {
    if (values.rows != 1)
        throw ValidationError("patch set: final-row patch must have exactly one row");
    if (entries_.count(head))
        throw ValidationError("patch set: duplicate head (" + std::to_string(head.layer) +
                              "," + std::to_string(head.head) + ")");
    entries_[head] = Entry{std::move(values), true};
}

int PatchSet::min_patched_layer() const {
    int lo = std::numeric_limits<int>::max();
    for (const auto& [head, entry] : entries_) lo = std::min(lo, head.layer);
    return lo;
}

namespace {

void validate_run(const Model& model, const TokenSequence& tokens, const PatchSet& patches) {
    const ModelConfig& cfg = model.config;
    if (tokens.empty()) throw ValidationError("forward: token sequence is empty");
    if (tokens.size() > cfg.context_len)
        throw ValidationError("forward: sequence length " + std::to_string(tokens.size()) +
                              " exceeds context length " + std::to_string(cfg.context_len));
    for (int id : tokens.ids)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw ValidationError("forward: token id out of range: " + std::to_string(id));
    for (const auto& [head, entry] : patches.entries()) {
        if (head.layer < 0 || static_cast<std::size_t>(head.layer) >= cfg.n_layers ||
            head.head < 0 || static_cast<std::size_t>(head.head) >= cfg.n_heads)
            throw ValidationError("forward: patched head out of range (" +
                                  std::to_string(head.layer) + "," + std::to_string(head.head) +
                                  ")");
        const std::size_t want_rows = entry.final_row_only ? 1 : tokens.size();
        if (entry.values.rows != want_rows || entry.values.cols != cfg.d_head)
            throw ValidationError(
                "forward: patch shape mismatch for head (" + std::to_string(head.layer) + "," +
                std::to_string(head.head) + "): got " + std::to_string(entry.values.rows) + "x" +
                std::to_string(entry.values.cols) + ", want " + std::to_string(want_rows) + "x" +
                std::to_string(cfg.d_head));
    }
}

void embed(const Model& model, const TokenSequence& tokens, Matrix& x) {
    const std::size_t d = model.config.d_model;
    x = Matrix(tokens.size(), d);
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        const float* te = model.wte.row(static_cast<std::size_t>(tokens.ids[p]));
        const float* pe = model.wpe.row(p);
        float* row = x.row(p);
        for (std::size_t i = 0; i < d; ++i) row[i] = te[i] + pe[i];
    }
}

void run_layer(const Model& model, std::size_t layer, Matrix& x, const PatchSet& patches,
               ActivationCache* cache, ForwardScratch& s) {
    const ModelConfig& cfg = model.config;
    const LayerWeights& w = model.layers[layer];
    const std::size_t seq = x.rows;
    const std::size_t d = cfg.d_model;
    const std::size_t dh = cfg.d_head;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    layernorm(x, s.xn, w.ln1_g, w.ln1_b, cfg.ln_epsilon);
    matmul(s.xn, w.attn_qkv_w, s.qkv);
    add_bias(s.qkv, w.attn_qkv_b);

    s.zcat = Matrix(seq, d);
    std::vector<float> scores(seq);
    Matrix z(seq, dh);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const std::size_t qo = h * dh;
        const std::size_t ko = d + h * dh;
        const std::size_t vo = 2 * d + h * dh;

        Matrix pattern(seq, seq); // zero above the diagonal by construction
        for (std::size_t i = 0; i < seq; ++i) {
            const float* qi = s.qkv.row(i) + qo;
            float max_s = -std::numeric_limits<float>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
                const float* kj = s.qkv.row(j) + ko;
                float dot = 0.0f;
                for (std::size_t t = 0; t < dh; ++t) dot += qi[t] * kj[t];
                scores[j] = dot * scale;
                max_s = std::max(max_s, scores[j]);
            }
            float sum = 0.0f;
            for (std::size_t j = 0; j <= i; ++j) {
                scores[j] = std::exp(scores[j] - max_s);
                sum += scores[j];
            }
            float* prow = pattern.row(i);
            for (std::size_t j = 0; j <= i; ++j) prow[j] = scores[j] / sum;
        }

        z = Matrix(seq, dh);
        for (std::size_t i = 0; i < seq; ++i) {
            float* zi = z.row(i);
            const float* prow = pattern.row(i);
            for (std::size_t j = 0; j <= i; ++j) {
                const float* vj = s.qkv.row(j) + vo;
                const float a = prow[j];
                for (std::size_t t = 0; t < dh; ++t) zi[t] += a * vj[t];
            }
        }

        const HeadId hid{static_cast<int>(layer), static_cast<int>(h)};
        auto it = patches.entries().find(hid);
        if (it != patches.entries().end()) {
            if (it->second.final_row_only) {
                std::memcpy(z.row(seq - 1), it->second.values.row(0), dh * sizeof(float));
            } else {
                z = it->second.values;
            }
        }

        if (cache) {
            cache->z(static_cast<int>(layer), static_cast<int>(h)) = z;
            cache->pattern(static_cast<int>(layer), static_cast<int>(h)) = std::move(pattern);
        }
        for (std::size_t i = 0; i < seq; ++i)
            std::memcpy(s.zcat.row(i) + h * dh, z.row(i), dh * sizeof(float));
    }

    matmul(s.zcat, w.attn_proj_w, s.attn_out);
    add_bias(s.attn_out, w.attn_proj_b);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += s.attn_out.data[i];

    layernorm(x, s.xn, w.ln2_g, w.ln2_b, cfg.ln_epsilon);
    matmul(s.xn, w.mlp_fc_w, s.h1);
    add_bias(s.h1, w.mlp_fc_b);
    for (float& v : s.h1.data) v = gelu(v);
    matmul(s.h1, w.mlp_proj_w, s.h2);
    add_bias(s.h2, w.mlp_proj_b);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += s.h2.data[i];
}

ForwardResult finish(const Model& model, Matrix& x, ActivationCache* cache,
                     const ForwardOptions& opts, std::optional<ActivationCache>&& cache_out) {
    const ModelConfig& cfg = model.config;
    if (cache) cache->final_residual() = x;

    std::vector<float> xf(cfg.d_model);
    layernorm_row(x.row(x.rows - 1), xf.data(), cfg.d_model, model.lnf_g.data(),
                  model.lnf_b.data(), cfg.ln_epsilon);

    ForwardResult res;
    if (opts.logit_ids) {
        res.logits.reserve(opts.logit_ids->size());
        for (int id : *opts.logit_ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
                throw ValidationError("forward: requested logit id out of range");
            const float* row = model.wte.row(static_cast<std::size_t>(id));
            float dot = 0.0f;
            for (std::size_t i = 0; i < cfg.d_model; ++i) dot += row[i] * xf[i];
            res.logits.push_back(dot);
        }
    } else {
        res.logits.resize(cfg.vocab_size);
        matmul(model.wte.data.data(), xf.data(), res.logits.data(), cfg.vocab_size,
               cfg.d_model, 1);
    }
    res.cache = std::move(cache_out);
    return res;
}

} // namespace

ForwardResult forward(const Model& model, const TokenSequence& tokens, const PatchSet& patches,
                      const ForwardOptions& opts) {
    validate_run(model, tokens, patches);
    std::optional<ActivationCache> cache;
    if (opts.capture) cache.emplace(model.config, tokens.size());

    Matrix x;
    embed(model, tokens, x);
    ForwardScratch s;
    for (std::size_t l = 0; l < model.config.n_layers; ++l)
        run_layer(model, l, x, patches, cache ? &*cache : nullptr, s);
    ActivationCache* cp = cache ? &*cache : nullptr;
    return finish(model, x, cp, opts, std::move(cache));
}

ForwardResult forward_with_snapshots(const Model& model, const TokenSequence& tokens,
                                     ResidualSnapshots& snapshots, const ForwardOptions& opts) {
    validate_run(model, tokens, {});
    std::optional<ActivationCache> cache;
    if (opts.capture) cache.emplace(model.config, tokens.size());

    snapshots.seq = tokens.size();
    snapshots.layer_entry.assign(model.config.n_layers, Matrix());

    Matrix x;
    embed(model, tokens, x);
    ForwardScratch s;
    for (std::size_t l = 0; l < model.config.n_layers; ++l) {
        snapshots.layer_entry[l] = x;
        run_layer(model, l, x, {}, cache ? &*cache : nullptr, s);
    }
    ActivationCache* cp = cache ? &*cache : nullptr;
    return finish(model, x, cp, opts, std::move(cache));
}

ForwardResult forward_resume(const Model& model, const TokenSequence& tokens,
                             const ResidualSnapshots& snapshots, const PatchSet& patches,
                             const ForwardOptions& opts) {
    validate_run(model, tokens, patches);
    if (snapshots.seq != tokens.size() ||
        snapshots.layer_entry.size() != model.config.n_layers)
        throw ValidationError("forward_resume: snapshots do not match this run");
    if (patches.empty() || opts.capture)
        return forward(model, tokens, patches, opts); // capture needs the full pass

    const std::size_t start = static_cast<std::size_t>(patches.min_patched_layer());
    Matrix x = snapshots.layer_entry[start];
    ForwardScratch s;
    for (std::size_t l = start; l < model.config.n_layers; ++l)
        run_layer(model, l, x, patches, nullptr, s);
    std::optional<ActivationCache> none;
    return finish(model, x, nullptr, opts, std::move(none));
}

namespace {

std::string canonical_name(std::string name) {
    constexpr const char* kPrefix = "transformer.";
    if (name.rfind(kPrefix, 0) == 0) name = name.substr(std::strlen(kPrefix));
    return name;
}

bool ignorable_tensor(const std::string& name) {
    // attention mask buffers serialized by some exporters
    return name.size() > 10 && (name.find(".attn.bias") != std::string::npos ||
                                name.find(".attn.masked_bias") != std::string::npos);
}

Matrix take_matrix(const std::map<std::string, TensorView>& tensors, const std::string& name,
                   std::size_t rows, std::size_t cols) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw AssetError("checkpoint is missing tensor '" + name + "'");
    const TensorView& v = it->second;
    if (v.shape.size() != 2 || v.shape[0] != rows || v.shape[1] != cols) {
        std::ostringstream os;
        os << "tensor '" << name << "' has unexpected shape [";
        for (std::size_t i = 0; i < v.shape.size(); ++i)
            os << (i ? "," : "") << v.shape[i];
        os << "], expected [" << rows << "," << cols << "]";
        throw AssetError(os.str());
    }
    Matrix m(rows, cols);
    std::memcpy(m.data.data(), v.data, v.size * sizeof(float));
    return m;
}

std::vector<float> take_vector(const std::map<std::string, TensorView>& tensors,
                               const std::string& name, std::size_t len) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw AssetError("checkpoint is missing tensor '" + name + "'");
    const TensorView& v = it->second;
    if (v.shape.size() != 1 || v.shape[0] != len)
        throw AssetError("tensor '" + name + "' has unexpected shape, expected [" +
                         std::to_string(len) + "]");
    std::vector<float> out(len);
    std::memcpy(out.data(), v.data, len * sizeof(float));
    return out;
}

} // namespace

Model assemble_model(const ModelConfig& config,
                     const std::map<std::string, TensorView>& raw,
                     std::map<std::string, std::string> metadata) {
    config.validate();

    std::map<std::string, TensorView> tensors;
    for (const auto& [name, view] : raw) {
        const std::string cname = canonical_name(name);
        if (ignorable_tensor(cname)) continue;
        if (cname == "lm_head.weight") continue; // tied to wte
        tensors[cname] = view;
    }

    Model m;
    m.config = config;
    m.checkpoint_metadata = std::move(metadata);
    const std::size_t d = config.d_model;

    std::map<std::string, TensorView> expected = tensors; // consumed below
    auto consume = [&expected](const std::string& name) { expected.erase(name); };

    m.wte = take_matrix(tensors, "wte.weight", config.vocab_size, d);
    consume("wte.weight");
    m.wpe = take_matrix(tensors, "wpe.weight", config.context_len, d);
    consume("wpe.weight");
    m.lnf_g = take_vector(tensors, "ln_f.weight", d);
    consume("ln_f.weight");
    m.lnf_b = take_vector(tensors, "ln_f.bias", d);
    consume("ln_f.bias");

    m.layers.resize(config.n_layers);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::string p = "h." + std::to_string(l) + ".";
        LayerWeights& w = m.layers[l];
        w.ln1_g = take_vector(tensors, p + "ln_1.weight", d);
        w.ln1_b = take_vector(tensors, p + "ln_1.bias", d);
        w.attn_qkv_w = take_matrix(tensors, p + "attn.c_attn.weight", d, 3 * d);
        w.attn_qkv_b = take_vector(tensors, p + "attn.c_attn.bias", 3 * d);
        w.attn_proj_w = take_matrix(tensors, p + "attn.c_proj.weight", d, d);
        w.attn_proj_b = take_vector(tensors, p + "attn.c_proj.bias", d);
        w.ln2_g = take_vector(tensors, p + "ln_2.weight", d);
        w.ln2_b = take_vector(tensors, p + "ln_2.bias", d);
        w.mlp_fc_w = take_matrix(tensors, p + "mlp.c_fc.weight", d, 4 * d);
        w.mlp_fc_b = take_vector(tensors, p + "mlp.c_fc.bias", 4 * d);
        w.mlp_proj_w = take_matrix(tensors, p + "mlp.c_proj.weight", 4 * d, d);
        w.mlp_proj_b = take_vector(tensors, p + "mlp.c_proj.bias", d);
        for (const char* suffix :
             {"ln_1.weight", "ln_1.bias", "attn.c_attn.weight", "attn.c_attn.bias",
              "attn.c_proj.weight", "attn.c_proj.bias", "ln_2.weight", "ln_2.bias",
              "mlp.c_fc.weight", "mlp.c_fc.bias", "mlp.c_proj.weight", "mlp.c_proj.bias"})
            consume(p + suffix);
    }

    if (!expected.empty())
        throw AssetError("checkpoint has unexpected tensor '" + expected.begin()->first + "'");
    return m;
}

ModelBundle load_model(const std::string& weights_path, const std::string& tokenizer_dir,
                       const ModelConfig& config) {
    SafeTensors st = SafeTensors::load(weights_path);
    std::map<std::string, TensorView> tensors;
    for (const auto& name : st.names()) tensors[name] = st.tensor(name);
    Model model = assemble_model(config, tensors, st.metadata());
    Tokenizer tokenizer = Tokenizer::load(tokenizer_dir);
    if (tokenizer.vocab_size() != config.vocab_size)
        throw AssetError("tokenizer vocab size " + std::to_string(tokenizer.vocab_size()) +
                         " does not match model vocab size " +
                         std::to_string(config.vocab_size));
    return ModelBundle{std::move(model), std::move(tokenizer)};
}

} // namespace svac
