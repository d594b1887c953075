#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svac/matrix.hpp"
#include "svac/safetensors.hpp"
#include "svac/tokenizer.hpp"

namespace svac {

struct ModelConfig {
    std::size_t n_layers = 12;
    std::size_t n_heads = 12;
    std::size_t d_model = 768;
    std::size_t d_head = 64;
    std::size_t vocab_size = 50257;
    std::size_t context_len = 1024;
    float ln_epsilon = 1e-5f;

    static ModelConfig gpt2_small() { return ModelConfig{}; }
    void validate() const; // throws ValidationError
};

struct HeadId {
    int layer = 0;
    int head = 0;
    auto operator<=>(const HeadId&) const = default;
};

struct LayerWeights {
    std::vector<float> ln1_g, ln1_b;
    Matrix attn_qkv_w; // (d_model, 3*d_model), input-major as stored
    std::vector<float> attn_qkv_b;
    Matrix attn_proj_w; // (d_model, d_model)
    std::vector<float> attn_proj_b;
    std::vector<float> ln2_g, ln2_b;
    Matrix mlp_fc_w; // (d_model, 4*d_model)
    std::vector<float> mlp_fc_b;
    Matrix mlp_proj_w; // (4*d_model, d_model)
    std::vector<float> mlp_proj_b;
};

// Immutable after construction; shareable across concurrent forward passes.
struct Model {
    ModelConfig config;
    Matrix wte; // (vocab_size, d_model); unembedding is tied to this
    Matrix wpe; // (context_len, d_model)
    std::vector<LayerWeights> layers;
    std::vector<float> lnf_g, lnf_b;
    std::map<std::string, std::string> checkpoint_metadata;
};

// Per-head attention result z for one run: (seq, d_head).
struct HeadActivation {
    HeadId head;
    Matrix values;
};

class ActivationCache {
  public:
    ActivationCache() = default;
    ActivationCache(const ModelConfig& cfg, std::size_t seq);

    std::size_t seq_len() const { return seq_; }
    Matrix& z(int layer, int head) { return head_z_[index(layer, head)]; }
    const Matrix& z(int layer, int head) const { return head_z_[index(layer, head)]; }
    Matrix& pattern(int layer, int head) { return patterns_[index(layer, head)]; }
    const Matrix& pattern(int layer, int head) const { return patterns_[index(layer, head)]; }
    Matrix& final_residual() { return final_residual_; }
    const Matrix& final_residual() const { return final_residual_; }

  private:
    std::size_t index(int layer, int head) const {
        return static_cast<std::size_t>(layer) * n_heads_ + static_cast<std::size_t>(head);
    }
    std::size_t seq_ = 0;
    std::size_t n_heads_ = 0;
    std::vector<Matrix> head_z_;
    std::vector<Matrix> patterns_;
    Matrix final_residual_;
};

// Replacement activations applied during a forward pass. A full entry swaps
// the whole (seq, d_head) block; a final-row entry swaps only the last
// position, which is how counterfactual patches of a different sequence
// length are aligned.
class PatchSet {
  public:
    struct Entry {
        Matrix values;
        bool final_row_only = false;
    };

    void add(HeadId head, Matrix values);           // throws on duplicate head
    void add_final_row(HeadId head, Matrix values); // values must be (1, d_head)
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::map<HeadId, Entry>& entries() const { return entries_; }
    int min_patched_layer() const; // n_layers stand-in when empty

  private:
    std::map<HeadId, Entry> entries_;
};

struct ForwardOptions {
    bool capture = false;
    // When set, only these logits are computed (in order); otherwise the full
    // final-position logit vector is returned.
    const std::vector<int>* logit_ids = nullptr;
};

struct ForwardResult {
    std::vector<float> logits;
    std::optional<ActivationCache> cache;
};

// Residual-stream values at the entry of each layer for one unpatched run.
// Lets a single-head patch at layer L restart from L instead of layer 0.
struct ResidualSnapshots {
    std::size_t seq = 0;
    std::vector<Matrix> layer_entry; // n_layers matrices of (seq, d_model)
};

ForwardResult forward(const Model& model, const TokenSequence& tokens,
                      const PatchSet& patches = {}, const ForwardOptions& opts = {});

// Unpatched forward that also records per-layer entry snapshots.
ForwardResult forward_with_snapshots(const Model& model, const TokenSequence& tokens,
                                     ResidualSnapshots& snapshots,
                                     const ForwardOptions& opts = {});

// Re-runs from the first patched layer using snapshots taken on the same
// tokens. Bit-identical to forward(model, tokens, patches, opts).
ForwardResult forward_resume(const Model& model, const TokenSequence& tokens,
                             const ResidualSnapshots& snapshots, const PatchSet& patches,
                             const ForwardOptions& opts = {});

// Assembles a model from named tensors (checkpoint convention: GPT-2 names,
// optional "transformer." prefix, tied lm_head). Throws AssetError naming the
// offending tensor on missing/extra names or shape mismatches.
Model assemble_model(const ModelConfig& config,
                     const std::map<std::string, TensorView>& tensors,
                     std::map<std::string, std::string> metadata = {});

struct ModelBundle {
    Model model;
    Tokenizer tokenizer;
};

ModelBundle load_model(const std::string& weights_path, const std::string& tokenizer_dir,
                       const ModelConfig& config = ModelConfig::gpt2_small());

} // namespace svac
