// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer:
//
//   embed -> [RMSNorm -> MHA(RoPE, KV cache) -> +residual
//             -> RMSNorm -> SwiGLU FFN -> +residual] x n_layers
//         -> RMSNorm -> linear -> logits

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lliam/lora.hpp"
#include "lliam/ops.hpp"
#include "lliam/rng.hpp"
#include "lliam/tensor.hpp"
#include "lliam/tokenizer.hpp"

namespace lliam {

struct ModelConfig {
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_model = 128;
    std::size_t d_ff = 384;
    std::size_t vocab_size = 0;
    std::size_t max_context = 384;
    Real rope_base = 10000.0;
    Real norm_eps = 1e-5;
    // Ablation switch for position-sensitivity probes; always on in real runs.
    bool use_rope = true;

    std::size_t head_dim() const { return d_model / n_heads; }
    void validate() const;

    // 32 layers, 32 heads, d_model 4096, d_ff 11008, 2048 context.
    static ModelConfig llama7b(std::size_t vocab_size);

    bool operator==(const ModelConfig&) const = default;
};

// theta_i = base^(-2(i-1)/head_dim), i = 1..head_dim/2.
std::vector<Real> rope_angles(const ModelConfig& config);
std::vector<Real> rope_angles(std::size_t head_dim, Real base);

// A projection weight [out x in], optionally wrapped by a LoRA adapter.
struct Projection {
    Tensor weight;
    std::optional<LoraAdapter> lora;
};

struct DecoderLayer {
    Projection wq, wk, wv, wo;
    Tensor w_gate; // [d_ff x d_model]
    Tensor w_up;   // [d_ff x d_model]
    Tensor w_down; // [d_model x d_ff]
    Tensor attn_norm;
    Tensor ffn_norm;
};

struct DecoderWeights {
    Tensor embedding; // [vocab x d_model]
    std::vector<DecoderLayer> layers;
    Tensor final_norm;
    Tensor output; // [vocab x d_model]
};

using NamedTensor = std::pair<std::string, Tensor>;

// Per-layer cached keys (after RoPE) and values for positions 0..length-1.
// Rows are only ever appended.
class KvCache {
public:
    explicit KvCache(const ModelConfig& config);

    std::size_t length() const noexcept { return length_; }
    std::size_t capacity() const noexcept { return max_context_; }
    std::size_t layers() const noexcept { return keys_.size(); }
    std::size_t layer_length(std::size_t layer) const { return keys_.at(layer).size() / width_; }

    // Copies of the cached rows as [len x d_model] tensors.
    Tensor keys(std::size_t layer) const;
    Tensor values(std::size_t layer) const;

    void append(std::size_t layer, const Tensor& k, const Tensor& v);
    // Closes a forward step; every layer must have grown by the same amount.
    void commit();
    void clear();

private:
    std::size_t width_;
    std::size_t max_context_;
    std::size_t length_ = 0;
    std::vector<std::vector<Real>> keys_;
    std::vector<std::vector<Real>> values_;
};

struct ForwardOptions {
    bool training = false;
    std::uint64_t dropout_key = 0;
};

// softmax(q k^T / sqrt(d_k)) v for one head. Query row i sits at absolute
// position causal_offset + i and attends to key rows 0..causal_offset + i.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t causal_offset);

class Model {
public:
    Model(ModelConfig config, DecoderWeights weights);

    // Scaled Gaussian initialisation: std 0.02, output projections (W_O and
    // the FFN down projection) std 0.02 / sqrt(2 n_layers), unit norm gains.
    static Model init(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    const DecoderWeights& weights() const noexcept { return weights_; }
    DecoderWeights& weights() noexcept { return weights_; }
    const std::vector<Real>& thetas() const noexcept { return thetas_; }

    // Logits [tokens x vocab] for positions cache->length() onwards.
    Tensor forward(std::span<const TokenId> tokens, KvCache* cache = nullptr, const ForwardOptions& options = {}) const;

    // Multi-head attention of one layer on its normalised input.
    Tensor mha(std::size_t layer, const Tensor& x, std::span<const std::size_t> positions, KvCache* cache,
               const ForwardOptions& options) const;

    // Base weights in canonical order ("layers.0.wq", ...), excluding adapters.
    std::vector<NamedTensor> base_tensors() const;
    // Adapter tensors ("layers.0.wq.lora_a", ...).
    std::vector<NamedTensor> adapter_tensors() const;
    std::vector<Tensor> base_parameters() const;
    std::vector<Tensor> adapter_parameters() const;
    std::size_t parameter_count() const;
    std::size_t adapter_count() const;

    void set_base_trainable(bool on);
    Model clone() const;

private:
    Tensor project(const Projection& p, const Tensor& x, const ForwardOptions& options, std::uint64_t site) const;

    ModelConfig config_;
    DecoderWeights weights_;
    std::vector<Real> thetas_;
};

struct GenerationConfig {
    Real temperature = 1.0;
    std::size_t max_new_tokens = 64;
    bool greedy = true;
    bool stop_on_eos = true;
    bool use_cache = true;
    std::uint64_t seed = 0;
};

struct GenerationResult {
    TokenSequence tokens; // generated continuation only
    bool stopped_on_eos = false;
    std::vector<std::vector<Real>> step_logits; // filled when requested
};

// softmax(logits / T).
std::vector<Real> temperature_softmax(std::span<const Real> logits, Real temperature);

TokenId select_token(std::span<const Real> logits, const GenerationConfig& config, CounterRng& rng);

// Autoregressive decoding: prefill the prompt, then one token per step until
// EOS or max_new_tokens. Without the cache every step recomputes the full
// sequence.
GenerationResult generate(const Model& model, std::span<const TokenId> prompt, const GenerationConfig& config,
                          bool record_logits = false);

} // namespace lliam
