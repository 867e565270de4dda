// SPDX-License-Identifier: Apache-2.0
#include "lliam/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lliam/errors.hpp"

namespace lliam {

void ModelConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_ff == 0)
        throw ConfigError("model dimensions must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
    if (head_dim() % 2 != 0) throw ConfigError("head_dim must be even for rotary embeddings");
    if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
    if (max_context == 0) throw ConfigError("max_context must be positive");
    if (!(rope_base > 1.0)) throw ConfigError("rope_base must exceed 1");
    if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
}

ModelConfig ModelConfig::llama7b(std::size_t vocab_size) {
    ModelConfig c;
    c.n_layers = 32;
    c.n_heads = 32;
    c.d_model = 4096;
    c.d_ff = 11008;
    c.vocab_size = vocab_size;
    c.max_context = 2048;
    return c;
}

std::vector<Real> rope_angles(std::size_t head_dim, Real base) {
    if (head_dim == 0 || head_dim % 2 != 0) throw ConfigError("rope_angles: head_dim must be positive and even");
    std::vector<Real> thetas(head_dim / 2);
    for (std::size_t i = 0; i < thetas.size(); ++i)
        thetas[i] = std::pow(base, -2.0 * static_cast<Real>(i) / static_cast<Real>(head_dim));
    return thetas;
}

std::vector<Real> rope_angles(const ModelConfig& config) { return rope_angles(config.head_dim(), config.rope_base); }

KvCache::KvCache(const ModelConfig& config)
    : width_(config.d_model), max_context_(config.max_context), keys_(config.n_layers), values_(config.n_layers) {
    for (auto& k : keys_) k.reserve(max_context_ * width_);
    for (auto& v : values_) v.reserve(max_context_ * width_);
}

Tensor KvCache::keys(std::size_t layer) const {
    const auto& k = keys_.at(layer);
    return Tensor({k.size() / width_, width_}, k);
}

Tensor KvCache::values(std::size_t layer) const {
    const auto& v = values_.at(layer);
    return Tensor({v.size() / width_, width_}, v);
}

void KvCache::append(std::size_t layer, const Tensor& k, const Tensor& v) {
    if (k.cols() != width_ || v.cols() != width_ || k.rows() != v.rows())
        throw ShapeError("KvCache::append: key/value shape mismatch");
    auto& ks = keys_.at(layer);
    auto& vs = values_.at(layer);
    if (ks.size() / width_ + k.rows() > max_context_)
        throw ContextOverflow("KV cache would exceed max_context " + std::to_string(max_context_));
    ks.insert(ks.end(), k.data().begin(), k.data().end());
    vs.insert(vs.end(), v.data().begin(), v.data().end());
}

void KvCache::commit() {
    const std::size_t len = keys_.empty() ? 0 : keys_.front().size() / width_;
    for (std::size_t l = 0; l < keys_.size(); ++l)
        if (keys_[l].size() / width_ != len || values_[l].size() / width_ != len)
            throw std::logic_error("KvCache: layers out of step");
    length_ = len;
}

void KvCache::clear() {
    for (auto& k : keys_) k.clear();
    for (auto& v : values_) v.clear();
    length_ = 0;
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t causal_offset) {
    if (q.cols() != k.cols() || k.rows() != v.rows())
        throw ShapeError("attention: query/key/value shapes disagree");
    if (causal_offset + q.rows() > k.rows())
        throw ShapeError("attention: queries extend past the available keys");
    const Real inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Real>(q.cols()));
    Tensor weights = softmax_rows(linear(q, k), inv_sqrt_dk, causal_offset);
    return matmul(weights, v);
}

Model::Model(ModelConfig config, DecoderWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
    config_.validate();
    const auto d = config_.d_model;
    const auto f = config_.d_ff;
    const auto expect = [](const Tensor& t, const Shape& shape, const std::string& name) {
        if (!t.defined() || t.shape() != shape)
            throw ConfigError("weight " + name + " has shape " + (t.defined() ? shape_to_string(t.shape()) : "none") +
                              ", expected " + shape_to_string(shape));
    };
    expect(weights_.embedding, {config_.vocab_size, d}, "embedding");
    expect(weights_.output, {config_.vocab_size, d}, "output");
    expect(weights_.final_norm, {d}, "final_norm");
    if (weights_.layers.size() != config_.n_layers)
        throw ConfigError("expected " + std::to_string(config_.n_layers) + " decoder layers");
    for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
        const auto& L = weights_.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        expect(L.wq.weight, {d, d}, p + "wq");
        expect(L.wk.weight, {d, d}, p + "wk");
        expect(L.wv.weight, {d, d}, p + "wv");
        expect(L.wo.weight, {d, d}, p + "wo");
        expect(L.w_gate, {f, d}, p + "w_gate");
        expect(L.w_up, {f, d}, p + "w_up");
        expect(L.w_down, {d, f}, p + "w_down");
        expect(L.attn_norm, {d}, p + "attn_norm");
        expect(L.ffn_norm, {d}, p + "ffn_norm");
    }
    thetas_ = rope_angles(config_);
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    CounterRng rng(derive_key(seed, 0x1417));
    const auto gaussian = [&rng](Shape shape, Real stddev) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = rng.normal(0.0, stddev);
        return t;
    };
    const auto d = config.d_model;
    const auto f = config.d_ff;
    const Real std_base = 0.02;
    const Real std_out = 0.02 / std::sqrt(2.0 * static_cast<Real>(config.n_layers));

    DecoderWeights w;
    w.embedding = gaussian({config.vocab_size, d}, std_base);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        DecoderLayer L;
        L.wq.weight = gaussian({d, d}, std_base);
        L.wk.weight = gaussian({d, d}, std_base);
        L.wv.weight = gaussian({d, d}, std_base);
        L.wo.weight = gaussian({d, d}, std_out);
        L.w_gate = gaussian({f, d}, std_base);
        L.w_up = gaussian({f, d}, std_base);
        L.w_down = gaussian({d, f}, std_out);
        L.attn_norm = Tensor::ones({d});
        L.ffn_norm = Tensor::ones({d});
        w.layers.push_back(std::move(L));
    }
    w.final_norm = Tensor::ones({d});
    w.output = gaussian({config.vocab_size, d}, std_base);
    Model model(config, std::move(w));
    model.set_base_trainable(true);
    return model;
}

Tensor Model::project(const Projection& p, const Tensor& x, const ForwardOptions& options, std::uint64_t site) const {
    if (p.lora) return lora_forward(x, *p.lora, options.training, derive_key(options.dropout_key, site));
    return linear(x, p.weight);
}

Tensor Model::mha(std::size_t layer, const Tensor& x, std::span<const std::size_t> positions, KvCache* cache,
                  const ForwardOptions& options) const {
    const auto& L = weights_.layers.at(layer);
    const std::size_t heads = config_.n_heads;
    const std::size_t hd = config_.head_dim();
    const std::uint64_t site = layer * 8;

    Tensor q = project(L.wq, x, options, site + 0);
    Tensor k = project(L.wk, x, options, site + 1);
    Tensor v = project(L.wv, x, options, site + 2);
    if (config_.use_rope) {
        q = rope(q, positions, thetas_);
        k = rope(k, positions, thetas_);
    }

    std::size_t past = 0;
    Tensor k_all = k;
    Tensor v_all = v;
    if (cache) {
        past = cache->layer_length(layer);
        if (past > 0) {
            k_all = concat_rows(cache->keys(layer), k);
            v_all = concat_rows(cache->values(layer), v);
        }
        cache->append(layer, k, v);
    }

    std::vector<Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = heads == 1 ? q : slice_cols(q, h * hd, hd);
        Tensor kh = heads == 1 ? k_all : slice_cols(k_all, h * hd, hd);
        Tensor vh = heads == 1 ? v_all : slice_cols(v_all, h * hd, hd);
        outputs.push_back(scaled_dot_product_attention(qh, kh, vh, past));
    }
    Tensor merged = heads == 1 ? outputs.front() : concat_cols(outputs);
    return project(L.wo, merged, options, site + 3);
}

Tensor Model::forward(std::span<const TokenId> tokens, KvCache* cache, const ForwardOptions& options) const {
    if (tokens.empty()) throw ShapeError("forward: empty token sequence");
    const std::size_t past = cache ? cache->length() : 0;
    if (past + tokens.size() > config_.max_context)
        throw ContextOverflow("sequence of " + std::to_string(past + tokens.size()) +
                              " tokens exceeds max_context " + std::to_string(config_.max_context));
    std::vector<std::size_t> positions(tokens.size());
    std::iota(positions.begin(), positions.end(), past);

    Tensor x = embedding(weights_.embedding, tokens);
    for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
        const auto& L = weights_.layers[l];
        Tensor attn = mha(l, rmsnorm(x, L.attn_norm, config_.norm_eps), positions, cache, options);
        x = add(x, attn);
        Tensor ff = swiglu_ffn(rmsnorm(x, L.ffn_norm, config_.norm_eps), L.w_gate, L.w_up, L.w_down);
        x = add(x, ff);
    }
    if (cache) cache->commit();
    return linear(rmsnorm(x, weights_.final_norm, config_.norm_eps), weights_.output);
}

std::vector<NamedTensor> Model::base_tensors() const {
    std::vector<NamedTensor> out;
    out.emplace_back("embedding", weights_.embedding);
    for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
        const auto& L = weights_.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        out.emplace_back(p + "attn_norm", L.attn_norm);
        out.emplace_back(p + "wq", L.wq.weight);
        out.emplace_back(p + "wk", L.wk.weight);
        out.emplace_back(p + "wv", L.wv.weight);
        out.emplace_back(p + "wo", L.wo.weight);
        out.emplace_back(p + "ffn_norm", L.ffn_norm);
        out.emplace_back(p + "w_gate", L.w_gate);
        out.emplace_back(p + "w_up", L.w_up);
        out.emplace_back(p + "w_down", L.w_down);
    }
    out.emplace_back("final_norm", weights_.final_norm);
    out.emplace_back("output", weights_.output);
    return out;
}

std::vector<NamedTensor> Model::adapter_tensors() const {
    std::vector<NamedTensor> out;
    for (std::size_t l = 0; l < weights_.layers.size(); ++l) {
        const auto& L = weights_.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        const std::pair<const char*, const Projection*> projections[] = {
            {"wq", &L.wq}, {"wk", &L.wk}, {"wv", &L.wv}, {"wo", &L.wo}};
        for (const auto& [name, proj] : projections) {
            if (!proj->lora) continue;
            out.emplace_back(p + name + ".lora_a", proj->lora->a);
            out.emplace_back(p + name + ".lora_b", proj->lora->b);
        }
    }
    return out;
}

std::vector<Tensor> Model::base_parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : base_tensors()) out.push_back(t);
    return out;
}

std::vector<Tensor> Model::adapter_parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : adapter_tensors()) out.push_back(t);
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : base_tensors()) n += t.numel();
    return n;
}

std::size_t Model::adapter_count() const { return adapter_tensors().size() / 2; }

void Model::set_base_trainable(bool on) {
    for (auto& [name, t] : base_tensors()) {
        Tensor handle = t;
        handle.set_requires_grad(on);
    }
}

Model Model::clone() const {
    DecoderWeights w;
    const auto copy_proj = [](const Projection& p) {
        Projection out;
        out.weight = p.weight.clone();
        out.weight.set_requires_grad(p.weight.requires_grad());
        if (p.lora) {
            LoraAdapter a = *p.lora;
            a.base = out.weight;
            a.a = p.lora->a.clone();
            a.b = p.lora->b.clone();
            a.a.set_requires_grad(p.lora->a.requires_grad());
            a.b.set_requires_grad(p.lora->b.requires_grad());
            out.lora = std::move(a);
        }
        return out;
    };
    const auto copy = [](const Tensor& t) {
        Tensor c = t.clone();
        c.set_requires_grad(t.requires_grad());
        return c;
    };
    w.embedding = copy(weights_.embedding);
    for (const auto& L : weights_.layers) {
        DecoderLayer c;
        c.wq = copy_proj(L.wq);
        c.wk = copy_proj(L.wk);
        c.wv = copy_proj(L.wv);
        c.wo = copy_proj(L.wo);
        c.w_gate = copy(L.w_gate);
        c.w_up = copy(L.w_up);
        c.w_down = copy(L.w_down);
        c.attn_norm = copy(L.attn_norm);
        c.ffn_norm = copy(L.ffn_norm);
        w.layers.push_back(std::move(c));
    }
    w.final_norm = copy(weights_.final_norm);
    w.output = copy(weights_.output);
    return Model(config_, std::move(w));
}

std::vector<Real> temperature_softmax(std::span<const Real> logits, Real temperature) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (logits.empty()) throw ShapeError("temperature_softmax: empty logits");
    const Real mx = *std::max_element(logits.begin(), logits.end()) / temperature;
    std::vector<Real> p(logits.size());
    Real total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] / temperature - mx);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return p;
}

TokenId select_token(std::span<const Real> logits, const GenerationConfig& config, CounterRng& rng) {
    if (config.greedy)
        return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    const auto probs = temperature_softmax(logits, config.temperature);
    const Real u = rng.uniform();
    Real acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<TokenId>(i);
    }
    return static_cast<TokenId>(probs.size() - 1);
}

GenerationResult generate(const Model& model, std::span<const TokenId> prompt, const GenerationConfig& config,
                          bool record_logits) {
    if (prompt.empty()) throw ShapeError("generate: empty prompt");
    if (!config.greedy && !(config.temperature > 0.0)) throw ConfigError("generate: temperature must be positive");
    const std::size_t vocab = model.config().vocab_size;
    const std::size_t room = model.config().max_context > prompt.size() ? model.config().max_context - prompt.size() : 0;
    if (room == 0) throw ContextOverflow("generate: prompt fills the context window");
    const std::size_t budget = std::min(config.max_new_tokens, room);

    GenerationResult result;
    CounterRng rng(derive_key(config.seed, 0x6e6));
    TokenSequence sequence(prompt.begin(), prompt.end());
    std::optional<KvCache> cache;
    if (config.use_cache) cache.emplace(model.config());

    Tensor logits = model.forward(sequence, cache ? &*cache : nullptr);
    for (std::size_t step = 0; step < budget; ++step) {
        std::span<const Real> last = logits.data().subspan((logits.rows() - 1) * vocab, vocab);
        if (record_logits) result.step_logits.emplace_back(last.begin(), last.end());
        const TokenId next = select_token(last, config, rng);
        if (config.stop_on_eos && next == Vocabulary::kEos) {
            result.stopped_on_eos = true;
            break;
        }
        result.tokens.push_back(next);
        sequence.push_back(next);
        if (step + 1 == budget) break;
        if (cache) {
            const TokenId single[1] = {next};
            logits = model.forward(single, &*cache);
        } else {
            logits = model.forward(sequence, nullptr);
        }
    }
    return result;
}

} // namespace lliam
