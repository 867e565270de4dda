// SPDX-License-Identifier: Apache-2.0
#include "lliam/lora.hpp"

#include <algorithm>
#include <string>

#include "lliam/errors.hpp"
#include "lliam/ops.hpp"

namespace lliam {

void LoraConfig::validate(std::size_t out_features, std::size_t in_features) const {
    if (rank < 1) throw ConfigError("LoRA rank must be at least 1");
    const std::size_t limit = std::min(out_features, in_features);
    if (2 * rank >= limit)
        throw ConfigError("LoRA rank " + std::to_string(rank) + " must stay below min(d, k)/2 = " +
                          std::to_string(limit / 2));
    if (!(alpha > 0.0)) throw ConfigError("LoRA alpha must be positive");
    if (!(dropout >= 0.0) || dropout >= 1.0) throw ConfigError("LoRA dropout must lie in [0, 1)");
}

LoraAdapter lora_init(const Tensor& base_weight, const LoraConfig& config, CounterRng& rng) {
    if (!base_weight.defined() || base_weight.rank() != 2) throw ShapeError("lora_init: base weight must be a matrix");
    const std::size_t d = base_weight.dim(0);
    const std::size_t k = base_weight.dim(1);
    config.validate(d, k);
    const std::size_t r = config.rank;

    LoraAdapter adapter;
    adapter.base = base_weight;
    adapter.base.set_requires_grad(false);
    adapter.a = Tensor({r, k});
    const Real stddev = 1.0 / static_cast<Real>(r);
    for (auto& v : adapter.a.data()) v = rng.normal(0.0, stddev);
    adapter.b = Tensor::zeros({d, r});
    adapter.a.set_requires_grad(true);
    adapter.b.set_requires_grad(true);
    adapter.scale = config.scale();
    adapter.dropout = config.dropout;
    return adapter;
}

Tensor lora_forward(const Tensor& x, const LoraAdapter& adapter, bool training, std::uint64_t dropout_key) {
    if (x.cols() != adapter.base.dim(1))
        throw ShapeError("lora_forward: input width " + std::to_string(x.cols()) + " does not match base " +
                         shape_to_string(adapter.base.shape()));
    Tensor base_out = linear(x, adapter.base);
    Tensor path_in = dropout(x, adapter.dropout, dropout_key, training);
    Tensor low_rank = scale(linear(linear(path_in, adapter.a), adapter.b), adapter.scale);
    return add(base_out, low_rank);
}

Tensor lora_delta(const LoraAdapter& adapter) {
    const std::size_t d = adapter.b.dim(0);
    const std::size_t r = adapter.b.dim(1);
    const std::size_t k = adapter.a.dim(1);
    Tensor delta({d, k});
    auto out = delta.data();
    auto a = adapter.a.data();
    auto b = adapter.b.data();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t p = 0; p < r; ++p) {
            const Real bip = adapter.scale * b[i * r + p];
            if (bip == 0.0) continue;
            for (std::size_t j = 0; j < k; ++j) out[i * k + j] += bip * a[p * k + j];
        }
    return delta;
}

Tensor lora_merge(const LoraAdapter& adapter) {
    Tensor merged = adapter.base.clone();
    Tensor delta = lora_delta(adapter);
    auto m = merged.data();
    auto dv = delta.data();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += dv[i];
    return merged;
}

} // namespace lliam
