// SPDX-License-Identifier: Apache-2.0
//
// Low-rank adapters: W = W_model + (alpha / r) * B * A with W_model frozen,
// B zero-initialised so the adapted projection starts identical to the base.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lliam/rng.hpp"
#include "lliam/tensor.hpp"

namespace lliam {

struct LoraConfig {
    std::size_t rank = 8;
    Real alpha = 16.0;
    Real dropout = 0.05;
    std::vector<std::string> targets{"query", "value"};

    Real scale() const { return alpha / static_cast<Real>(rank); }
    // Throws ConfigError unless 1 <= rank < min(out, in) / 2 and the dropout
    // probability lies in [0, 1).
    void validate(std::size_t out_features, std::size_t in_features) const;
};

struct LoraAdapter {
    Tensor a;    // [r x k], trainable
    Tensor b;    // [d x r], trainable, starts at zero
    Tensor base; // [d x k], frozen
    Real scale = 0.0;
    Real dropout = 0.0;

    std::size_t rank() const { return a.dim(0); }
    std::size_t trainable_count() const { return a.numel() + b.numel(); }
};

// A ~ N(0, (1/r)^2), B = 0. Only A and B require gradients.
LoraAdapter lora_init(const Tensor& base_weight, const LoraConfig& config, CounterRng& rng);

// x W_model^T + scale * dropout(x) A^T B^T. Dropout only when training.
Tensor lora_forward(const Tensor& x, const LoraAdapter& adapter, bool training, std::uint64_t dropout_key);

// scale * B * A as a plain tensor.
Tensor lora_delta(const LoraAdapter& adapter);

// W_model + scale * B * A as a plain (untracked) weight.
Tensor lora_merge(const LoraAdapter& adapter);

} // namespace lliam
