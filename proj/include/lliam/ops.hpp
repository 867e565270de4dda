// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every function here records a backward
// closure on the active Tape when an operand requires a gradient.
//
// Weight convention: projection weights are stored [out x in] and applied
// with linear(x, w) = x * w^T, so a LoRA pair (B: d x r, A: r x k) composes
// directly with a base weight of shape d x k.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lliam/tensor.hpp"

namespace lliam {

using TokenId = std::int32_t;

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x in] * [out x in]^T -> [m x out]
Tensor linear(const Tensor& x, const Tensor& w);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor sum(const Tensor& x);

Tensor silu(const Tensor& x);

// Row-wise softmax of scale * x. With causal_offset = c, row i only sees
// columns j <= i + c; masked entries are exactly zero.
Tensor softmax_rows(const Tensor& x, Real scale, std::optional<std::size_t> causal_offset = std::nullopt);

// y = gain * x / sqrt(mean(x^2) + eps), per row.
Tensor rmsnorm(const Tensor& x, const Tensor& gain, Real eps);

// w_down applied to silu(x w_gate^T) * (x w_up^T).
// w_gate, w_up: [d_ff x d]; w_down: [d x d_ff].
Tensor swiglu_ffn(const Tensor& x, const Tensor& w_gate, const Tensor& w_up, const Tensor& w_down);

// Gather rows of `table` ([vocab x d]) for each id.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

// Rotates consecutive column pairs (2j, 2j+1) of every head_dim-wide chunk by
// positions[row] * thetas[j].
Tensor rope(const Tensor& x, std::span<const std::size_t> positions, std::span<const Real> thetas);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const Tensor& top, const Tensor& bottom);

enum class Reduction { mean, sum };

// Negative log-likelihood of targets under softmax(logits). Positions with
// ignore[t] == true contribute nothing. Mean reduction over zero counted
// positions throws NumericError.
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets, const std::vector<bool>& ignore,
                     Reduction reduction = Reduction::mean);

// Inverted dropout. Element i is dropped iff draw i of stream `key` < p.
// Identity when !training or p == 0.
Tensor dropout(const Tensor& x, Real p, std::uint64_t key, bool training);

// Global L2 norm of the gradients of `params`; rescales them in place when it
// exceeds max_norm. Returns the norm before clipping.
Real clip_grad_norm(std::span<Tensor> params, Real max_norm);

} // namespace lliam
