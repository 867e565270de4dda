// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "lliam/tensor.hpp"

namespace lliam {

struct AdamWOptions {
    Real lr = 3e-4;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps = 1e-8;
    Real weight_decay = 0.01;
};

// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWOptions options);

    // One update from the accumulated gradients. Gradients are left as they
    // are; call zero_grad() before the next accumulation window.
    void step();
    void zero_grad();

    std::size_t steps() const noexcept { return steps_; }
    void set_lr(Real lr) noexcept { options_.lr = lr; }
    const AdamWOptions& options() const noexcept { return options_; }
    const std::vector<Tensor>& params() const noexcept { return params_; }
    const std::vector<Real>& first_moment(std::size_t i) const { return m_.at(i); }
    const std::vector<Real>& second_moment(std::size_t i) const { return v_.at(i); }

private:
    std::vector<Tensor> params_;
    AdamWOptions options_;
    std::vector<std::vector<Real>> m_;
    std::vector<std::vector<Real>> v_;
    std::size_t steps_ = 0;
};

} // namespace lliam
