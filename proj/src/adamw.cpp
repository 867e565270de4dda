// SPDX-License-Identifier: Apache-2.0
#include "lliam/adamw.hpp"

#include <cmath>
#include <string>

#include "lliam/errors.hpp"

namespace lliam {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
    if (options_.lr < 0.0 || options_.eps <= 0.0 || options_.weight_decay < 0.0 || options_.beta1 < 0.0 ||
        options_.beta1 >= 1.0 || options_.beta2 < 0.0 || options_.beta2 >= 1.0)
        throw ConfigError("AdamW: invalid hyperparameters");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::step() {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (!params_[i].has_grad())
            throw NumericError("AdamW: parameter " + std::to_string(i) + " has no gradient");
    ++steps_;
    const Real t = static_cast<Real>(steps_);
    const Real bc1 = 1.0 - std::pow(options_.beta1, t);
    const Real bc2 = 1.0 - std::pow(options_.beta2, t);
    const Real lr = options_.lr;
    const Real decay = 1.0 - lr * options_.weight_decay;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i].data();
        auto g = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
            v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
            const Real m_hat = m[j] / bc1;
            const Real v_hat = v[j] / bc2;
            w[j] = w[j] * decay - lr * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace lliam
