// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of the reverse-mode gradients.
//
// A non-scalar output y is reduced to L = sum(y * R) with a fixed random R,
// so every output element carries weight. For each checked input entry:
//
//   numeric  = (L(x + eps) - L(x - eps)) / (2 eps)
//   rel_err  = |analytic - numeric| / max(floor, |analytic|, |numeric|)

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lliam/tensor.hpp"

namespace lliam {

struct GradcheckOptions {
    double step = 1e-5;
    double tolerance = 1e-3;
    double floor = 1e-6;
    std::size_t max_entries = 48; // per input tensor; a seeded subset beyond that
    std::uint64_t seed = 0x9c;
};

struct GradcheckResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    bool passed = false;
    double seconds = 0.0;
};

using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Marks every input as requiring a gradient.
GradcheckResult check_gradients(const std::string& name, const GradFn& fn, std::vector<Tensor> inputs,
                                const GradcheckOptions& options = {});

// Every differentiable op plus a full single-layer decoder.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options = {});

} // namespace lliam
