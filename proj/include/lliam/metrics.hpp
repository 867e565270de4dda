// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lliam/data.hpp"

namespace lliam {

// sqrt(mean((y - yhat)^2)). Throws ShapeError on length mismatch or empty input.
double rmse(std::span<const double> y, std::span<const double> yhat);

// (2/n) sum |y - yhat| / (|y| + |yhat|); terms with a zero denominator add 0.
double smape(std::span<const double> y, std::span<const double> yhat);

// 100 (n_test - n_decoded) / n_test. Throws ConfigError when n_test == 0 or
// n_decoded > n_test.
double missing_rate(std::size_t n_test, std::size_t n_decoded);

// The last lag repeated h times.
std::vector<double> persistence_baseline(const WindowPair& w);

} // namespace lliam
