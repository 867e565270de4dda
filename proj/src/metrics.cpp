// SPDX-License-Identifier: Apache-2.0
#include "lliam/metrics.hpp"

#include <cmath>
#include <string>

#include "lliam/errors.hpp"

namespace lliam {

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
    if (y.size() != yhat.size())
        throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " vs " +
                         std::to_string(yhat.size()) + ")");
    if (y.empty()) throw ShapeError(std::string(what) + ": empty input");
}

} // namespace

double rmse(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat, "rmse");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - yhat[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(y.size()));
}

double smape(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat, "smape");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double denom = std::abs(y[i]) + std::abs(yhat[i]);
        if (denom == 0.0) continue;
        sum += std::abs(y[i] - yhat[i]) / denom;
    }
    return 2.0 * sum / static_cast<double>(y.size());
}

double missing_rate(std::size_t n_test, std::size_t n_decoded) {
    if (n_test == 0) throw ConfigError("missing rate is undefined for an empty test set");
    if (n_decoded > n_test) throw ConfigError("more decoded instances than test instances");
    return 100.0 * static_cast<double>(n_test - n_decoded) / static_cast<double>(n_test);
}

std::vector<double> persistence_baseline(const WindowPair& w) {
    if (w.x.empty()) throw ShapeError("persistence baseline needs at least one lag");
    return std::vector<double>(w.y.size(), w.x.back());
}

} // namespace lliam
