// SPDX-License-Identifier: Apache-2.0
#include "lliam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lliam/errors.hpp"

namespace lliam {

namespace {

constexpr std::pair<SyntheticFamily, const char*> kNames[] = {
    {SyntheticFamily::constant, "constant"},
    {SyntheticFamily::linear_trend, "linear_trend"},
    {SyntheticFamily::sinusoid, "sinusoid"},
    {SyntheticFamily::ar1, "ar1"},
    {SyntheticFamily::random_walk_drift, "random_walk_drift"},
    {SyntheticFamily::seasonal, "seasonal"},
    {SyntheticFamily::level_shift, "level_shift"},
};

double settle(double v) { return std::max(0.0, std::round(v)); }

} // namespace

std::string to_string(SyntheticFamily family) {
    for (const auto& [f, name] : kNames)
        if (f == family) return name;
    return "unknown";
}

SyntheticFamily family_from_string(const std::string& name) {
    for (const auto& [f, n] : kNames)
        if (name == n) return f;
    throw ConfigError("unknown synthetic family '" + name + "'");
}

const std::vector<SyntheticFamily>& pretraining_families() {
    static const std::vector<SyntheticFamily> families = {
        SyntheticFamily::constant, SyntheticFamily::linear_trend, SyntheticFamily::sinusoid, SyntheticFamily::ar1,
        SyntheticFamily::random_walk_drift};
    return families;
}

std::vector<double> generate_values(SyntheticFamily family, std::size_t length, CounterRng& rng) {
    if (length == 0) throw ConfigError("synthetic series length must be positive");
    std::vector<double> v(length);
    const auto t_of = [](std::size_t t) { return static_cast<double>(t); };
    switch (family) {
    case SyntheticFamily::constant: {
        const double c = static_cast<double>(rng.uniform_int(0, 99));
        std::fill(v.begin(), v.end(), c);
        break;
    }
    case SyntheticFamily::linear_trend: {
        std::int64_t slope = rng.uniform_int(1, 3);
        if (rng.uniform() < 0.5) slope = -slope;
        const double span = static_cast<double>(slope) * t_of(length - 1);
        const double lo = std::max(0.0, -span);
        const double hi = std::max(lo, 99.0 - std::max(0.0, span));
        const double a = std::round(rng.uniform(lo, hi));
        for (std::size_t t = 0; t < length; ++t) v[t] = settle(a + static_cast<double>(slope) * t_of(t));
        break;
    }
    case SyntheticFamily::sinusoid: {
        const double period = static_cast<double>(rng.uniform_int(4, 12));
        const double amp = rng.uniform(5.0, 30.0);
        const double level = rng.uniform(amp + 5.0, 99.0 - amp);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t t = 0; t < length; ++t)
            v[t] = settle(level + amp * std::sin(2.0 * std::numbers::pi * t_of(t) / period + phase));
        break;
    }
    case SyntheticFamily::ar1: {
        const double phi = rng.uniform(0.5, 0.95);
        const double level = rng.uniform(20.0, 80.0);
        double x = level + rng.normal(0.0, 5.0);
        for (std::size_t t = 0; t < length; ++t) {
            v[t] = settle(x);
            x = level + phi * (x - level) + rng.normal(0.0, 3.0);
        }
        break;
    }
    case SyntheticFamily::random_walk_drift: {
        const double drift = rng.uniform(-1.0, 1.0);
        double x = rng.uniform(20.0, 80.0);
        for (std::size_t t = 0; t < length; ++t) {
            v[t] = settle(x);
            x += drift + rng.normal(0.0, 2.0);
        }
        break;
    }
    case SyntheticFamily::seasonal: {
        const auto period = static_cast<std::size_t>(rng.uniform_int(3, 6));
        const double level = static_cast<double>(rng.uniform_int(30, 70));
        std::vector<double> offsets;
        while (offsets.size() < period) {
            const double o = static_cast<double>(rng.uniform_int(-20, 20));
            if (std::find(offsets.begin(), offsets.end(), o) == offsets.end()) offsets.push_back(o);
        }
        for (std::size_t t = 0; t < length; ++t)
            v[t] = settle(level + offsets[t % period] + static_cast<double>(rng.uniform_int(-1, 1)));
        break;
    }
    case SyntheticFamily::level_shift: {
        const double l1 = static_cast<double>(rng.uniform_int(15, 85));
        double l2 = l1;
        while (std::abs(l2 - l1) < 10.0) l2 = static_cast<double>(rng.uniform_int(15, 85));
        const auto change = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(length)));
        for (std::size_t t = 0; t < length; ++t)
            v[t] = settle((t < change ? l1 : l2) + static_cast<double>(rng.uniform_int(-2, 2)));
        break;
    }
    }
    return v;
}

std::vector<TimeSeries> generate_dataset(SyntheticFamily family, std::size_t count, std::size_t length,
                                         std::uint64_t seed, const std::string& name) {
    std::vector<TimeSeries> out;
    out.reserve(count);
    const int width = static_cast<int>(std::to_string(count ? count - 1 : 0).size());
    for (std::size_t i = 0; i < count; ++i) {
        CounterRng rng(derive_key(seed, i));
        TimeSeries s;
        std::string idx = std::to_string(i);
        s.id = name + "-" + std::string(static_cast<std::size_t>(width) - idx.size(), '0') + idx;
        s.frequency = "synthetic";
        s.source = name;
        s.values = generate_values(family, length, rng);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace lliam
