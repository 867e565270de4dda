// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic series families. Values are non-negative integers, mostly
// two digits wide.
//
//   constant           c in [0, 99]
//   linear_trend       a + b t, slope b in {-3..-1, 1..3}
//   sinusoid           L + A sin(2 pi t / P + phi), P in [4, 12], A in [5, 30]
//   ar1                L + phi (x - L) + N(0, 3), phi in [0.5, 0.95]
//   random_walk_drift  x + d + N(0, 2), d in [-1, 1]
//   seasonal           repeating pattern of period 3..6 with distinct phase
//                      offsets, +-1 noise (fine-tuning family)
//   level_shift        level L1 then L2 from a random change point, +-2
//                      noise (zero-shot family)

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lliam/data.hpp"
#include "lliam/rng.hpp"

namespace lliam {

enum class SyntheticFamily { constant, linear_trend, sinusoid, ar1, random_walk_drift, seasonal, level_shift };

std::string to_string(SyntheticFamily family);
SyntheticFamily family_from_string(const std::string& name);

// The five families the base model is pre-trained on.
const std::vector<SyntheticFamily>& pretraining_families();

std::vector<double> generate_values(SyntheticFamily family, std::size_t length, CounterRng& rng);

// `count` series of `length` values; series i uses stream derive_key(seed, i).
std::vector<TimeSeries> generate_dataset(SyntheticFamily family, std::size_t count, std::size_t length,
                                         std::uint64_t seed, const std::string& name);

} // namespace lliam
