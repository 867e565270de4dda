// SPDX-License-Identifier: Apache-2.0
//
// Text codec between numeric windows and the forecasting prompt:
//
//   The last {n} observations of an unknown variable were {series}.
//   What will the next {h} observations be? Response:
//
// followed by an answer of the form "v1, v2, ..., vh".

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lliam {

inline constexpr std::string_view kPromptTemplate =
    "The last {n} observations of an unknown variable were {series}. "
    "What will the next {h} observations be? Response:";
inline constexpr std::string_view kResponseAnchor = "Response:";
inline constexpr std::string_view kValueSeparator = ", ";

struct NumberFormat {
    int precision = 4; // fractional digits before trailing-zero trimming
};

// Fixed-point with `precision` fractional digits, trailing zeros trimmed,
// integers without a decimal point. Throws NumericError on non-finite input.
std::string format_number(double value, NumberFormat fmt = {});

// Rounds to the value format_number would print.
double quantize(double value, NumberFormat fmt = {});

std::string render_series(std::span<const double> values, NumberFormat fmt = {});
std::string render_prompt(std::span<const double> lags, std::size_t horizon, NumberFormat fmt = {});
std::string render_answer(std::span<const double> targets, NumberFormat fmt = {});

struct PromptSample {
    std::string context_question;
    std::string answer;
    std::size_t n = 0;
    std::size_t h = 0;
};

PromptSample make_prompt_sample(std::span<const double> lags, std::span<const double> targets,
                                NumberFormat fmt = {});

enum class ForecastStatus { exact, trimmed, anomalous_short, unparseable };

std::string_view to_string(ForecastStatus status);

struct ForecastResult {
    std::vector<double> values;
    ForecastStatus status = ForecastStatus::unparseable;
    std::string raw_text;

    // Exact and trimmed results count as decoded and enter the metrics.
    bool decoded() const noexcept {
        return status == ForecastStatus::exact || status == ForecastStatus::trimmed;
    }
};

// Reads the leading run of comma-separated numbers after the first
// "Response:" anchor (or from the start when absent) and classifies it
// against the expected horizon.
ForecastResult parse_output(std::string_view raw, std::size_t horizon);

} // namespace lliam
