// SPDX-License-Identifier: Apache-2.0
#include "lliam/prompt_codec.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

#include "lliam/errors.hpp"

namespace lliam {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::size_t skip_spaces(std::string_view s, std::size_t pos) {
    while (pos < s.size() && is_space(s[pos])) ++pos;
    return pos;
}

// Matches -?digits(.digits)? at pos. Returns the end position or npos.
std::size_t match_number(std::string_view s, std::size_t pos) {
    std::size_t i = pos;
    if (i < s.size() && s[i] == '-') ++i;
    const std::size_t int_begin = i;
    while (i < s.size() && is_digit(s[i])) ++i;
    if (i == int_begin) return std::string_view::npos;
    if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
        ++i;
        while (i < s.size() && is_digit(s[i])) ++i;
    }
    return i;
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

} // namespace

std::string format_number(double value, NumberFormat fmt) {
    if (!std::isfinite(value)) throw NumericError("format_number: non-finite value");
    if (fmt.precision < 0 || fmt.precision > 17) throw ConfigError("format_number: precision must be in [0, 17]");
    std::array<char, 400> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed,
                                   fmt.precision);
    if (ec != std::errc{}) throw NumericError("format_number: value too large to format");
    std::string out(buf.data(), end);
    if (out.find('.') != std::string::npos) {
        while (out.back() == '0') out.pop_back();
        if (out.back() == '.') out.pop_back();
    }
    if (out == "-0") out = "0";
    return out;
}

double quantize(double value, NumberFormat fmt) {
    const std::string text = format_number(value, fmt);
    double out = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), out);
    return out;
}

std::string render_series(std::span<const double> values, NumberFormat fmt) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += kValueSeparator;
        out += format_number(values[i], fmt);
    }
    return out;
}

std::string render_prompt(std::span<const double> lags, std::size_t horizon, NumberFormat fmt) {
    if (lags.empty()) throw ConfigError("render_prompt: no input lags");
    if (horizon == 0) throw ConfigError("render_prompt: horizon must be at least 1");
    std::string text(kPromptTemplate);
    text = replace_all(std::move(text), "{n}", std::to_string(lags.size()));
    text = replace_all(std::move(text), "{h}", std::to_string(horizon));
    return replace_all(std::move(text), "{series}", render_series(lags, fmt));
}

std::string render_answer(std::span<const double> targets, NumberFormat fmt) {
    if (targets.empty()) throw ConfigError("render_answer: no target values");
    return render_series(targets, fmt);
}

PromptSample make_prompt_sample(std::span<const double> lags, std::span<const double> targets, NumberFormat fmt) {
    return PromptSample{render_prompt(lags, targets.size(), fmt), render_answer(targets, fmt), lags.size(),
                        targets.size()};
}

std::string_view to_string(ForecastStatus status) {
    switch (status) {
    case ForecastStatus::exact: return "exact";
    case ForecastStatus::trimmed: return "trimmed";
    case ForecastStatus::anomalous_short: return "anomalous_short";
    case ForecastStatus::unparseable: return "unparseable";
    }
    return "unknown";
}

ForecastResult parse_output(std::string_view raw, std::size_t horizon) {
    ForecastResult result;
    result.raw_text = std::string(raw);

    std::string_view body = raw;
    if (auto anchor = raw.find(kResponseAnchor); anchor != std::string_view::npos)
        body = raw.substr(anchor + kResponseAnchor.size());

    std::vector<double> values;
    std::size_t pos = skip_spaces(body, 0);
    if (pos < body.size()) {
        std::size_t end = match_number(body, pos);
        if (end == std::string_view::npos) {
            result.status = ForecastStatus::unparseable;
            return result;
        }
        while (true) {
            double v = 0.0;
            std::from_chars(body.data() + pos, body.data() + end, v);
            values.push_back(v);
            std::size_t next = skip_spaces(body, end);
            if (next >= body.size() || body[next] != ',') break;
            next = skip_spaces(body, next + 1);
            const std::size_t next_end = match_number(body, next);
            if (next_end == std::string_view::npos) break;
            pos = next;
            end = next_end;
        }
    }

    if (values.size() > horizon) {
        values.resize(horizon);
        result.status = ForecastStatus::trimmed;
    } else if (values.size() == horizon) {
        result.status = ForecastStatus::exact;
    } else {
        result.status = ForecastStatus::anomalous_short;
    }
    result.values = std::move(values);
    return result;
}

} // namespace lliam
