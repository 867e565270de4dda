// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lliam/data.hpp"
#include "lliam/model.hpp"
#include "lliam/prompt_codec.hpp"
#include "lliam/tokenizer.hpp"

namespace lliam {

struct PredictConfig {
    GenerationConfig generation; // max_new_tokens is derived per window
    // Ask for h + 1 values and keep the first h, so a run that stops one
    // value early still decodes.
    bool horizon_mitigation = true;
    std::size_t threads = 1;
    NumberFormat format;
};

// Generation budget for one window: room for the requested values at the
// widest lag width plus two extra digits, separators and EOS.
std::size_t token_budget(const WindowPair& w, std::size_t requested, NumberFormat fmt = {});

// Stream key of a window: derive_key(seed, hash(series id, start)).
std::uint64_t window_key(std::uint64_t seed, const WindowPair& w);

// Results in input order. Worker count never changes the output.
std::vector<ForecastResult> predict_batch(const Model& model, const Tokenizer& tokenizer,
                                          const std::vector<WindowPair>& windows, const PredictConfig& config);

struct DatasetMetrics {
    std::string dataset;
    std::string setting; // "greedy", "T=10", ...
    std::size_t n_test = 0;
    std::size_t n_decoded = 0;
    std::array<std::size_t, 4> status_counts{}; // indexed by ForecastStatus
    double missing_rate = 0.0;
    double rmse = 0.0;  // mean of per-window RMSE over decoded windows; NaN when none decoded
    double smape = 0.0; // likewise
    double persistence_rmse = 0.0; // over the same decoded windows
    double persistence_smape = 0.0;
    // Windows (out of n_test) whose SMAPE is strictly below persistence;
    // undecoded windows never count.
    std::size_t beats_persistence = 0;
};

DatasetMetrics summarize(const std::string& dataset, const std::string& setting,
                         const std::vector<WindowPair>& windows, const std::vector<ForecastResult>& results);

struct MetricsReport {
    std::vector<DatasetMetrics> rows;
    // One "average of averages" row per setting, in first-seen order.
    std::vector<DatasetMetrics> averages;
};

MetricsReport make_report(std::vector<DatasetMetrics> rows);

// report.tsv with per-dataset and average rows plus a footer.
void write_report(const std::filesystem::path& path, const MetricsReport& report);
std::string format_report_table(const MetricsReport& report);

// Appends one line per non-exact result: dataset, setting, series, start,
// status, raw text (tabs and newlines escaped).
void write_audit(const std::filesystem::path& path, const std::string& dataset, const std::string& setting,
                 const std::vector<WindowPair>& windows, const std::vector<ForecastResult>& results, bool append);

// Plot data: series_id, start, step, truth, forecast (empty if undecoded), persistence.
void write_forecasts(const std::filesystem::path& path, const std::vector<WindowPair>& windows,
                     const std::vector<ForecastResult>& results);

} // namespace lliam
