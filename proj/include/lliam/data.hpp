// SPDX-License-Identifier: Apache-2.0
//
// Series ingestion, anomaly clamping, stride-1 sliding windows and the
// train/test split strategies.
//
// Series file (one series per line):
//
//   <id> TAB <frequency> TAB v1,v2,...,vn
//
// Blank lines and lines starting with '#' are skipped. Monash .tsf files are
// read directly (see load_series).

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lliam/errors.hpp"

namespace lliam {

struct TimeSeries {
    std::string id;
    std::string frequency;
    std::vector<double> values;
    std::string source; // dataset name
};

enum class SeriesFormat { automatic, tsv, tsf };

// Throws ParseError with the file name and line number on malformed input.
std::vector<TimeSeries> load_series(const std::filesystem::path& path, SeriesFormat format = SeriesFormat::automatic);
std::vector<TimeSeries> parse_series_tsv(std::istream& in, const std::string& origin);
// Monash .tsf: '@' header lines, then "attr:...:v1,v2,..." records. The first
// attribute is the id; '?' marks a missing value and repeats the previous
// observation (the first observed value when missing at the start).
std::vector<TimeSeries> parse_series_tsf(std::istream& in, const std::string& origin);

// Shortest round-trip decimal text, so write -> load is bit-exact.
void write_series(const std::filesystem::path& path, const std::vector<TimeSeries>& series);
std::string format_exact(double value);

struct MitigationResult {
    TimeSeries series;
    std::size_t clamped = 0;
    double lower = 0.0;
    double upper = 0.0;
};

// Clamps values outside median +- k * 1.4826 * MAD to the band edge. With
// MAD == 0 the band is the median itself; a constant series is untouched.
MitigationResult mitigate_anomalies_detailed(const TimeSeries& s, double k = 3.0);
TimeSeries mitigate_anomalies(const TimeSeries& s, double k = 3.0);

struct WindowSpec {
    std::size_t n = 0; // input size (lags)
    std::size_t h = 0; // horizon
    void validate() const;
};

struct WindowPair {
    std::vector<double> x;
    std::vector<double> y;
    std::string series_id;
    std::size_t start = 0;

    // Indices of the first and one-past-last target value in the source series.
    std::size_t y_begin() const { return start + x.size(); }
    std::size_t y_end() const { return start + x.size() + y.size(); }
};

std::vector<WindowPair> make_windows(const TimeSeries& s, const WindowSpec& spec);
// All series, sorted by (series id, start).
std::vector<WindowPair> make_windows(const std::vector<TimeSeries>& series, const WindowSpec& spec);

struct Split {
    std::vector<WindowPair> train;
    std::vector<WindowPair> test;
    std::vector<std::string> warnings;
    std::size_t purged = 0; // train windows dropped for overlapping a test target
};

// Per series: the window with the largest start index is the test window.
// Earlier windows train, except those whose targets overlap the test
// targets, which are dropped.
Split split_leave_one_out(const std::vector<WindowPair>& windows);

// Per series: the chronologically last ceil(fraction * N) windows test, the
// rest train. With zero_shot set the train partition stays empty.
Split split_tail_fraction(const std::vector<WindowPair>& windows, double fraction, bool zero_shot = false);
Split split_tail_count(const std::vector<WindowPair>& windows, std::size_t count, bool zero_shot = false);

// Window files: series_id TAB start TAB x-values TAB y-values.
void write_windows(const std::filesystem::path& path, const std::vector<WindowPair>& windows);
std::vector<WindowPair> read_windows(const std::filesystem::path& path);
// Manifest: series_id TAB start TAB n TAB h TAB split.
void write_window_manifest(const std::filesystem::path& path, const Split& split, const WindowSpec& spec);

enum class SplitStrategy { leave_one_out, tail_fraction, tail_count };
std::string to_string(SplitStrategy s);

struct DatasetRegistryEntry {
    std::string name;
    WindowSpec spec;
    SplitStrategy split = SplitStrategy::leave_one_out;
    double tail_fraction = 0.0;
    std::size_t tail_count = 0;
    std::string frequency;
    bool zero_shot = false;
    std::size_t reference_series = 0; // series count of the original collection; 0 for synthetic sets
    std::string file;                 // file name under the data root
    bool synthetic = false;
};

// Nine comparative-study rows, three zero-shot rows and the synthetic desk sets.
const std::vector<DatasetRegistryEntry>& dataset_registry();

class UnknownDataset : public ConfigError {
public:
    UnknownDataset(const std::string& name, std::vector<std::string> candidates);
    const std::vector<std::string>& candidates() const noexcept { return candidates_; }

private:
    std::vector<std::string> candidates_;
};

const DatasetRegistryEntry& find_dataset(const std::string& name);

// Applies the entry's split strategy.
Split split_for(const DatasetRegistryEntry& entry, const std::vector<WindowPair>& windows);

} // namespace lliam
