// SPDX-License-Identifier: Apache-2.0
#include "lliam/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace lliam {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_value(const std::string& text, const std::string& where) {
    const std::string t = trim(text);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
        throw ParseError(where + ": non-numeric value '" + t + "'");
    if (!std::isfinite(v)) throw ParseError(where + ": non-finite value '" + t + "'");
    return v;
}

std::vector<double> parse_values(const std::string& field, const std::string& where) {
    if (trim(field).empty()) throw ParseError(where + ": empty value field");
    std::vector<double> values;
    for (const auto& item : split_on(field, ',')) values.push_back(parse_value(item, where));
    return values;
}

double median_of(std::vector<double> v) {
    const std::size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
    const double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
    return 0.5 * (lo + hi);
}

std::string join_values(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_exact(values[i]);
    }
    return out;
}

std::map<std::string, std::vector<const WindowPair*>> group_by_series(const std::vector<WindowPair>& windows) {
    std::map<std::string, std::vector<const WindowPair*>> groups;
    for (const auto& w : windows) groups[w.series_id].push_back(&w);
    for (auto& [id, ws] : groups)
        std::stable_sort(ws.begin(), ws.end(), [](auto* a, auto* b) { return a->start < b->start; });
    return groups;
}

Split split_tail_impl(const std::vector<WindowPair>& windows, bool zero_shot,
                      const std::function<std::size_t(std::size_t)>& test_count) {
    Split split;
    for (const auto& [id, ws] : group_by_series(windows)) {
        const std::size_t n_test = std::min(test_count(ws.size()), ws.size());
        if (n_test == 0) throw ConfigError("tail split leaves series " + id + " without test windows");
        const std::size_t first_test = ws.size() - n_test;
        for (std::size_t i = 0; i < ws.size(); ++i) {
            if (i >= first_test)
                split.test.push_back(*ws[i]);
            else if (!zero_shot)
                split.train.push_back(*ws[i]);
        }
    }
    return split;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    return out;
}

} // namespace

std::string format_exact(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

std::vector<TimeSeries> parse_series_tsv(std::istream& in, const std::string& origin) {
    std::vector<TimeSeries> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line[0] == '#') continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto fields = split_on(line, '\t');
        if (fields.size() != 3) throw ParseError(where + ": expected 3 tab-separated fields, got " +
                                                 std::to_string(fields.size()));
        TimeSeries s;
        s.id = trim(fields[0]);
        s.frequency = trim(fields[1]);
        if (s.id.empty()) throw ParseError(where + ": empty series id");
        s.values = parse_values(fields[2], where + " (series " + s.id + ")");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TimeSeries> parse_series_tsf(std::istream& in, const std::string& origin) {
    std::vector<TimeSeries> out;
    std::string frequency;
    bool in_data = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        if (!in_data) {
            if (t[0] != '@') throw ParseError(where + ": expected a header line");
            std::istringstream is(t);
            std::string key, value;
            is >> key >> value;
            if (key == "@frequency") frequency = value;
            if (key == "@data") in_data = true;
            continue;
        }
        const auto colon = t.rfind(':');
        if (colon == std::string::npos) throw ParseError(where + ": record without attribute separator");
        TimeSeries s;
        s.id = t.substr(0, t.find(':'));
        s.frequency = frequency;
        if (s.id.empty()) throw ParseError(where + ": empty series id");
        const std::string field = t.substr(colon + 1);
        if (trim(field).empty()) throw ParseError(where + ": empty value field (series " + s.id + ")");
        std::optional<double> last;
        std::size_t leading_missing = 0;
        for (const auto& item : split_on(field, ',')) {
            if (trim(item) == "?") {
                if (last) s.values.push_back(*last);
                else ++leading_missing;
                continue;
            }
            last = parse_value(item, where + " (series " + s.id + ")");
            if (leading_missing) {
                s.values.insert(s.values.end(), leading_missing, *last);
                leading_missing = 0;
            }
            s.values.push_back(*last);
        }
        if (!last) throw ParseError(where + ": series " + s.id + " has no observed values");
        out.push_back(std::move(s));
    }
    if (!in_data) throw ParseError(origin + ": missing @data section");
    return out;
}

std::vector<TimeSeries> load_series(const fs::path& path, SeriesFormat format) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open series file " + path.string());
    if (format == SeriesFormat::automatic) format = path.extension() == ".tsf" ? SeriesFormat::tsf : SeriesFormat::tsv;
    auto series = format == SeriesFormat::tsf ? parse_series_tsf(in, path.string()) : parse_series_tsv(in, path.string());
    for (auto& s : series) s.source = path.stem().string();
    return series;
}

void write_series(const fs::path& path, const std::vector<TimeSeries>& series) {
    auto out = open_out(path);
    for (const auto& s : series) {
        if (s.id.find_first_of("\t\n") != std::string::npos || s.frequency.find_first_of("\t\n") != std::string::npos)
            throw ConfigError("series id and frequency may not contain tabs or newlines: " + s.id);
        if (s.values.empty()) throw ConfigError("series " + s.id + " has no values");
        out << s.id << '\t' << s.frequency << '\t' << join_values(s.values) << '\n';
    }
}

MitigationResult mitigate_anomalies_detailed(const TimeSeries& s, double k) {
    if (!(k > 0.0)) throw ConfigError("anomaly threshold k must be positive");
    if (s.values.empty()) throw ConfigError("series " + s.id + " has no values");
    MitigationResult r;
    r.series = s;
    const double med = median_of(s.values);
    std::vector<double> dev(s.values.size());
    for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = std::abs(s.values[i] - med);
    const double mad = median_of(dev);
    const double half_width = k * 1.4826 * mad;
    r.lower = med - half_width;
    r.upper = med + half_width;
    for (auto& v : r.series.values) {
        const double c = std::clamp(v, r.lower, r.upper);
        if (c != v) {
            v = c;
            ++r.clamped;
        }
    }
    return r;
}

TimeSeries mitigate_anomalies(const TimeSeries& s, double k) { return mitigate_anomalies_detailed(s, k).series; }

void WindowSpec::validate() const {
    if (n < 1 || h < 1) throw ConfigError("window spec needs n >= 1 and h >= 1");
}

std::vector<WindowPair> make_windows(const TimeSeries& s, const WindowSpec& spec) {
    spec.validate();
    std::vector<WindowPair> out;
    const std::size_t span = spec.n + spec.h;
    if (s.values.size() < span) return out;
    out.reserve(s.values.size() - span + 1);
    for (std::size_t start = 0; start + span <= s.values.size(); ++start) {
        WindowPair w;
        w.series_id = s.id;
        w.start = start;
        const auto first = s.values.begin() + static_cast<std::ptrdiff_t>(start);
        w.x.assign(first, first + static_cast<std::ptrdiff_t>(spec.n));
        w.y.assign(first + static_cast<std::ptrdiff_t>(spec.n), first + static_cast<std::ptrdiff_t>(span));
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<WindowPair> make_windows(const std::vector<TimeSeries>& series, const WindowSpec& spec) {
    std::vector<WindowPair> out;
    for (const auto& s : series) {
        auto ws = make_windows(s, spec);
        out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
    }
    std::stable_sort(out.begin(), out.end(), [](const WindowPair& a, const WindowPair& b) {
        return a.series_id != b.series_id ? a.series_id < b.series_id : a.start < b.start;
    });
    return out;
}

Split split_leave_one_out(const std::vector<WindowPair>& windows) {
    Split split;
    for (const auto& [id, ws] : group_by_series(windows)) {
        const WindowPair& test = *ws.back();
        split.test.push_back(test);
        if (ws.size() == 1) split.warnings.push_back("series " + id + " has a single window; its train set is empty");
        for (std::size_t i = 0; i + 1 < ws.size(); ++i) {
            const WindowPair& w = *ws[i];
            const bool overlaps = w.y_end() > test.y_begin() && w.y_begin() < test.y_end();
            if (overlaps) ++split.purged;
            else split.train.push_back(w);
        }
    }
    return split;
}

Split split_tail_fraction(const std::vector<WindowPair>& windows, double fraction, bool zero_shot) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("tail fraction must lie in (0, 1)");
    return split_tail_impl(windows, zero_shot, [fraction](std::size_t n) {
        return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    });
}

Split split_tail_count(const std::vector<WindowPair>& windows, std::size_t count, bool zero_shot) {
    if (count == 0) throw ConfigError("tail count must be positive");
    return split_tail_impl(windows, zero_shot, [count](std::size_t) { return count; });
}

void write_windows(const fs::path& path, const std::vector<WindowPair>& windows) {
    auto out = open_out(path);
    for (const auto& w : windows)
        out << w.series_id << '\t' << w.start << '\t' << join_values(w.x) << '\t' << join_values(w.y) << '\n';
}

std::vector<WindowPair> read_windows(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open window file " + path.string());
    std::vector<WindowPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto fields = split_on(line, '\t');
        if (fields.size() != 4) throw ParseError(where + ": expected 4 tab-separated fields");
        WindowPair w;
        w.series_id = fields[0];
        auto [ptr, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), w.start);
        if (ec != std::errc{} || ptr != fields[1].data() + fields[1].size())
            throw ParseError(where + ": invalid start index");
        w.x = parse_values(fields[2], where);
        w.y = parse_values(fields[3], where);
        out.push_back(std::move(w));
    }
    return out;
}

void write_window_manifest(const fs::path& path, const Split& split, const WindowSpec& spec) {
    std::vector<std::pair<const WindowPair*, const char*>> rows;
    for (const auto& w : split.train) rows.emplace_back(&w, "train");
    for (const auto& w : split.test) rows.emplace_back(&w, "test");
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.first->series_id != b.first->series_id ? a.first->series_id < b.first->series_id
                                                        : a.first->start < b.first->start;
    });
    auto out = open_out(path);
    out << "series_id\tstart\tn\th\tsplit\n";
    for (const auto& [w, tag] : rows)
        out << w->series_id << '\t' << w->start << '\t' << spec.n << '\t' << spec.h << '\t' << tag << '\n';
}

std::string to_string(SplitStrategy s) {
    switch (s) {
    case SplitStrategy::leave_one_out: return "leave-one-out";
    case SplitStrategy::tail_fraction: return "tail-fraction";
    case SplitStrategy::tail_count: return "tail-count";
    }
    return "unknown";
}

const std::vector<DatasetRegistryEntry>& dataset_registry() {
    using S = SplitStrategy;
    const auto row = [](std::string name, std::size_t n, std::size_t h, S split, double fraction, std::string freq,
                        bool zero_shot, std::size_t series, bool synthetic = false) {
        DatasetRegistryEntry e;
        e.name = name;
        e.spec = {n, h};
        e.split = split;
        e.tail_fraction = fraction;
        e.frequency = std::move(freq);
        e.zero_shot = zero_shot;
        e.reference_series = series;
        e.file = std::move(name);
        e.synthetic = synthetic;
        return e;
    };
    static const std::vector<DatasetRegistryEntry> registry = {
        row("electricity-weekly", 65, 8, S::leave_one_out, 0, "weekly", false, 321),
        row("m1-monthly", 15, 18, S::leave_one_out, 0, "monthly", false, 617),
        row("m1-quarterly", 5, 8, S::leave_one_out, 0, "quarterly", false, 203),
        row("m3-monthly", 15, 18, S::leave_one_out, 0, "monthly", false, 1428),
        row("m3-quarterly", 5, 8, S::leave_one_out, 0, "quarterly", false, 756),
        row("nn5-daily", 9, 56, S::leave_one_out, 0, "daily", false, 111),
        row("nn5-weekly", 65, 8, S::leave_one_out, 0, "weekly", false, 111),
        row("weather", 512, 96, S::tail_fraction, 0.1, "10 minutes", false, 1),
        row("ili", 96, 24, S::tail_fraction, 0.2, "weekly", false, 1),
        row("sf-traffic-weekly", 65, 8, S::leave_one_out, 0, "weekly", true, 862),
        row("etth1", 24, 48, S::tail_fraction, 0.1, "hourly", true, 1),
        row("etth2", 24, 48, S::tail_fraction, 0.1, "hourly", true, 1),
        row("synth-seasonal", 12, 4, S::leave_one_out, 0, "synthetic", false, 0, true),
        row("synth-level-shift", 12, 4, S::leave_one_out, 0, "synthetic", true, 0, true),
    };
    return registry;
}

UnknownDataset::UnknownDataset(const std::string& name, std::vector<std::string> candidates)
    : ConfigError([&] {
          std::string msg = "unknown dataset '" + name + "'; known datasets:";
          for (const auto& c : candidates) msg += " " + c;
          return msg;
      }()),
      candidates_(std::move(candidates)) {}

const DatasetRegistryEntry& find_dataset(const std::string& name) {
    for (const auto& e : dataset_registry())
        if (e.name == name) return e;
    std::vector<std::string> names;
    for (const auto& e : dataset_registry()) names.push_back(e.name);
    throw UnknownDataset(name, std::move(names));
}

Split split_for(const DatasetRegistryEntry& entry, const std::vector<WindowPair>& windows) {
    Split split;
    switch (entry.split) {
    case SplitStrategy::leave_one_out: split = split_leave_one_out(windows); break;
    case SplitStrategy::tail_fraction: split = split_tail_fraction(windows, entry.tail_fraction, entry.zero_shot); break;
    case SplitStrategy::tail_count: split = split_tail_count(windows, entry.tail_count, entry.zero_shot); break;
    }
    if (entry.zero_shot) split.train.clear();
    return split;
}

} // namespace lliam
