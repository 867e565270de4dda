// SPDX-License-Identifier: Apache-2.0
#include "lliam/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "lliam/errors.hpp"
#include "lliam/metrics.hpp"
#include "lliam/train.hpp"

namespace lliam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

ForecastResult predict_one(const Model& model, const Tokenizer& tokenizer, const WindowPair& w,
                           const PredictConfig& config) {
    const std::size_t h = w.y.size();
    const std::size_t requested = h + (config.horizon_mitigation ? 1 : 0);
    TokenSequence prompt{Vocabulary::kBos};
    const auto body = tokenizer.encode(prompt_text(w.x, requested, config.format));
    prompt.insert(prompt.end(), body.begin(), body.end());

    GenerationConfig gen = config.generation;
    gen.max_new_tokens = token_budget(w, requested, config.format);
    gen.seed = window_key(config.generation.seed, w);
    try {
        const GenerationResult out = generate(model, prompt, gen);
        return parse_output(tokenizer.decode(out.tokens), h);
    } catch (const ContextOverflow& e) {
        ForecastResult r;
        r.status = ForecastStatus::unparseable;
        r.raw_text = std::string("<context overflow: ") + e.what() + ">";
        return r;
    }
}

double mean_finite(const std::vector<double>& v) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            sum += x;
            ++n;
        }
    return n ? sum / static_cast<double>(n) : kNaN;
}

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '\t') out += "\\t";
        else if (c == '\n') out += "\\n";
        else if (c == '\\') out += "\\\\";
        else out += c;
    }
    return out;
}

std::string num(double v) {
    if (!std::isfinite(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

} // namespace

std::size_t token_budget(const WindowPair& w, std::size_t requested, NumberFormat fmt) {
    std::size_t width = 1;
    for (double v : w.x) width = std::max(width, format_number(v, fmt).size());
    return requested * (width + 2 + kValueSeparator.size()) + 2;
}

std::uint64_t window_key(std::uint64_t seed, const WindowPair& w) {
    return derive_key(derive_key(seed, fnv1a(w.series_id)), w.start);
}

std::vector<ForecastResult> predict_batch(const Model& model, const Tokenizer& tokenizer,
                                          const std::vector<WindowPair>& windows, const PredictConfig& config) {
    std::vector<ForecastResult> results(windows.size());
    if (windows.empty()) return results;
    const std::size_t workers = std::clamp<std::size_t>(config.threads, 1, windows.size());
    if (workers == 1) {
        for (std::size_t i = 0; i < windows.size(); ++i) results[i] = predict_one(model, tokenizer, windows[i], config);
        return results;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < windows.size(); i += workers)
                    results[i] = predict_one(model, tokenizer, windows[i], config);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

DatasetMetrics summarize(const std::string& dataset, const std::string& setting,
                         const std::vector<WindowPair>& windows, const std::vector<ForecastResult>& results) {
    if (windows.size() != results.size()) throw ShapeError("summarize: windows and results differ in length");
    DatasetMetrics m;
    m.dataset = dataset;
    m.setting = setting;
    m.n_test = windows.size();
    std::vector<double> r, s, pr, ps;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& res = results[i];
        ++m.status_counts[static_cast<std::size_t>(res.status)];
        if (!res.decoded()) continue;
        ++m.n_decoded;
        const auto base = persistence_baseline(windows[i]);
        r.push_back(rmse(windows[i].y, res.values));
        s.push_back(smape(windows[i].y, res.values));
        pr.push_back(rmse(windows[i].y, base));
        ps.push_back(smape(windows[i].y, base));
        if (s.back() < ps.back()) ++m.beats_persistence;
    }
    m.missing_rate = m.n_test ? missing_rate(m.n_test, m.n_decoded) : 0.0;
    m.rmse = mean_finite(r);
    m.smape = mean_finite(s);
    m.persistence_rmse = mean_finite(pr);
    m.persistence_smape = mean_finite(ps);
    return m;
}

MetricsReport make_report(std::vector<DatasetMetrics> rows) {
    MetricsReport report;
    report.rows = std::move(rows);
    std::vector<std::string> settings;
    for (const auto& row : report.rows)
        if (std::find(settings.begin(), settings.end(), row.setting) == settings.end()) settings.push_back(row.setting);
    for (const auto& setting : settings) {
        DatasetMetrics avg;
        avg.dataset = "avg-of-avgs";
        avg.setting = setting;
        std::vector<double> mr, r, s, pr, ps;
        for (const auto& row : report.rows) {
            if (row.setting != setting) continue;
            avg.n_test += row.n_test;
            avg.n_decoded += row.n_decoded;
            avg.beats_persistence += row.beats_persistence;
            for (std::size_t k = 0; k < avg.status_counts.size(); ++k) avg.status_counts[k] += row.status_counts[k];
            mr.push_back(row.missing_rate);
            r.push_back(row.rmse);
            s.push_back(row.smape);
            pr.push_back(row.persistence_rmse);
            ps.push_back(row.persistence_smape);
        }
        avg.missing_rate = mean_finite(mr);
        avg.rmse = mean_finite(r);
        avg.smape = mean_finite(s);
        avg.persistence_rmse = mean_finite(pr);
        avg.persistence_smape = mean_finite(ps);
        report.averages.push_back(avg);
    }
    return report;
}

std::string format_report_table(const MetricsReport& report) {
    std::ostringstream os;
    os << "dataset\tsetting\tn_test\tn_decoded\texact\ttrimmed\tanomalous_short\tunparseable\tmr_percent\trmse\tsmape"
          "\tpersistence_rmse\tpersistence_smape\tbeats_persistence\n";
    const auto line = [&](const DatasetMetrics& m) {
        os << m.dataset << '\t' << m.setting << '\t' << m.n_test << '\t' << m.n_decoded;
        for (auto c : m.status_counts) os << '\t' << c;
        os << '\t' << num(m.missing_rate) << '\t' << num(m.rmse) << '\t' << num(m.smape) << '\t'
           << num(m.persistence_rmse) << '\t' << num(m.persistence_smape) << '\t' << m.beats_persistence << '\n';
    };
    for (const auto& m : report.rows) line(m);
    for (const auto& m : report.averages) line(m);
    return os.str();
}

void write_report(const std::filesystem::path& path, const MetricsReport& report) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << format_report_table(report);
    out << "# rmse and smape: per-window values averaged over decoded (exact or trimmed) windows only\n";
    out << "# mr_percent = 100 * (n_test - n_decoded) / n_test\n";
    out << "# smape terms with |y| + |yhat| == 0 contribute 0\n";
}

void write_audit(const std::filesystem::path& path, const std::string& dataset, const std::string& setting,
                 const std::vector<WindowPair>& windows, const std::vector<ForecastResult>& results, bool append) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const bool fresh = !append || !std::filesystem::exists(path);
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    if (fresh) out << "dataset\tsetting\tseries_id\tstart\tstatus\traw_text\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].status == ForecastStatus::exact) continue;
        out << dataset << '\t' << setting << '\t' << windows[i].series_id << '\t' << windows[i].start << '\t'
            << to_string(results[i].status) << '\t' << escape(results[i].raw_text) << '\n';
    }
}

void write_forecasts(const std::filesystem::path& path, const std::vector<WindowPair>& windows,
                     const std::vector<ForecastResult>& results) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << "series_id\tstart\tstep\ttruth\tforecast\tpersistence\n";
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        for (std::size_t t = 0; t < w.y.size(); ++t) {
            out << w.series_id << '\t' << w.start << '\t' << t + 1 << '\t' << format_exact(w.y[t]) << '\t';
            if (results[i].decoded()) out << format_exact(results[i].values[t]);
            out << '\t' << format_exact(w.x.back()) << '\n';
        }
    }
}

} // namespace lliam
