// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lliam/data.hpp"
#include "lliam/errors.hpp"
#include "lliam/synthetic.hpp"

using namespace lliam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::path(LLIAM_TEST_TMP) / "data" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TimeSeries series(std::string id, std::vector<double> v) {
    TimeSeries s;
    s.id = std::move(id);
    s.frequency = "weekly";
    s.values = std::move(v);
    return s;
}

std::vector<double> ramp(std::size_t n, double start = 0.0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + static_cast<double>(i);
    return v;
}

// Reference median / MAD band.
std::pair<double, double> band(std::vector<double> v, double k) {
    const auto median = [](std::vector<double> x) {
        std::sort(x.begin(), x.end());
        const std::size_t n = x.size();
        return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
    };
    const double med = median(v);
    for (auto& x : v) x = std::abs(x - med);
    const double mad = median(v);
    return {med - k * 1.4826 * mad, med + k * 1.4826 * mad};
}

} // namespace

TEST(LoadSeries, TwoLinesTwoSeries) {
    std::istringstream in("a\tweekly\t1,2,3\n# comment\n\nb\tdaily\t4.5,-6\n");
    const auto s = parse_series_tsv(in, "mem");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].id, "a");
    EXPECT_EQ(s[0].values, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(s[1].frequency, "daily");
    EXPECT_EQ(s[1].values, (std::vector<double>{4.5, -6}));
}

TEST(LoadSeries, EmptyValueFieldNamesRecord) {
    std::istringstream in("a\tweekly\t1,2\nbad\tweekly\t\n");
    try {
        parse_series_tsv(in, "series.tsv");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("series.tsv:2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("bad"), std::string::npos) << msg;
    }
}

TEST(LoadSeries, NonNumericValueAndMalformedLineFail) {
    std::istringstream a("x\tweekly\t1,two,3\n");
    EXPECT_THROW(parse_series_tsv(a, "f"), ParseError);
    std::istringstream b("only-two\tfields\n");
    EXPECT_THROW(parse_series_tsv(b, "f"), ParseError);
    std::istringstream c("x\tweekly\t1,,3\n");
    EXPECT_THROW(parse_series_tsv(c, "f"), ParseError);
}

TEST(LoadSeries, RaggedLengthsAndOrderPreserved) {
    std::istringstream in("z\tw\t1\na\tw\t1,2,3,4\nm\tw\t5,6\n");
    const auto s = parse_series_tsv(in, "f");
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].id, "z");
    EXPECT_EQ(s[1].values.size(), 4u);
    EXPECT_EQ(s[2].id, "m");
}

TEST(LoadSeries, WriteLoadIsBitExact) {
    std::mt19937_64 gen(81);
    std::vector<TimeSeries> all;
    for (int i = 0; i < 10; ++i) {
        std::vector<double> v(50);
        for (auto& x : v) x = std::uniform_real_distribution<double>(-1e6, 1e6)(gen) / 3.0;
        v[0] = 0.1;
        v[1] = 1e-300;
        v[2] = -0.0;
        all.push_back(series("s" + std::to_string(i), v));
    }
    const auto dir = scratch("roundtrip");
    write_series(dir / "x.tsv", all);
    const auto back = load_series(dir / "x.tsv");
    ASSERT_EQ(back.size(), all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        EXPECT_EQ(back[i].id, all[i].id);
        EXPECT_EQ(back[i].source, "x");
        ASSERT_EQ(back[i].values.size(), all[i].values.size());
        for (std::size_t k = 0; k < all[i].values.size(); ++k)
            EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i].values[k]), std::bit_cast<std::uint64_t>(all[i].values[k]));
    }
}

TEST(LoadSeries, MonashTsfWithMissingValues) {
    std::istringstream in("# comment\n@relation demo\n@attribute series_name string\n@attribute start_timestamp date\n"
                          "@frequency weekly\n@missing true\n@data\n"
                          "T1:2020-01-01 00-00-00:?,3,?,5\nT2:2020-01-01 00-00-00:1.5,2.5\n");
    const auto s = parse_series_tsf(in, "demo.tsf");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].id, "T1");
    EXPECT_EQ(s[0].frequency, "weekly");
    EXPECT_EQ(s[0].values, (std::vector<double>{3, 3, 3, 5}));
    EXPECT_EQ(s[1].values, (std::vector<double>{1.5, 2.5}));
}

TEST(Mitigation, CleanSeriesUnchanged) {
    const auto s = series("a", {10, 11, 9, 10, 12, 8, 10, 11});
    EXPECT_EQ(mitigate_anomalies(s).values, s.values);
}

TEST(Mitigation, SpikeIsClampedToUpperBound) {
    const auto s = series("a", {1, 1, 1, 1, 100});
    // median 1, MAD 0: the band collapses to the median.
    const auto r = mitigate_anomalies_detailed(s, 3.0);
    const auto [lo, hi] = band(s.values, 3.0);
    EXPECT_EQ(r.upper, hi);
    EXPECT_EQ(r.lower, lo);
    EXPECT_EQ(r.series.values, (std::vector<double>{1, 1, 1, 1, hi}));
    EXPECT_EQ(r.clamped, 1u);
}

TEST(Mitigation, SpikeWithSpreadMatchesHandBand) {
    const auto s = series("a", {1, 2, 3, 4, 5, 6, 7, 100});
    // median 4.5; |dev| = 3.5 2.5 1.5 .5 .5 1.5 2.5 95.5 -> MAD 2; upper 4.5 + 3 * 1.4826 * 2.
    const auto r = mitigate_anomalies_detailed(s, 3.0);
    EXPECT_DOUBLE_EQ(r.upper, 4.5 + 3 * 1.4826 * 2);
    EXPECT_DOUBLE_EQ(r.series.values.back(), r.upper);
    EXPECT_EQ(std::vector<double>(r.series.values.begin(), r.series.values.end() - 1), ramp(7, 1));
}

TEST(Mitigation, ConstantSeriesUnchanged) {
    const auto s = series("c", std::vector<double>(9, 4.25));
    EXPECT_EQ(mitigate_anomalies(s).values, s.values);
}

TEST(Mitigation, IdempotentAndLengthPreserving) {
    std::mt19937_64 gen(82);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(5 + static_cast<std::size_t>(t % 40));
        for (auto& x : v) x = std::normal_distribution<double>(0, 1)(gen) * (t % 3 == 0 ? 100 : 1);
        const double k = 1.0 + (t % 7);
        const auto once = mitigate_anomalies(series("r", v), k);
        ASSERT_EQ(once.values.size(), v.size());
        EXPECT_EQ(mitigate_anomalies(once, k).values, once.values);
        const auto [lo, hi] = band(v, k);
        for (double x : once.values) {
            EXPECT_GE(x, lo - 1e-9);
            EXPECT_LE(x, hi + 1e-9);
        }
    }
}

TEST(Windows, CountingFormula) {
    const auto w = make_windows(series("a", ramp(10)), WindowSpec{3, 2});
    EXPECT_EQ(w.size(), 6u);
    EXPECT_EQ(make_windows(series("a", ramp(5)), WindowSpec{3, 2}).size(), 1u);
    EXPECT_TRUE(make_windows(series("a", ramp(4)), WindowSpec{3, 2}).empty());
}

TEST(Windows, IndexingAndContentFidelity) {
    std::mt19937_64 gen(83);
    std::vector<double> v(40);
    for (auto& x : v) x = std::uniform_real_distribution<double>(0, 9)(gen);
    const auto ws = make_windows(series("a", v), WindowSpec{7, 3});
    ASSERT_EQ(ws.size(), 40u - 7 - 3 + 1);
    EXPECT_EQ(ws[0].start, 0u);
    for (const auto& w : ws) {
        std::vector<double> joined = w.x;
        joined.insert(joined.end(), w.y.begin(), w.y.end());
        EXPECT_EQ(joined, std::vector<double>(v.begin() + static_cast<long>(w.start),
                                              v.begin() + static_cast<long>(w.start + 10)));
        EXPECT_EQ(w.y_begin(), w.start + 7);
        EXPECT_EQ(w.y_end(), w.start + 10);
    }
}

TEST(Windows, MultiSeriesCanonicalOrder) {
    const auto ws = make_windows(std::vector<TimeSeries>{series("b", ramp(6)), series("a", ramp(7))}, WindowSpec{2, 1});
    ASSERT_EQ(ws.size(), 4u + 5u);
    EXPECT_EQ(ws.front().series_id, "a");
    for (std::size_t i = 1; i < ws.size(); ++i)
        EXPECT_TRUE(std::tie(ws[i - 1].series_id, ws[i - 1].start) < std::tie(ws[i].series_id, ws[i].start));
}

TEST(Windows, InvalidSpecThrows) {
    EXPECT_THROW(make_windows(series("a", ramp(5)), WindowSpec{0, 1}), ConfigError);
    EXPECT_THROW(make_windows(series("a", ramp(5)), WindowSpec{1, 0}), ConfigError);
}

TEST(LeaveOneOut, HorizonOneSixWindowsGiveFiveTrain) {
    const auto ws = make_windows(series("a", ramp(9)), WindowSpec{3, 1});
    ASSERT_EQ(ws.size(), 6u);
    const Split s = split_leave_one_out(ws);
    EXPECT_EQ(s.train.size(), 5u);
    ASSERT_EQ(s.test.size(), 1u);
    EXPECT_EQ(s.test[0].start, 5u);
    EXPECT_EQ(s.purged, 0u);
}

TEST(LeaveOneOut, OverlappingTargetsArePurged) {
    const auto ws = make_windows(series("a", ramp(10)), WindowSpec{3, 2});
    const Split s = split_leave_one_out(ws);
    ASSERT_EQ(s.test.size(), 1u);
    EXPECT_EQ(s.test[0].start, 5u);
    // Window 4 targets indices 7,8; the test targets 8,9.
    EXPECT_EQ(s.purged, 1u);
    EXPECT_EQ(s.train.size(), 4u);
}

TEST(LeaveOneOut, NoTargetLeakageProperty) {
    std::mt19937_64 gen(84);
    for (int t = 0; t < 50; ++t) {
        std::vector<TimeSeries> all;
        for (int i = 0; i < 5; ++i)
            all.push_back(series("s" + std::to_string(i), ramp(5 + gen() % 40)));
        const WindowSpec spec{1 + gen() % 6, 1 + gen() % 6};
        const auto ws = make_windows(all, spec);
        const Split s = split_leave_one_out(ws);
        for (const auto& test : s.test)
            for (const auto& tr : s.train) {
                if (tr.series_id != test.series_id) continue;
                EXPECT_TRUE(tr.y_end() <= test.y_begin() || tr.y_begin() >= test.y_end());
                EXPECT_LT(tr.start, test.start);
            }
        EXPECT_EQ(s.train.size() + s.test.size() + s.purged, ws.size());
    }
}

TEST(LeaveOneOut, OneTestWindowPerSeries) {
    std::vector<TimeSeries> all;
    for (int i = 0; i < 111; ++i) all.push_back(series("nn5-" + std::to_string(i), ramp(80)));
    const Split s = split_leave_one_out(make_windows(all, WindowSpec{9, 56}));
    EXPECT_EQ(s.test.size(), 111u);
}

TEST(LeaveOneOut, SingleWindowSeriesWarns) {
    const Split s = split_leave_one_out(make_windows(series("lonely", ramp(4)), WindowSpec{3, 1}));
    EXPECT_EQ(s.test.size(), 1u);
    EXPECT_TRUE(s.train.empty());
    ASSERT_EQ(s.warnings.size(), 1u);
    EXPECT_NE(s.warnings[0].find("lonely"), std::string::npos);
}

TEST(TailSplit, FractionAndChronology) {
    const auto ws = make_windows(series("a", ramp(103)), WindowSpec{3, 1});
    ASSERT_EQ(ws.size(), 100u);
    const Split s = split_tail_fraction(ws, 0.1);
    EXPECT_EQ(s.test.size(), 10u);
    EXPECT_EQ(s.train.size(), 90u);
    for (const auto& te : s.test)
        for (const auto& tr : s.train) EXPECT_GT(te.start, tr.start);
    EXPECT_EQ(split_tail_fraction(ws, 0.101).test.size(), 11u);
}

TEST(TailSplit, ZeroShotHasNoTrain) {
    const auto ws = make_windows(series("a", ramp(30)), WindowSpec{3, 1});
    const Split s = split_tail_fraction(ws, 0.1, true);
    EXPECT_TRUE(s.train.empty());
    EXPECT_EQ(s.test.size(), 3u);
    EXPECT_EQ(split_tail_count(ws, 4, true).test.size(), 4u);
    EXPECT_EQ(split_tail_count(ws, 4).train.size(), ws.size() - 4);
}

TEST(TailSplit, InvalidFractionThrows) {
    const auto ws = make_windows(series("a", ramp(30)), WindowSpec{3, 1});
    EXPECT_THROW(split_tail_fraction(ws, 0.0), ConfigError);
    EXPECT_THROW(split_tail_fraction(ws, 1.0), ConfigError);
    EXPECT_THROW(split_tail_count(ws, 0), ConfigError);
}

TEST(WindowFiles, RoundTripAndManifest) {
    const auto ws = make_windows(series("a", {0.1, 2, 3.25, 4, 5, 6}), WindowSpec{2, 2});
    const auto dir = scratch("windows");
    write_windows(dir / "w.tsv", ws);
    const auto back = read_windows(dir / "w.tsv");
    ASSERT_EQ(back.size(), ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
        EXPECT_EQ(back[i].x, ws[i].x);
        EXPECT_EQ(back[i].y, ws[i].y);
        EXPECT_EQ(back[i].start, ws[i].start);
    }
    const Split s = split_leave_one_out(ws);
    write_window_manifest(dir / "m.tsv", s, WindowSpec{2, 2});
    std::ifstream in(dir / "m.tsv");
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, "series_id\tstart\tn\th\tsplit");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, s.train.size() + s.test.size());
}

TEST(Registry, StudyRowsReproduceTheirWindowSizes) {
    struct Row {
        const char* name;
        std::size_t n, h;
        SplitStrategy split;
        bool zero_shot;
    };
    const std::vector<Row> expected{
        {"electricity-weekly", 65, 8, SplitStrategy::leave_one_out, false},
        {"m1-monthly", 15, 18, SplitStrategy::leave_one_out, false},
        {"m1-quarterly", 5, 8, SplitStrategy::leave_one_out, false},
        {"m3-monthly", 15, 18, SplitStrategy::leave_one_out, false},
        {"m3-quarterly", 5, 8, SplitStrategy::leave_one_out, false},
        {"nn5-daily", 9, 56, SplitStrategy::leave_one_out, false},
        {"nn5-weekly", 65, 8, SplitStrategy::leave_one_out, false},
        {"weather", 512, 96, SplitStrategy::tail_fraction, false},
        {"ili", 96, 24, SplitStrategy::tail_fraction, false},
        {"sf-traffic-weekly", 65, 8, SplitStrategy::leave_one_out, true},
        {"etth1", 24, 48, SplitStrategy::tail_fraction, true},
        {"etth2", 24, 48, SplitStrategy::tail_fraction, true},
    };
    for (const auto& r : expected) {
        const auto& e = find_dataset(r.name);
        EXPECT_EQ(e.spec.n, r.n) << r.name;
        EXPECT_EQ(e.spec.h, r.h) << r.name;
        EXPECT_EQ(e.split, r.split) << r.name;
        EXPECT_EQ(e.zero_shot, r.zero_shot) << r.name;
        EXPECT_FALSE(e.synthetic) << r.name;
    }
    EXPECT_EQ(find_dataset("weather").tail_fraction, 0.1);
    EXPECT_EQ(find_dataset("etth1").tail_fraction, 0.1);
    EXPECT_EQ(find_dataset("nn5-daily").reference_series, 111u);
}

TEST(Registry, UnknownNameListsCandidates) {
    try {
        find_dataset("nn5-hourly");
        FAIL();
    } catch (const UnknownDataset& e) {
        EXPECT_EQ(e.candidates().size(), dataset_registry().size());
        EXPECT_NE(std::string(e.what()).find("nn5-weekly"), std::string::npos);
    }
}

TEST(Registry, SplitForZeroShotDropsTrain) {
    const auto ws = make_windows(series("a", ramp(30)), WindowSpec{12, 4});
    EXPECT_TRUE(split_for(find_dataset("synth-level-shift"), ws).train.empty());
    EXPECT_FALSE(split_for(find_dataset("synth-seasonal"), ws).train.empty());
}

TEST(Synthetic, FamiliesAreSeededAndInRange) {
    for (auto f : {SyntheticFamily::constant, SyntheticFamily::linear_trend, SyntheticFamily::sinusoid,
                   SyntheticFamily::ar1, SyntheticFamily::random_walk_drift, SyntheticFamily::seasonal,
                   SyntheticFamily::level_shift}) {
        EXPECT_EQ(family_from_string(to_string(f)), f);
        CounterRng a(5), b(5);
        const auto va = generate_values(f, 40, a);
        EXPECT_EQ(va, generate_values(f, 40, b));
        for (double v : va) {
            EXPECT_GE(v, 0.0);
            EXPECT_EQ(v, std::round(v));
        }
    }
    EXPECT_EQ(pretraining_families().size(), 5u);
    EXPECT_THROW(family_from_string("chaos"), ConfigError);
}

TEST(Synthetic, SeasonalRepeatsWithinNoise) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CounterRng rng(seed);
        const auto v = generate_values(SyntheticFamily::seasonal, 60, rng);
        bool found = false;
        for (std::size_t p = 3; p <= 6 && !found; ++p) {
            bool ok = true;
            for (std::size_t i = p; i < v.size() && ok; ++i) ok = std::abs(v[i] - v[i - p]) <= 2.0;
            found = ok;
        }
        EXPECT_TRUE(found) << seed;
    }
}

TEST(Synthetic, DatasetIdsAndStreams) {
    const auto d = generate_dataset(SyntheticFamily::level_shift, 12, 30, 9, "synth-level-shift");
    ASSERT_EQ(d.size(), 12u);
    EXPECT_EQ(d[0].id, "synth-level-shift-00");
    EXPECT_EQ(d[11].id, "synth-level-shift-11");
    for (const auto& s : d) EXPECT_EQ(s.values.size(), 30u);
    CounterRng r(derive_key(9, 3));
    EXPECT_EQ(d[3].values, generate_values(SyntheticFamily::level_shift, 30, r));
}
