// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "lliam/checkpoint.hpp"
#include "lliam/errors.hpp"
#include "lliam/evaluate.hpp"
#include "lliam/lora_model.hpp"
#include "lliam/metrics.hpp"
#include "lliam/ops.hpp"
#include "lliam/run.hpp"
#include "lliam/train.hpp"
#include "oracles.hpp"

using namespace lliam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::path(LLIAM_TEST_TMP) / "train_eval" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ModelConfig small_config() {
    ModelConfig c = oracle::tiny_config(Tokenizer().vocab_size());
    c.max_context = 256;
    return c;
}

WindowPair window(std::vector<double> x, std::vector<double> y, std::string id = "s", std::size_t start = 0) {
    WindowPair w;
    w.x = std::move(x);
    w.y = std::move(y);
    w.series_id = std::move(id);
    w.start = start;
    return w;
}

ForecastResult result(ForecastStatus st, std::vector<double> v = {}) {
    ForecastResult r;
    r.status = st;
    r.values = std::move(v);
    return r;
}

std::vector<double> grads_of(const std::vector<Tensor>& params) {
    std::vector<double> out;
    for (const auto& p : params) {
        const auto g = p.grad();
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

} // namespace

// ---- metrics ----

TEST(Metrics, RmseHandValue) {
    const std::vector<double> y{0, 0}, yhat{3, 4};
    EXPECT_NEAR(rmse(y, yhat), std::sqrt(12.5), 1e-12);
}

TEST(Metrics, SmapeHandValue) {
    const std::vector<double> y{100}, yhat{50};
    EXPECT_NEAR(smape(y, yhat), 2.0 / 3.0, 1e-4);
    EXPECT_NEAR(smape(y, yhat), 0.6667, 1e-4);
}

TEST(Metrics, SmapeZeroOverZeroContributesNothing) {
    const std::vector<double> y{0, 2}, yhat{0, 2};
    EXPECT_EQ(smape(y, yhat), 0.0);
    const std::vector<double> a{0, 1}, b{0, 3};
    EXPECT_NEAR(smape(a, b), 2.0 / 2.0 * (2.0 / 4.0), 1e-15);
}

TEST(Metrics, SmapeBoundedAndSymmetric) {
    std::mt19937_64 gen(91);
    std::uniform_real_distribution<double> d(-1e3, 1e3);
    for (int i = 0; i < 100000; ++i) {
        std::vector<double> y{d(gen)}, yhat{d(gen)};
        if (i % 10 == 0) y[0] = 0.0;
        const double s = smape(y, yhat);
        ASSERT_GE(s, 0.0);
        ASSERT_LE(s, 2.0);
        ASSERT_EQ(s, smape(yhat, y));
    }
}

TEST(Metrics, LengthMismatchOrEmptyThrows) {
    const std::vector<double> a{1, 2}, b{1};
    EXPECT_THROW(rmse(a, b), ShapeError);
    EXPECT_THROW(smape(a, b), ShapeError);
    EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), ShapeError);
}

TEST(Metrics, MissingRate) {
    EXPECT_NEAR(missing_rate(111, 111 - 16), 14.414, 1e-3);
    EXPECT_EQ(missing_rate(10, 10), 0.0);
    EXPECT_EQ(missing_rate(10, 0), 100.0);
    EXPECT_THROW(missing_rate(0, 0), ConfigError);
    EXPECT_THROW(missing_rate(3, 4), ConfigError);
}

TEST(Metrics, PersistenceRepeatsLastLag) {
    EXPECT_EQ(persistence_baseline(window({1, 2, 7}, {0, 0, 0, 0})), (std::vector<double>{7, 7, 7, 7}));
}

// ---- summaries and reports ----

TEST(Summarize, AveragesOverDecodedWindowsOnly) {
    const std::vector<WindowPair> ws{window({1}, {2, 2}), window({1}, {4, 4}), window({5}, {5, 5}),
                                     window({1}, {1, 1})};
    const std::vector<ForecastResult> rs{result(ForecastStatus::exact, {2, 2}),
                                         result(ForecastStatus::trimmed, {4, 2}),
                                         result(ForecastStatus::anomalous_short, {5}),
                                         result(ForecastStatus::unparseable)};
    const auto m = summarize("d", "greedy", ws, rs);
    EXPECT_EQ(m.n_test, 4u);
    EXPECT_EQ(m.n_decoded, 2u);
    EXPECT_EQ(m.missing_rate, 50.0);
    EXPECT_NEAR(m.rmse, (0.0 + std::sqrt(2.0)) / 2.0, 1e-12);
    EXPECT_NEAR(m.smape, (0.0 + (2.0 / 2.0) * (2.0 / 6.0)) / 2.0, 1e-12);
    EXPECT_NEAR(m.persistence_rmse, (1.0 + 3.0) / 2.0, 1e-12);
    EXPECT_EQ(m.beats_persistence, 2u);
    EXPECT_EQ(m.status_counts, (std::array<std::size_t, 4>{1, 1, 1, 1}));
}

TEST(Summarize, MissingRateMatchesStatusCounts) {
    std::mt19937_64 gen(92);
    for (int t = 0; t < 50; ++t) {
        std::vector<WindowPair> ws;
        std::vector<ForecastResult> rs;
        const std::size_t n = 1 + gen() % 30;
        for (std::size_t i = 0; i < n; ++i) {
            ws.push_back(window({1, 2}, {3, 4}, "s", i));
            const auto st = static_cast<ForecastStatus>(gen() % 4);
            rs.push_back(result(st, st == ForecastStatus::exact || st == ForecastStatus::trimmed
                                        ? std::vector<double>{3, 5}
                                        : std::vector<double>{}));
        }
        const auto m = summarize("d", "greedy", ws, rs);
        const auto bad = m.status_counts[2] + m.status_counts[3];
        EXPECT_DOUBLE_EQ(m.missing_rate, 100.0 * static_cast<double>(bad) / static_cast<double>(n));
        EXPECT_EQ(m.n_decoded + bad, n);
    }
}

TEST(Summarize, AnomalousShortMovesMissingRateOnly) {
    std::vector<WindowPair> ws{window({1}, {2, 3}), window({4}, {4, 4})};
    std::vector<ForecastResult> rs{result(ForecastStatus::exact, {2, 2}), result(ForecastStatus::exact, {5, 4})};
    const auto before = summarize("d", "g", ws, rs);
    ws.push_back(window({9}, {9, 9}));
    rs.push_back(result(ForecastStatus::anomalous_short, {9}));
    const auto after = summarize("d", "g", ws, rs);
    EXPECT_NE(after.missing_rate, before.missing_rate);
    EXPECT_EQ(after.rmse, before.rmse);
    EXPECT_EQ(after.smape, before.smape);
}

TEST(Summarize, TiesDoNotBeatPersistence) {
    const std::vector<WindowPair> ws{window({3}, {4})};
    const auto m = summarize("d", "g", ws, {result(ForecastStatus::exact, {3})});
    EXPECT_EQ(m.beats_persistence, 0u);
}

TEST(Summarize, NothingDecodedGivesNaN) {
    const std::vector<WindowPair> ws{window({3}, {4})};
    const auto m = summarize("d", "g", ws, {result(ForecastStatus::unparseable)});
    EXPECT_TRUE(std::isnan(m.rmse));
    EXPECT_TRUE(std::isnan(m.smape));
    EXPECT_EQ(m.missing_rate, 100.0);
    EXPECT_THROW(summarize("d", "g", ws, {}), ShapeError);
}

TEST(Report, AverageOfAveragesPerSetting) {
    DatasetMetrics a, b, c;
    a.dataset = "a";
    a.setting = "T=10";
    a.smape = 0.1;
    a.missing_rate = 10;
    b.dataset = "b";
    b.setting = "T=10";
    b.smape = 0.3;
    b.missing_rate = 0;
    c.dataset = "a";
    c.setting = "T=20";
    c.smape = 0.9;
    const auto r = make_report({a, b, c});
    ASSERT_EQ(r.averages.size(), 2u);
    EXPECT_EQ(r.averages[0].setting, "T=10");
    EXPECT_NEAR(r.averages[0].smape, 0.2, 1e-15);
    EXPECT_NEAR(r.averages[0].missing_rate, 5.0, 1e-15);
    EXPECT_EQ(r.averages[1].smape, 0.9);
}

TEST(Report, FilesHaveOneLinePerRowAndAuditSkipsExact) {
    const auto dir = scratch("report");
    const std::vector<WindowPair> ws{window({1}, {1}), window({1}, {1}, "s", 1), window({1}, {1}, "s", 2)};
    std::vector<ForecastResult> rs{result(ForecastStatus::exact, {1}), result(ForecastStatus::unparseable),
                                   result(ForecastStatus::trimmed, {1})};
    rs[1].raw_text = "a\tb\nc";
    const auto report = make_report({summarize("d", "greedy", ws, rs)});
    write_report(dir / "report.tsv", report);
    write_audit(dir / "audit.tsv", "d", "greedy", ws, rs, false);
    write_audit(dir / "audit.tsv", "d", "T=10", ws, rs, true);

    const auto lines = [](const fs::path& p) {
        std::ifstream in(p);
        std::vector<std::string> out;
        for (std::string l; std::getline(in, l);) out.push_back(l);
        return out;
    };
    const auto rep = lines(dir / "report.tsv");
    ASSERT_GE(rep.size(), 3u);
    EXPECT_EQ(rep[1].substr(0, 9), "d\tgreedy\t");
    EXPECT_EQ(rep[2].substr(0, 12), "avg-of-avgs\t");
    const auto audit = lines(dir / "audit.tsv");
    ASSERT_EQ(audit.size(), 1u + 2u * 2u);
    EXPECT_NE(audit[1].find("unparseable\ta\\tb\\nc"), std::string::npos);
}

// ---- training samples ----

TEST(TrainingSample, ShiftAndAnswerMask) {
    const Tokenizer tok;
    const std::vector<double> x{1, 2, 3}, y{4, 5};
    const auto s = build_training_sample(tok, x, y, 512);
    const std::string prompt = prompt_text(x, 2);
    const std::string answer = "4, 5";
    ASSERT_EQ(s.inputs.size(), 1 + prompt.size() + answer.size());
    EXPECT_EQ(s.inputs[0], Vocabulary::kBos);
    EXPECT_EQ(s.targets.back(), Vocabulary::kEos);
    for (std::size_t t = 0; t + 1 < s.inputs.size(); ++t) EXPECT_EQ(s.inputs[t + 1], s.targets[t]);
    EXPECT_EQ(s.counted, answer.size() + 1);
    // Exactly the answer characters and EOS count.
    for (std::size_t t = 0; t < s.targets.size(); ++t) EXPECT_EQ(s.ignore[t], t < prompt.size());
    EXPECT_EQ(tok.decode(TokenSequence(s.targets.begin() + static_cast<long>(prompt.size()), s.targets.end())),
              answer);
}

TEST(TrainingSample, FullSequenceCountsEverything) {
    const Tokenizer tok;
    const std::vector<double> x{1, 2}, y{3};
    const auto s = build_training_sample(tok, x, y, 512, LossMask::full_sequence);
    EXPECT_EQ(s.counted, s.targets.size());
}

TEST(TrainingSample, OverflowNamesWindow) {
    const Tokenizer tok;
    try {
        build_training_sample(tok, window({1, 2, 3}, {4}, "ser", 7), 20);
        FAIL();
    } catch (const ContextOverflow& e) {
        EXPECT_NE(std::string(e.what()).find("ser@7"), std::string::npos);
    }
}

TEST(TrainingSample, IgnoredTargetsNeverMoveTheLoss) {
    const Tokenizer tok;
    const Model model = Model::init(small_config(), 5);
    std::mt19937_64 gen(93);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> x(3 + t % 4), y(1 + t % 3);
        for (auto& v : x) v = static_cast<double>(gen() % 100);
        for (auto& v : y) v = static_cast<double>(gen() % 100);
        auto s = build_training_sample(tok, x, y, 256);
        const Tensor logits = model.forward(s.inputs);
        const double base = cross_entropy(logits, s.targets, s.ignore, Reduction::sum).item();
        auto perturbed = s.targets;
        for (std::size_t i = 0; i < perturbed.size(); ++i)
            if (s.ignore[i]) perturbed[i] = static_cast<TokenId>(4 + gen() % (tok.vocab_size() - 4));
        EXPECT_EQ(cross_entropy(logits, perturbed, s.ignore, Reduction::sum).item(), base);
        auto answer_changed = s.targets;
        const std::size_t last = answer_changed.size() - 2;
        answer_changed[last] = answer_changed[last] == 4 ? 5 : 4;
        EXPECT_NE(cross_entropy(logits, answer_changed, s.ignore, Reduction::sum).item(), base);
    }
}

// ---- loop mechanics ----

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.max_iters = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.max_iters = 1;
    c.batch_size = 128;
    c.micro_batch = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c.micro_batch = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.micro_batch = 2;
    EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, LearningRateSchedule) {
    TrainConfig c;
    c.lr = 1.0;
    c.max_iters = 100;
    EXPECT_EQ(c.lr_at(1), 1.0);
    EXPECT_EQ(c.lr_at(100), 1.0);
    c.warmup_iters = 10;
    EXPECT_DOUBLE_EQ(c.lr_at(5), 0.5);
    EXPECT_DOUBLE_EQ(c.lr_at(10), 1.0);
    c.cosine_decay = true;
    c.min_lr_ratio = 0.1;
    EXPECT_NEAR(c.lr_at(55), 0.1 + 0.9 * 0.5, 1e-12);
    EXPECT_NEAR(c.lr_at(100), 0.1, 1e-12);
    for (std::size_t s = 11; s < 100; ++s) EXPECT_GE(c.lr_at(s), c.lr_at(s + 1));
}

TEST(TrainLoop, MicroBatchAccumulationMatchesFullBatch) {
    const Tokenizer tok;
    const Model ref = Model::init(small_config(), 11);
    SyntheticCorpus corpus;
    corpus.seed = 12;
    TrainConfig cfg;
    cfg.batch_size = 128;
    cfg.max_iters = 1;
    cfg.lr = 1e-3;

    Model a = ref.clone(), b = ref.clone();
    cfg.micro_batch = 2;
    const auto ra = pretrain_tiny(a, tok, corpus, cfg);
    cfg.micro_batch = 128;
    const auto rb = pretrain_tiny(b, tok, corpus, cfg);

    EXPECT_EQ(ra.micro_steps, 64u);
    EXPECT_EQ(ra.optimizer_steps, 1u);
    EXPECT_EQ(rb.micro_steps, 1u);
    EXPECT_NEAR(ra.final_loss(), rb.final_loss(), 1e-10);
    const auto ga = grads_of(a.base_parameters()), gb = grads_of(b.base_parameters());
    ASSERT_EQ(ga.size(), gb.size());
    EXPECT_LE(oracle::max_abs_diff(ga, gb), 1e-10);
}

TEST(TrainLoop, ShuffledIndexIsAPermutationPerEpoch) {
    for (std::size_t n : {1u, 2u, 7u, 50u}) {
        for (std::size_t epoch = 0; epoch < 3; ++epoch) {
            std::set<std::size_t> seen;
            for (std::size_t k = epoch * n; k < (epoch + 1) * n; ++k) seen.insert(shuffled_index(k, n, 4));
            EXPECT_EQ(seen.size(), n);
            EXPECT_EQ(*seen.rbegin(), n - 1);
        }
    }
    EXPECT_THROW(shuffled_index(0, 0, 1), ConfigError);
}

TEST(Pretrain, LossFallsOnConstantFamily) {
    const Tokenizer tok;
    Model model = Model::init(small_config(), 21);
    SyntheticCorpus corpus;
    corpus.seed = 22;
    corpus.families = {SyntheticFamily::constant};
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.micro_batch = 2;
    cfg.max_iters = 100;
    cfg.lr = 3e-3;
    const auto r = pretrain_tiny(model, tok, corpus, cfg);
    ASSERT_EQ(r.log.size(), 100u);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        head += r.log[i].loss;
        tail += r.log[90 + i].loss;
    }
    EXPECT_LT(tail, head);
}

TEST(Pretrain, FixedSeedIsBitwiseReproducible) {
    const Tokenizer tok;
    SyntheticCorpus corpus;
    corpus.seed = 31;
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.micro_batch = 1;
    cfg.max_iters = 5;
    Model a = Model::init(small_config(), 30), b = Model::init(small_config(), 30);
    const auto ra = pretrain_tiny(a, tok, corpus, cfg);
    const auto rb = pretrain_tiny(b, tok, corpus, cfg);
    EXPECT_EQ(base_digest(a), base_digest(b));
    for (std::size_t i = 0; i < ra.log.size(); ++i) EXPECT_EQ(ra.log[i].loss, rb.log[i].loss);
}

TEST(Pretrain, RejectsModelWithAdapters) {
    Model m = Model::init(small_config(), 1);
    LoraConfig lc;
    lc.rank = 4;
    inject_lora(m, lc, 2);
    EXPECT_THROW(pretrain_tiny(m, Tokenizer(), SyntheticCorpus{}, TrainConfig{}), ConfigError);
}

TEST(Finetune, BaseStaysFrozenAndAdaptersMove) {
    const Tokenizer tok;
    Model m = Model::init(small_config(), 41);
    LoraConfig lc;
    lc.rank = 4;
    inject_lora(m, lc, 42);
    const std::string before = base_digest(m);
    std::vector<double> b_before;
    for (const auto& t : m.adapter_tensors()) b_before.insert(b_before.end(), t.second.data().begin(), t.second.data().end());

    std::vector<WindowPair> ws;
    for (std::size_t i = 0; i < 6; ++i) ws.push_back(window({1, 2, 3}, {4}, "s", i));
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.micro_batch = 1;
    cfg.max_iters = 20;
    cfg.lr = 1e-2;
    const auto r = finetune_lora(m, tok, ws, cfg);
    EXPECT_EQ(r.optimizer_steps, 20u);
    EXPECT_EQ(base_digest(m), before);
    std::vector<double> b_after;
    for (const auto& t : m.adapter_tensors()) b_after.insert(b_after.end(), t.second.data().begin(), t.second.data().end());
    EXPECT_GT(oracle::max_abs_diff(b_before, b_after), 0.0);
}

TEST(Finetune, RequiresAdaptersAndWindows) {
    Model m = Model::init(small_config(), 1);
    EXPECT_THROW(finetune_lora(m, Tokenizer(), {window({1}, {1})}, TrainConfig{}), ConfigError);
    LoraConfig lc;
    lc.rank = 4;
    inject_lora(m, lc, 2);
    EXPECT_THROW(finetune_lora(m, Tokenizer(), {}, TrainConfig{}), ConfigError);
}

// ---- prediction ----

TEST(Predict, TokenBudgetHandValue) {
    // Widest lag "333": 3 values * (3 + 2 digits + 2 separator) + 2.
    EXPECT_EQ(token_budget(window({1, 22, 333}, {0}), 3), 23u);
}

TEST(Predict, WindowKeysDifferAcrossWindows) {
    std::set<std::uint64_t> keys;
    for (std::size_t s = 0; s < 50; ++s) keys.insert(window_key(7, window({1}, {1}, "a", s)));
    keys.insert(window_key(7, window({1}, {1}, "b", 0)));
    EXPECT_EQ(keys.size(), 51u);
    EXPECT_EQ(window_key(7, window({1}, {1}, "a", 3)), window_key(7, window({9}, {9}, "a", 3)));
}

TEST(Predict, EmptyInEmptyOut) {
    const Model m = Model::init(small_config(), 1);
    EXPECT_TRUE(predict_batch(m, Tokenizer(), {}, PredictConfig{}).empty());
}

TEST(Predict, ThreadCountNeverChangesOutput) {
    const Tokenizer tok;
    const Model m = Model::init(small_config(), 51);
    std::vector<WindowPair> ws;
    for (std::size_t i = 0; i < 7; ++i) ws.push_back(window({1, 2, 3, static_cast<double>(i)}, {5, 6}, "s", i));
    for (bool greedy : {true, false}) {
        PredictConfig pc;
        pc.generation.greedy = greedy;
        pc.generation.temperature = 1.0;
        pc.generation.seed = 9;
        pc.threads = 1;
        const auto one = predict_batch(m, tok, ws, pc);
        pc.threads = 3;
        const auto three = predict_batch(m, tok, ws, pc);
        const auto again = predict_batch(m, tok, ws, pc);
        ASSERT_EQ(one.size(), ws.size());
        for (std::size_t i = 0; i < ws.size(); ++i) {
            EXPECT_EQ(one[i].raw_text, three[i].raw_text);
            EXPECT_EQ(three[i].raw_text, again[i].raw_text);
            EXPECT_EQ(one[i].status, three[i].status);
        }
    }
}

TEST(Predict, ContextOverflowIsUnparseable) {
    const Tokenizer tok;
    const Model m = Model::init(small_config(), 52);
    const auto r = predict_batch(m, tok, {window(std::vector<double>(100, 55), {1})}, PredictConfig{});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].status, ForecastStatus::unparseable);
}

// ---- run bookkeeping ----

TEST(RunManifest, RoundTripAndDeterministicText) {
    const auto dir = scratch("manifest");
    {
        std::ofstream(dir / "in.txt") << "hello";
    }
    RunManifest m("evaluate");
    m.set_config("seed", "1");
    m.set_config("lr", "0.1");
    m.set_config("seed", "2");
    m.add("note", "two words");
    m.record_read(dir / "in.txt", "test-windows");
    m.record_write(dir / "out.txt", "report");
    ASSERT_EQ(m.config().size(), 2u);
    EXPECT_EQ(m.config_value("seed"), "2");
    EXPECT_EQ(m.reads()[0].sha256, file_sha256(dir / "in.txt"));
    EXPECT_EQ(file_sha256(dir / "in.txt"), "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
    m.write(dir / "run-manifest.txt");
    const auto back = RunManifest::load(dir / "run-manifest.txt");
    EXPECT_EQ(back.to_text(false), m.to_text(false));
    EXPECT_EQ(back.command(), "evaluate");
    EXPECT_EQ(back.reads()[0].role, "test-windows");
    EXPECT_EQ(m.to_text(false).find("created"), std::string::npos);
}

TEST(DirectoryLock, ExclusiveUntilReleased) {
    const auto dir = scratch("lock");
    {
        DirectoryLock lock(dir);
        EXPECT_TRUE(fs::exists(lock.path()));
        EXPECT_THROW(DirectoryLock second(dir), LockError);
    }
    EXPECT_FALSE(fs::exists(dir / ".lock"));
    EXPECT_NO_THROW(DirectoryLock again(dir));
}
