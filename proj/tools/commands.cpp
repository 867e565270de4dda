// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "lliam/checkpoint.hpp"
#include "lliam/data.hpp"
#include "lliam/digest.hpp"
#include "lliam/errors.hpp"
#include "lliam/evaluate.hpp"
#include "lliam/gradcheck.hpp"
#include "lliam/lora_model.hpp"
#include "lliam/run.hpp"
#include "lliam/synthetic.hpp"
#include "lliam/train.hpp"

namespace lliam::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRunManifest = "run-manifest.txt";
constexpr const char* kVocabFile = "vocab.txt";

struct Global {
    std::string config_path;
    std::string data_root;
};

struct SynthOptions {
    std::string out;
    std::uint64_t seed = 2024;
    std::size_t count = 100;
    std::size_t length = 30;
};

struct PrepareOptions {
    std::vector<std::string> datasets;
    std::string out = "runs/prepared";
    double k = 3.0;
};

struct PretrainOptions {
    std::string out = "runs/base";
    std::size_t iters = 2000;
    std::size_t batch = 8;
    std::size_t micro_bs = 2;
    double lr = 1e-3;
    std::size_t warmup = 100;
    double min_lr_ratio = 0.1;
    double grad_clip = 1.0;
    double weight_decay = 0.01;
    std::uint64_t seed = 1;
    std::uint64_t corpus_seed = 7;
    std::size_t layers = 4, heads = 4, d_model = 128, d_ff = 384, max_context = 384;
    std::size_t n_min = 8, n_max = 16, h_min = 1, h_max = 6;
    std::size_t log_every = 50;
};

struct FinetuneOptions {
    std::string base;
    std::string prepared = "runs/prepared";
    std::vector<std::string> datasets;
    std::string out = "runs/finetune";
    std::size_t rank = 8;
    double alpha = 16.0;
    double lora_dropout = 0.05;
    double lr = 3e-4;
    std::size_t batch = 128;
    std::size_t micro_bs = 2;
    std::size_t iters = 2000;
    std::size_t warmup = 0;
    double grad_clip = 0.0;
    double weight_decay = 0.01;
    std::uint64_t seed = 3;
    bool merge = false;
    std::size_t log_every = 50;
};

struct EvaluateOptions {
    std::string model;
    std::string adapter;
    std::string prepared = "runs/prepared";
    std::vector<std::string> datasets;
    std::string out = "runs/eval";
    std::vector<double> temperatures;
    bool greedy = false;
    bool zero_shot = false;
    bool no_mitigation = false;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct GradcheckCliOptions {
    double tolerance = 1e-3;
    double step = 1e-5;
};

std::string normalize_key(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

std::string fmt_real(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::vector<std::pair<std::string, std::string>> resolved_options(const CLI::App* sub) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const CLI::Option* opt : sub->get_options()) {
        std::string name = opt->get_name();
        if (name == "--help" || name.empty()) continue;
        name.erase(0, name.find_first_not_of('-'));
        std::string value;
        if (opt->count() > 0) {
            for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
            if (opt->get_type_size() == 0 && value.empty()) value = "true";
        } else {
            value = opt->get_default_str();
        }
        out.emplace_back(name, value);
    }
    return out;
}

void snapshot_config(RunManifest& m, const CLI::App* app, const CLI::App* sub) {
    for (const auto& [k, v] : resolved_options(app)) m.set_config(k, v);
    for (const auto& [k, v] : resolved_options(sub)) m.set_config(sub->get_name() + "." + k, v);
}

void add_registry_row(RunManifest& m, const DatasetRegistryEntry& e) {
    std::ostringstream os;
    os << e.name << " n=" << e.spec.n << " h=" << e.spec.h << " split=" << to_string(e.split);
    if (e.split == SplitStrategy::tail_fraction) os << " fraction=" << e.tail_fraction;
    os << " zero_shot=" << (e.zero_shot ? 1 : 0) << " frequency=" << std::quoted(e.frequency);
    m.add("registry", os.str());
}

fs::path locate_series_file(const fs::path& root, const DatasetRegistryEntry& e) {
    for (const char* ext : {".tsv", ".tsf"}) {
        const fs::path p = root / (e.file + ext);
        if (fs::exists(p)) return p;
    }
    throw ParseError("no series file for dataset " + e.name + " under " + root.string() + " (expected " + e.file +
                     ".tsv or " + e.file + ".tsf)");
}

Tokenizer load_tokenizer(const fs::path& dir) {
    const fs::path p = dir / kVocabFile;
    return fs::exists(p) ? Tokenizer(Vocabulary::load(p)) : Tokenizer();
}

void write_loss_log(const fs::path& path, const TrainResult& r) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << "step\tloss\tlr\tgrad_norm\ttokens\n";
    for (const auto& s : r.log)
        out << s.step << '\t' << fmt_real(s.loss) << '\t' << fmt_real(s.lr) << '\t' << fmt_real(s.grad_norm) << '\t'
            << s.tokens << '\n';
}

StepCallback progress(std::ostream& out, std::size_t every, const char* tag) {
    auto sum = std::make_shared<double>(0.0);
    auto n = std::make_shared<std::size_t>(0);
    return [&out, every, tag, sum, n](const StepRecord& r) {
        *sum += r.loss;
        ++*n;
        if (every && r.step % every == 0) {
            out << tag << " step " << r.step << " loss " << std::fixed << std::setprecision(4) << *sum / *n
                << " lr " << std::scientific << std::setprecision(2) << r.lr << std::defaultfloat << '\n'
                << std::flush;
            *sum = 0.0;
            *n = 0;
        }
    };
}

// --- commands ---------------------------------------------------------------

int cmd_synth(const Global& g, const SynthOptions& o, std::ostream& out) {
    const fs::path dir = o.out.empty() ? fs::path(g.data_root) : fs::path(o.out);
    DirectoryLock lock(dir);
    for (const auto& e : dataset_registry()) {
        if (!e.synthetic) continue;
        const auto family = family_from_string([&] {
            std::string f = e.name.substr(std::string("synth-").size());
            std::replace(f.begin(), f.end(), '-', '_');
            return f;
        }());
        const auto series = generate_dataset(family, o.count, o.length, derive_key(o.seed, static_cast<std::uint64_t>(family)), e.name);
        const fs::path p = dir / (e.file + ".tsv");
        write_series(p, series);
        out << "wrote " << p.string() << " (" << series.size() << " series of " << o.length << " values, family "
            << to_string(family) << ")\n";
    }
    return kSuccess;
}

int cmd_prepare(const Global& g, const PrepareOptions& o, const CLI::App* app, const CLI::App* sub, std::ostream& out) {
    if (o.datasets.empty()) throw ConfigError("prepare: no datasets selected (use --datasets)");
    std::vector<const DatasetRegistryEntry*> entries;
    for (const auto& name : o.datasets) entries.push_back(&find_dataset(name));
    const fs::path root(g.data_root);
    const fs::path out_dir(o.out);
    DirectoryLock lock(out_dir);

    out << std::left << std::setw(20) << "dataset" << std::right << std::setw(8) << "series" << std::setw(6) << "n"
        << std::setw(6) << "h" << std::setw(10) << "windows" << std::setw(8) << "train" << std::setw(7) << "test"
        << std::setw(8) << "purged" << std::setw(9) << "clamped" << '\n';
    for (const auto* e : entries) {
        RunManifest manifest("prepare");
        snapshot_config(manifest, app, sub);
        add_registry_row(manifest, *e);
        manifest.add("note", "anomaly mitigation: median/MAD clamp, k=" + fmt_real(o.k));

        const fs::path src = locate_series_file(root, *e);
        manifest.record_read(src, "series");
        auto series = load_series(src);
        std::size_t clamped = 0;
        for (auto& s : series) {
            auto r = mitigate_anomalies_detailed(s, o.k);
            clamped += r.clamped;
            s = std::move(r.series);
        }
        const auto windows = make_windows(series, e->spec);
        const Split split = split_for(*e, windows);
        for (const auto& w : split.warnings) manifest.add("warning", w);

        const fs::path dir = out_dir / e->name;
        fs::create_directories(dir);
        write_series(dir / "series.tsv", series);
        manifest.record_write(dir / "series.tsv", "mitigated-series");
        write_window_manifest(dir / "windows.tsv", split, e->spec);
        manifest.record_write(dir / "windows.tsv", "window-manifest");
        if (!e->zero_shot) {
            write_windows(dir / "train.tsv", split.train);
            manifest.record_write(dir / "train.tsv", "train-windows");
        } else if (fs::exists(dir / "train.tsv")) {
            fs::remove(dir / "train.tsv");
        }
        write_windows(dir / "test.tsv", split.test);
        manifest.record_write(dir / "test.tsv", "test-windows");
        manifest.write(dir / kRunManifest);

        out << std::left << std::setw(20) << e->name << std::right << std::setw(8) << series.size() << std::setw(6)
            << e->spec.n << std::setw(6) << e->spec.h << std::setw(10) << windows.size() << std::setw(8)
            << (e->zero_shot ? std::string("-") : std::to_string(split.train.size())) << std::setw(7)
            << split.test.size() << std::setw(8) << split.purged << std::setw(9) << clamped << '\n';
    }
    return kSuccess;
}

int cmd_pretrain(const PretrainOptions& o, const CLI::App* app, const CLI::App* sub, std::ostream& out) {
    if (o.iters == 0) throw ConfigError("pretrain: --iters 0 leaves nothing to train");
    const Tokenizer tok;
    ModelConfig mc;
    mc.n_layers = o.layers;
    mc.n_heads = o.heads;
    mc.d_model = o.d_model;
    mc.d_ff = o.d_ff;
    mc.max_context = o.max_context;
    mc.vocab_size = tok.vocab_size();
    mc.validate();

    SyntheticCorpus corpus;
    corpus.seed = o.corpus_seed;
    corpus.n_min = o.n_min;
    corpus.n_max = o.n_max;
    corpus.h_min = o.h_min;
    corpus.h_max = o.h_max;

    TrainConfig tc;
    tc.lr = o.lr;
    tc.batch_size = o.batch;
    tc.micro_batch = o.micro_bs;
    tc.max_iters = o.iters;
    tc.seed = o.seed;
    tc.warmup_iters = o.warmup;
    tc.cosine_decay = true;
    tc.min_lr_ratio = o.min_lr_ratio;
    tc.grad_clip = o.grad_clip;
    tc.weight_decay = o.weight_decay;
    tc.validate();

    const fs::path dir(o.out);
    DirectoryLock lock(dir);
    RunManifest manifest("pretrain");
    snapshot_config(manifest, app, sub);
    manifest.add("seed", "init " + std::to_string(o.seed));
    manifest.add("seed", "corpus " + std::to_string(o.corpus_seed));
    std::string fams;
    for (auto f : corpus.families) fams += (fams.empty() ? "" : ",") + to_string(f);
    manifest.add("corpus", "families=" + fams + " n=" + std::to_string(o.n_min) + ".." + std::to_string(o.n_max) +
                               " h=" + std::to_string(o.h_min) + ".." + std::to_string(o.h_max) + " loss=full-sequence");
    manifest.add("template_sha256", template_sha256());

    Model model = Model::init(mc, o.seed);
    out << "pre-training " << model.parameter_count() << " parameters for " << o.iters << " iterations\n";
    const TrainResult r = pretrain_tiny(model, tok, corpus, tc, progress(out, o.log_every, "pretrain"));

    save_model(model, dir, "base", {{"train.iterations", std::to_string(r.optimizer_steps)}});
    tok.vocabulary().save(dir / kVocabFile);
    write_loss_log(dir / "loss.tsv", r);
    manifest.add("digest", "base " + base_digest(model));
    manifest.add("result", "final_loss " + fmt_real(r.final_loss()) + " optimizer_steps " + std::to_string(r.optimizer_steps));
    manifest.record_write(dir, "base-checkpoint");
    manifest.write(dir / kRunManifest);
    out << "final loss " << r.final_loss() << ", checkpoint " << dir.string() << " (digest " << base_digest(model)
        << ")\n";
    return kSuccess;
}

int cmd_finetune(const FinetuneOptions& o, const CLI::App* app, const CLI::App* sub, std::ostream& out) {
    if (o.base.empty()) throw ConfigError("finetune: --base is required");
    if (o.datasets.empty()) throw ConfigError("finetune: no datasets selected (use --datasets)");
    if (o.iters == 0) throw ConfigError("finetune: --iters 0 leaves nothing to train");
    LoraConfig lc;
    lc.rank = o.rank;
    lc.alpha = o.alpha;
    lc.dropout = o.lora_dropout;
    TrainConfig tc;
    tc.lr = o.lr;
    tc.batch_size = o.batch;
    tc.micro_batch = o.micro_bs;
    tc.max_iters = o.iters;
    tc.seed = o.seed;
    tc.warmup_iters = o.warmup;
    tc.grad_clip = o.grad_clip;
    tc.weight_decay = o.weight_decay;
    tc.validate();

    std::vector<const DatasetRegistryEntry*> entries;
    for (const auto& name : o.datasets) {
        const auto& e = find_dataset(name);
        if (e.zero_shot) throw ConfigError("finetune: dataset " + name + " is reserved for zero-shot evaluation");
        entries.push_back(&e);
    }

    const fs::path dir(o.out);
    DirectoryLock lock(dir);
    RunManifest manifest("finetune");
    snapshot_config(manifest, app, sub);
    manifest.add("lora", "rank=" + std::to_string(lc.rank) + " alpha=" + fmt_real(lc.alpha) +
                             " dropout=" + fmt_real(lc.dropout) + " scale=" + fmt_real(lc.scale()) + " targets=query,value");
    manifest.add("seed", "finetune " + std::to_string(o.seed));
    manifest.add("template_sha256", template_sha256());

    const fs::path base_dir(o.base);
    manifest.record_read(base_dir, "base-checkpoint");
    Model model = load_model(base_dir);
    const Tokenizer tok = load_tokenizer(base_dir);
    const std::string digest_before = base_digest(model);
    manifest.add("digest", "base " + digest_before);

    std::vector<WindowPair> pooled;
    for (const auto* e : entries) {
        add_registry_row(manifest, *e);
        const fs::path p = fs::path(o.prepared) / e->name / "train.tsv";
        if (!fs::exists(p)) throw ParseError("missing train partition " + p.string() + " (run prepare first)");
        manifest.record_read(p, "train-windows");
        manifest.add("train-dataset", e->name);
        auto ws = read_windows(p);
        for (auto& w : ws) w.series_id = e->name + "/" + w.series_id;
        pooled.insert(pooled.end(), ws.begin(), ws.end());
    }
    if (pooled.empty()) throw ConfigError("finetune: the selected datasets have no training windows");

    const std::size_t adapters = inject_lora(model, lc, derive_key(o.seed, 0xada));
    std::size_t trainable = 0;
    for (const auto& t : model.adapter_parameters()) trainable += t.numel();
    out << "fine-tuning " << adapters << " adapters (" << trainable << " trainable of " << model.parameter_count()
        << " parameters, " << std::setprecision(3) << 100.0 * static_cast<double>(trainable) /
                                                            static_cast<double>(model.parameter_count())
        << std::defaultfloat << "%) on " << pooled.size() << " windows\n";
    const TrainResult r = finetune_lora(model, tok, pooled, tc, progress(out, o.log_every, "finetune"));

    save_adapters(model, lc, dir / "adapter");
    manifest.record_write(dir / "adapter", "adapter-checkpoint");
    write_loss_log(dir / "loss.tsv", r);
    manifest.add("digest", "base-after " + base_digest(model));
    manifest.add("result", "final_loss " + fmt_real(r.final_loss()) + " optimizer_steps " +
                               std::to_string(r.optimizer_steps) + " micro_steps " + std::to_string(r.micro_steps));
    if (o.merge) {
        const Model merged = merge_lora(model);
        save_model(merged, dir / "merged", "merged", {{"merged_from", digest_before}});
        tok.vocabulary().save(dir / "merged" / kVocabFile);
        manifest.add("digest", "merged " + base_digest(merged));
        manifest.record_write(dir / "merged", "merged-checkpoint");
    }
    manifest.write(dir / kRunManifest);
    out << "final loss " << r.final_loss() << ", adapters in " << (dir / "adapter").string() << '\n';
    return kSuccess;
}

// Datasets that any run behind `dir` (the checkpoint or its parent run) trained on.
std::set<std::string> trained_datasets(const fs::path& dir) {
    std::set<std::string> names;
    for (const fs::path& p : {dir / kRunManifest, dir.parent_path() / kRunManifest}) {
        if (!fs::exists(p)) continue;
        const auto m = RunManifest::load(p);
        for (const auto& [tag, text] : m.records())
            if (tag == "train-dataset") names.insert(text);
    }
    return names;
}

int cmd_evaluate(const EvaluateOptions& o, const CLI::App* app, const CLI::App* sub, std::ostream& out) {
    if (o.model.empty()) throw ConfigError("evaluate: --model is required");
    if (o.datasets.empty()) throw ConfigError("evaluate: no datasets selected (use --datasets)");
    for (double t : o.temperatures)
        if (!(t > 0.0)) throw ConfigError("evaluate: temperatures must be positive");
    std::vector<const DatasetRegistryEntry*> entries;
    for (const auto& name : o.datasets) {
        const auto& e = find_dataset(name);
        if (o.zero_shot && !e.zero_shot)
            throw ConfigError("evaluate --zero-shot: dataset " + name + " is not a zero-shot dataset");
        entries.push_back(&e);
    }

    std::vector<std::pair<std::string, GenerationConfig>> settings;
    if (o.greedy || o.temperatures.empty()) {
        GenerationConfig gc;
        gc.greedy = true;
        settings.emplace_back("greedy", gc);
    } else {
        for (double t : o.temperatures) {
            GenerationConfig gc;
            gc.greedy = false;
            gc.temperature = t;
            gc.seed = o.seed;
            std::ostringstream name;
            name << "T=" << t;
            settings.emplace_back(name.str(), gc);
        }
    }

    const fs::path dir(o.out);
    DirectoryLock lock(dir);
    RunManifest manifest("evaluate");
    snapshot_config(manifest, app, sub);
    manifest.add("seed", "sampling " + std::to_string(o.seed));
    manifest.add("template_sha256", template_sha256());

    const fs::path model_dir(o.model);
    manifest.record_read(model_dir, "model-checkpoint");
    Model model = load_model(model_dir);
    const Tokenizer tok = load_tokenizer(model_dir);
    manifest.add("digest", "model " + base_digest(model));
    std::set<std::string> seen = trained_datasets(model_dir);
    if (!o.adapter.empty()) {
        const fs::path adapter_dir(o.adapter);
        manifest.record_read(adapter_dir, "adapter-checkpoint");
        const LoraConfig lc = load_adapters(model, adapter_dir);
        manifest.add("lora", "rank=" + std::to_string(lc.rank) + " alpha=" + fmt_real(lc.alpha) +
                                 " scale=" + fmt_real(lc.scale()));
        seen.merge(trained_datasets(adapter_dir));
    }
    if (o.zero_shot)
        for (const auto* e : entries)
            if (seen.count(e->name))
                throw ConfigError("evaluate --zero-shot: the model was trained on " + e->name);
    manifest.add("note", "metrics over decoded instances only; mr = 100*(n_test-n_decoded)/n_test");
    manifest.add("note", std::string("horizon mitigation ") + (o.no_mitigation ? "off" : "on (request h+1, keep h)"));

    std::vector<DatasetMetrics> rows;
    bool first_audit = true;
    for (const auto* e : entries) {
        add_registry_row(manifest, *e);
        const fs::path p = fs::path(o.prepared) / e->name / "test.tsv";
        if (!fs::exists(p)) throw ParseError("missing test partition " + p.string() + " (run prepare first)");
        manifest.record_read(p, "test-windows");
        const auto windows = read_windows(p);
        for (const auto& [label, gc] : settings) {
            PredictConfig pc;
            pc.generation = gc;
            pc.horizon_mitigation = !o.no_mitigation;
            pc.threads = o.threads;
            const auto t0 = std::chrono::steady_clock::now();
            const auto results = predict_batch(model, tok, windows, pc);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rows.push_back(summarize(e->name, label, windows, results));
            write_audit(dir / "audit.tsv", e->name, label, windows, results, !first_audit);
            first_audit = false;
            std::string file_label = label;
            file_label.erase(std::remove(file_label.begin(), file_label.end(), '='), file_label.end());
            const fs::path plot = dir / "forecasts" / (e->name + "_" + file_label + ".tsv");
            write_forecasts(plot, windows, results);
            manifest.record_write(plot, "forecast-data");
            out << e->name << " [" << label << "] " << windows.size() << " windows in " << std::fixed
                << std::setprecision(1) << secs << "s" << std::defaultfloat << '\n';
        }
    }
    const MetricsReport report = make_report(std::move(rows));
    write_report(dir / "report.tsv", report);
    manifest.record_write(dir / "report.tsv", "report");
    manifest.record_write(dir / "audit.tsv", "audit");
    manifest.write(dir / kRunManifest);
    out << format_report_table(report);
    return kSuccess;
}

int cmd_gradcheck(const GradcheckCliOptions& o, std::ostream& out) {
    GradcheckOptions go;
    go.tolerance = o.tolerance;
    go.step = o.step;
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_gradcheck_suite(go);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = true;
    out << std::left << std::setw(22) << "op" << std::right << std::setw(16) << "max_rel_error" << std::setw(9)
        << "checked" << "  status\n";
    for (const auto& r : results) {
        out << std::left << std::setw(22) << r.name << std::right << std::setw(16) << std::scientific
            << std::setprecision(3) << r.max_rel_error << std::defaultfloat << std::setw(9) << r.checked << "  "
            << (r.passed ? "ok" : "FAIL") << '\n';
        ok = ok && r.passed;
    }
    out << (ok ? "all" : "NOT all") << " gradients within " << o.tolerance << " relative error (" << std::fixed
        << std::setprecision(2) << secs << "s)" << std::defaultfloat << '\n';
    return ok ? kSuccess : kRuntimeFailure;
}

} // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = normalize_key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
        out.emplace_back(key, trim(line.substr(eq + 1)));
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LLIAM: LoRA-adapted decoder-only transformer for time-series forecasting", "lliam"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    Global g;
    const char* env_root = std::getenv("LLIAM_DATA_ROOT");
    g.data_root = env_root && *env_root ? env_root : "data";
    app.add_option("--config", g.config_path, "Flat key=value file; command-line flags take precedence");
    app.add_option("--data-root", g.data_root, "Directory holding the series files (env LLIAM_DATA_ROOT)");

    SynthOptions so;
    auto* synth = app.add_subcommand("synth", "Write the synthetic desk datasets into the data root");
    synth->add_option("--out", so.out, "Output directory (default: data root)");
    synth->add_option("--seed", so.seed, "Generator seed");
    synth->add_option("--count", so.count, "Series per dataset")->check(CLI::PositiveNumber);
    synth->add_option("--length", so.length, "Values per series")->check(CLI::PositiveNumber);

    PrepareOptions po;
    auto* prepare = app.add_subcommand("prepare", "Mitigate anomalies, build windows and split them");
    prepare->add_option("--datasets", po.datasets, "Registry names")->delimiter(',');
    prepare->add_option("--out", po.out, "Output directory");
    prepare->add_option("--k", po.k, "Anomaly threshold in robust standard deviations")->check(CLI::PositiveNumber);

    PretrainOptions pt;
    auto* pretrain = app.add_subcommand("pretrain", "Pre-train the tiny base model on the synthetic corpus");
    pretrain->add_option("--out", pt.out, "Checkpoint directory");
    pretrain->add_option("--iters", pt.iters, "Optimizer updates");
    pretrain->add_option("--batch", pt.batch, "Samples per update");
    pretrain->add_option("--micro-bs", pt.micro_bs, "Samples per forward/backward pass");
    pretrain->add_option("--lr", pt.lr, "Peak learning rate");
    pretrain->add_option("--warmup", pt.warmup, "Linear warm-up updates");
    pretrain->add_option("--min-lr-ratio", pt.min_lr_ratio, "Cosine floor as a fraction of the peak");
    pretrain->add_option("--grad-clip", pt.grad_clip, "Global gradient-norm clip (0 disables)");
    pretrain->add_option("--weight-decay", pt.weight_decay, "AdamW decoupled weight decay");
    pretrain->add_option("--seed", pt.seed, "Initialisation and dropout seed");
    pretrain->add_option("--corpus-seed", pt.corpus_seed, "Synthetic corpus seed");
    pretrain->add_option("--layers", pt.layers, "Decoder layers");
    pretrain->add_option("--heads", pt.heads, "Attention heads");
    pretrain->add_option("--d-model", pt.d_model, "Model width");
    pretrain->add_option("--d-ff", pt.d_ff, "Feed-forward width");
    pretrain->add_option("--max-context", pt.max_context, "Context window in tokens");
    pretrain->add_option("--n-min", pt.n_min, "Shortest lag window in the corpus");
    pretrain->add_option("--n-max", pt.n_max, "Longest lag window in the corpus");
    pretrain->add_option("--h-min", pt.h_min, "Shortest horizon in the corpus");
    pretrain->add_option("--h-max", pt.h_max, "Longest horizon in the corpus");
    pretrain->add_option("--log-every", pt.log_every, "Progress interval in updates (0 silences)");

    FinetuneOptions ft;
    auto* finetune = app.add_subcommand("finetune", "Train LoRA adapters on the pooled train partitions");
    finetune->add_option("--base", ft.base, "Base checkpoint directory");
    finetune->add_option("--prepared", ft.prepared, "Output directory of prepare");
    finetune->add_option("--datasets", ft.datasets, "Registry names")->delimiter(',');
    finetune->add_option("--out", ft.out, "Run directory");
    finetune->add_option("--rank", ft.rank, "LoRA rank r");
    finetune->add_option("--alpha", ft.alpha, "LoRA alpha");
    finetune->add_option("--lora-dropout", ft.lora_dropout, "Dropout on the adapter path");
    finetune->add_option("--lr", ft.lr, "Learning rate");
    finetune->add_option("--batch", ft.batch, "Samples per update");
    finetune->add_option("--micro-bs", ft.micro_bs, "Samples per forward/backward pass");
    finetune->add_option("--iters", ft.iters, "Optimizer updates");
    finetune->add_option("--warmup", ft.warmup, "Linear warm-up updates");
    finetune->add_option("--grad-clip", ft.grad_clip, "Global gradient-norm clip (0 disables)");
    finetune->add_option("--weight-decay", ft.weight_decay, "AdamW decoupled weight decay");
    finetune->add_option("--seed", ft.seed, "Adapter initialisation, shuffling and dropout seed");
    finetune->add_flag("--merge", ft.merge, "Also write a merged checkpoint");
    finetune->add_option("--log-every", ft.log_every, "Progress interval in updates (0 silences)");

    EvaluateOptions ev;
    auto* evaluate = app.add_subcommand("evaluate", "Forecast the test partitions and write reports");
    evaluate->add_option("--model", ev.model, "Base or merged checkpoint directory");
    evaluate->add_option("--adapter", ev.adapter, "Adapter checkpoint directory (adapter-form inference)");
    evaluate->add_option("--prepared", ev.prepared, "Output directory of prepare");
    evaluate->add_option("--datasets", ev.datasets, "Registry names")->delimiter(',');
    evaluate->add_option("--out", ev.out, "Report directory");
    evaluate->add_option("--temperature", ev.temperatures, "Sampling temperature; repeat for several")->delimiter(',');
    evaluate->add_flag("--greedy", ev.greedy, "Argmax decoding; ignores --temperature");
    evaluate->add_flag("--zero-shot", ev.zero_shot, "Require datasets unseen in training");
    evaluate->add_flag("--no-mitigation", ev.no_mitigation, "Request exactly h values instead of h+1");
    evaluate->add_option("--seed", ev.seed, "Sampling seed");
    evaluate->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

    GradcheckCliOptions gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    gradcheck->add_option("--tolerance", gc.tolerance, "Maximum relative error");
    gradcheck->add_option("--step", gc.step, "Central-difference step");

    try {
        // Merge the config file: its values go in front of the flags so that
        // explicit flags win, and keys given on the command line are skipped.
        std::string config_path;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
        }
        std::vector<std::string> final_args = args;
        if (!config_path.empty()) {
            std::size_t sub_pos = args.size();
            CLI::App* sub = nullptr;
            for (std::size_t i = 0; i < args.size() && !sub; ++i)
                for (CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; }))
                    if (args[i] == s->get_name()) {
                        sub = s;
                        sub_pos = i;
                        break;
                    }
            std::set<std::string> given;
            for (const auto& a : args)
                if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
            std::vector<std::string> global_extra, sub_extra;
            for (const auto& [key, value] : read_config_file(config_path)) {
                if (given.count(key) || key == "config") continue;
                const std::string flag = "--" + key + "=" + value;
                if (app.get_option_no_throw("--" + key)) global_extra.push_back(flag);
                else if (sub && sub->get_option_no_throw("--" + key)) sub_extra.push_back(flag);
                else throw ConfigError("config file " + config_path + ": unknown key '" + key + "'" +
                                       (sub ? " for command " + sub->get_name() : ""));
            }
            final_args.assign(global_extra.begin(), global_extra.end());
            final_args.insert(final_args.end(), args.begin(), args.begin() + static_cast<std::ptrdiff_t>(std::min(sub_pos + 1, args.size())));
            final_args.insert(final_args.end(), sub_extra.begin(), sub_extra.end());
            if (sub_pos + 1 < args.size())
                final_args.insert(final_args.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), args.end());
        }
        std::vector<std::string> reversed(final_args.rbegin(), final_args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsageError;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }

    try {
        if (*synth) return cmd_synth(g, so, out);
        if (*prepare) return cmd_prepare(g, po, &app, prepare, out);
        if (*pretrain) return cmd_pretrain(pt, &app, pretrain, out);
        if (*finetune) return cmd_finetune(ft, &app, finetune, out);
        if (*evaluate) return cmd_evaluate(ev, &app, evaluate, out);
        if (*gradcheck) return cmd_gradcheck(gc, out);
    } catch (const UnknownDataset& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
    return kUsageError;
}

} // namespace lliam::cli
