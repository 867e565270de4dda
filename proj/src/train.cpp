// SPDX-License-Identifier: Apache-2.0
#include "lliam/train.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "lliam/adamw.hpp"
#include "lliam/checkpoint.hpp"
#include "lliam/errors.hpp"
#include "lliam/ops.hpp"

namespace lliam {

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    CounterRng rng(derive_key(seed, epoch));
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

} // namespace

std::string prompt_text(std::span<const double> lags, std::size_t horizon, NumberFormat fmt) {
    return render_prompt(lags, horizon, fmt) + " ";
}

TrainingSample build_training_sample(const Tokenizer& tokenizer, std::span<const double> x, std::span<const double> y,
                                     std::size_t max_context, LossMask mask, NumberFormat fmt) {
    const PromptSample ps = make_prompt_sample(x, y, fmt);
    TokenSequence ids;
    ids.push_back(Vocabulary::kBos);
    const auto prompt = tokenizer.encode(ps.context_question + " ");
    ids.insert(ids.end(), prompt.begin(), prompt.end());
    const std::size_t prompt_len = ids.size();
    const auto answer = tokenizer.encode(ps.answer);
    ids.insert(ids.end(), answer.begin(), answer.end());
    ids.push_back(Vocabulary::kEos);
    if (ids.size() > max_context)
        throw ContextOverflow("training sample of " + std::to_string(ids.size()) + " tokens exceeds the context of " +
                              std::to_string(max_context));

    TrainingSample s;
    s.inputs.assign(ids.begin(), ids.end() - 1);
    s.targets.assign(ids.begin() + 1, ids.end());
    s.ignore.resize(s.targets.size());
    for (std::size_t t = 0; t < s.targets.size(); ++t) {
        s.ignore[t] = mask == LossMask::answer_only && t + 1 < prompt_len;
        if (!s.ignore[t]) ++s.counted;
    }
    return s;
}

TrainingSample build_training_sample(const Tokenizer& tokenizer, const WindowPair& w, std::size_t max_context,
                                     LossMask mask, NumberFormat fmt) {
    try {
        return build_training_sample(tokenizer, w.x, w.y, max_context, mask, fmt);
    } catch (const ContextOverflow& e) {
        throw ContextOverflow("window " + w.series_id + "@" + std::to_string(w.start) + ": " + e.what());
    }
}

void TrainConfig::validate() const {
    if (micro_batch == 0 || batch_size == 0) throw ConfigError("batch size and micro-batch must be positive");
    if (batch_size % micro_batch != 0)
        throw ConfigError("batch size " + std::to_string(batch_size) + " is not divisible by micro-batch " +
                          std::to_string(micro_batch));
    if (max_iters == 0) throw ConfigError("max_iters must be at least 1 (nothing to train)");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (warmup_iters > max_iters) throw ConfigError("warmup exceeds max_iters");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
}

double TrainConfig::lr_at(std::size_t step) const {
    if (warmup_iters > 0 && step <= warmup_iters)
        return lr * static_cast<double>(step) / static_cast<double>(warmup_iters);
    if (!cosine_decay || max_iters <= warmup_iters) return lr;
    const double progress =
        static_cast<double>(step - warmup_iters) / static_cast<double>(max_iters - warmup_iters);
    return lr * (min_lr_ratio + (1.0 - min_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

TrainResult train_loop(const Model& model, const std::vector<Tensor>& params, const SampleSource& source,
                       const TrainConfig& config, const StepCallback& on_step) {
    config.validate();
    if (params.empty()) throw ConfigError("no trainable parameters");
    AdamWOptions opts;
    opts.lr = config.lr;
    opts.weight_decay = config.weight_decay;
    AdamW optimizer(params, opts);
    std::vector<Tensor> grads_of = params;

    TrainResult result;
    const auto t0 = std::chrono::steady_clock::now();
    double last_finite = std::nan("");
    Tape tape;
    for (std::size_t step = 1; step <= config.max_iters; ++step) {
        const double lr = config.lr_at(step);
        optimizer.set_lr(lr);
        optimizer.zero_grad();

        std::vector<TrainingSample> batch;
        batch.reserve(config.batch_size);
        std::size_t counted = 0;
        for (std::size_t k = 0; k < config.batch_size; ++k) {
            batch.push_back(source((step - 1) * config.batch_size + k));
            counted += batch.back().counted;
        }
        if (counted == 0) throw NumericError("batch at step " + std::to_string(step) + " has no counted targets");
        const double inv = 1.0 / static_cast<double>(counted);

        double loss = 0.0;
        for (std::size_t first = 0; first < config.batch_size; first += config.micro_batch) {
            tape.clear();
            Tape::Scope scope(tape);
            Tensor total;
            for (std::size_t i = first; i < first + config.micro_batch; ++i) {
                const TrainingSample& s = batch[i];
                ForwardOptions fo;
                fo.training = true;
                fo.dropout_key = derive_key(config.seed, (step - 1) * config.batch_size + i);
                Tensor logits = model.forward(s.inputs, nullptr, fo);
                Tensor nll = cross_entropy(logits, s.targets, s.ignore, Reduction::sum);
                total = total.defined() ? add(total, nll) : nll;
            }
            Tensor share = scale(total, inv);
            tape.backward(share);
            loss += share.item();
            ++result.micro_steps;
        }
        tape.clear();
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "training diverged at step " << step << ": loss " << loss << ", lr " << lr
                << ", last finite loss " << last_finite;
            throw NumericError(msg.str());
        }
        last_finite = loss;

        const double norm = clip_grad_norm(grads_of, config.grad_clip > 0.0 ? config.grad_clip : HUGE_VAL);
        optimizer.step();
        ++result.optimizer_steps;

        StepRecord rec{step, loss, lr, norm, counted};
        result.log.push_back(rec);
        if (on_step) on_step(rec);
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

TrainingSample SyntheticCorpus::sample(const Tokenizer& tokenizer, std::size_t k, std::size_t max_context) const {
    if (families.empty()) throw ConfigError("synthetic corpus has no families");
    if (n_min < 1 || n_min > n_max || h_min < 1 || h_min > h_max) throw ConfigError("invalid corpus window ranges");
    CounterRng rng(derive_key(seed, k));
    const auto family =
        families[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(families.size()) - 1))];
    const auto n = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(n_min), static_cast<std::int64_t>(n_max)));
    const auto h = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(h_min), static_cast<std::int64_t>(h_max)));
    CounterRng values_rng = rng.fork(1);
    const auto values = generate_values(family, n + h, values_rng);
    return build_training_sample(tokenizer, std::span(values).first(n), std::span(values).subspan(n), max_context, mask);
}

TrainResult pretrain_tiny(Model& model, const Tokenizer& tokenizer, const SyntheticCorpus& corpus,
                          const TrainConfig& config, const StepCallback& on_step) {
    if (model.adapter_count() != 0) throw ConfigError("pre-training expects a model without adapters");
    if (tokenizer.vocab_size() != model.config().vocab_size) throw ConfigError("tokenizer and model vocabularies differ");
    model.set_base_trainable(true);
    const std::size_t ctx = model.config().max_context;
    return train_loop(model, model.base_parameters(),
                      [&](std::size_t k) { return corpus.sample(tokenizer, k, ctx); }, config, on_step);
}

std::size_t shuffled_index(std::size_t k, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("cannot shuffle an empty set");
    return epoch_permutation(n, seed, k / n)[k % n];
}

TrainResult finetune_lora(Model& model, const Tokenizer& tokenizer, const std::vector<WindowPair>& windows,
                          const TrainConfig& config, const StepCallback& on_step) {
    if (model.adapter_count() == 0) throw ConfigError("fine-tuning needs a model with LoRA adapters");
    if (windows.empty()) throw ConfigError("fine-tuning needs at least one training window");
    if (tokenizer.vocab_size() != model.config().vocab_size) throw ConfigError("tokenizer and model vocabularies differ");
    model.set_base_trainable(false);
    const std::string before = base_digest(model);

    const std::size_t ctx = model.config().max_context;
    for (const auto& w : windows) build_training_sample(tokenizer, w, ctx); // fail fast on overflow

    std::size_t cached_epoch = static_cast<std::size_t>(-1);
    std::vector<std::size_t> perm;
    const std::uint64_t shuffle_seed = derive_key(config.seed, 0x5f);
    auto source = [&](std::size_t k) {
        const std::size_t epoch = k / windows.size();
        if (epoch != cached_epoch) {
            perm = epoch_permutation(windows.size(), shuffle_seed, epoch);
            cached_epoch = epoch;
        }
        return build_training_sample(tokenizer, windows[perm[k % windows.size()]], ctx);
    };
    TrainResult result = train_loop(model, model.adapter_parameters(), source, config, on_step);

    if (base_digest(model) != before)
        throw FrozenBaseViolation("base weights changed during adapter fine-tuning");
    return result;
}

} // namespace lliam
