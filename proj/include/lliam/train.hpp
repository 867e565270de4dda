// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lliam/data.hpp"
#include "lliam/model.hpp"
#include "lliam/prompt_codec.hpp"
#include "lliam/synthetic.hpp"
#include "lliam/tokenizer.hpp"

namespace lliam {

// Text layout of one sample:
//
//   <bos> context_question " " answer <eos>
//
// inputs = tokens[0..T-1), targets = tokens[1..T). With the answer-only mask
// a target is counted iff it is an answer character or the final EOS.
enum class LossMask { answer_only, full_sequence };

struct TrainingSample {
    TokenSequence inputs;
    TokenSequence targets;
    std::vector<bool> ignore; // true = excluded from the loss
    std::size_t counted = 0;  // targets entering the loss
};

// The text the model sees before it starts answering.
std::string prompt_text(std::span<const double> lags, std::size_t horizon, NumberFormat fmt = {});

TrainingSample build_training_sample(const Tokenizer& tokenizer, std::span<const double> x, std::span<const double> y,
                                     std::size_t max_context, LossMask mask = LossMask::answer_only,
                                     NumberFormat fmt = {});
// Throws ContextOverflow naming the window when the sample exceeds max_context.
TrainingSample build_training_sample(const Tokenizer& tokenizer, const WindowPair& w, std::size_t max_context,
                                     LossMask mask = LossMask::answer_only, NumberFormat fmt = {});

struct TrainConfig {
    double lr = 3e-4;
    std::size_t batch_size = 128; // samples per optimizer update
    std::size_t micro_batch = 2;  // samples per forward/backward pass
    std::size_t max_iters = 2000; // optimizer updates
    std::uint64_t seed = 0;
    std::size_t eval_every = 0; // 0 disables the periodic callback
    std::size_t warmup_iters = 0;
    bool cosine_decay = false;
    double min_lr_ratio = 0.1;
    double grad_clip = 0.0; // 0 disables clipping
    double weight_decay = 0.01;

    // Throws ConfigError unless batch_size is a positive multiple of
    // micro_batch and max_iters >= 1.
    void validate() const;
    double lr_at(std::size_t step) const;
};

struct StepRecord {
    std::size_t step = 0; // 1-based optimizer update
    double loss = 0.0;    // mean over counted tokens of the effective batch
    double lr = 0.0;
    double grad_norm = 0.0;
    std::size_t tokens = 0;
};

struct TrainResult {
    std::vector<StepRecord> log;
    std::size_t optimizer_steps = 0;
    std::size_t micro_steps = 0; // forward/backward passes
    double seconds = 0.0;
    double final_loss() const { return log.empty() ? 0.0 : log.back().loss; }
};

using StepCallback = std::function<void(const StepRecord&)>;
using SampleSource = std::function<TrainingSample(std::size_t index)>;

// Shared loop: sample k of update s is source(s * batch_size + k). The loss
// of an update is sum(token NLL) / counted tokens of the whole batch; each
// micro-batch backpropagates its share so gradients accumulate to exactly
// that quantity. Throws NumericError on a non-finite loss.
TrainResult train_loop(const Model& model, const std::vector<Tensor>& params, const SampleSource& source,
                       const TrainConfig& config, const StepCallback& on_step = {});

struct SyntheticCorpus {
    std::uint64_t seed = 0;
    std::vector<SyntheticFamily> families = pretraining_families();
    std::size_t n_min = 8, n_max = 16;
    std::size_t h_min = 1, h_max = 6;
    LossMask mask = LossMask::full_sequence;

    // Sample k is a pure function of (seed, k).
    TrainingSample sample(const Tokenizer& tokenizer, std::size_t k, std::size_t max_context) const;
};

// Full-parameter training of a fresh model on the synthetic corpus.
TrainResult pretrain_tiny(Model& model, const Tokenizer& tokenizer, const SyntheticCorpus& corpus,
                          const TrainConfig& config, const StepCallback& on_step = {});

// Adapter-only training on the pooled windows, reshuffled every epoch.
// Throws FrozenBaseViolation if the base weights change.
TrainResult finetune_lora(Model& model, const Tokenizer& tokenizer, const std::vector<WindowPair>& windows,
                          const TrainConfig& config, const StepCallback& on_step = {});

class FrozenBaseViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Position of sample k in a per-epoch Fisher-Yates permutation of n items.
std::size_t shuffled_index(std::size_t k, std::size_t n, std::uint64_t seed);

} // namespace lliam
