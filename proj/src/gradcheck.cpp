// SPDX-License-Identifier: Apache-2.0
#include "lliam/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "lliam/lora.hpp"
#include "lliam/model.hpp"
#include "lliam/ops.hpp"

namespace lliam {

namespace {

Tensor random_tensor(Shape shape, CounterRng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.normal(0.0, scale);
    return t;
}

double reduced(const Tensor& out, const Tensor& weights) {
    double s = 0.0;
    auto o = out.data();
    auto w = weights.data();
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * w[i];
    return s;
}

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t limit, CounterRng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n <= limit) return idx;
    for (std::size_t i = 0; i < limit; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(limit);
    return idx;
}

} // namespace

GradcheckResult check_gradients(const std::string& name, const GradFn& fn, std::vector<Tensor> inputs,
                                const GradcheckOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckResult result;
    result.name = name;
    for (auto& x : inputs) {
        x.set_requires_grad(true);
        x.clear_grad();
    }

    std::uint64_t tag = 0;
    for (unsigned char ch : name) tag = mix64(tag ^ ch);
    CounterRng rng(derive_key(options.seed, tag));
    Tensor weights;
    {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor out = fn(inputs);
        weights = random_tensor(out.shape(), rng);
        Tensor loss = sum(mul(out, weights));
        tape.backward(loss);
    }

    for (auto& x : inputs) {
        const std::vector<Real> analytic(x.grad().begin(), x.grad().end());
        for (std::size_t i : pick_entries(x.numel(), options.max_entries, rng)) {
            const Real orig = x.data()[i];
            x.data()[i] = orig + options.step;
            const double up = reduced(fn(inputs), weights);
            x.data()[i] = orig - options.step;
            const double down = reduced(fn(inputs), weights);
            x.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * options.step);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            const double denom = std::max({options.floor, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            result.max_rel_error = std::isnan(rel) ? HUGE_VAL : std::max(result.max_rel_error, rel);
            ++result.checked;
        }
    }
    result.passed = result.checked > 0 && result.max_rel_error < options.tolerance;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options) {
    CounterRng rng(options.seed);
    const auto R = [&](Shape s, double scale = 1.0) { return random_tensor(std::move(s), rng, scale); };
    std::vector<GradcheckResult> out;
    const auto run = [&](const std::string& name, const GradFn& fn, std::vector<Tensor> inputs) {
        out.push_back(check_gradients(name, fn, std::move(inputs), options));
    };

    run("matmul", [](const auto& in) { return matmul(in[0], in[1]); }, {R({4, 5}), R({5, 3})});
    run("linear", [](const auto& in) { return linear(in[0], in[1]); }, {R({4, 5}), R({3, 5})});
    run("add", [](const auto& in) { return add(in[0], in[1]); }, {R({3, 4}), R({3, 4})});
    run("mul", [](const auto& in) { return mul(in[0], in[1]); }, {R({3, 4}), R({3, 4})});
    run("scale", [](const auto& in) { return scale(in[0], -1.75); }, {R({3, 4})});
    run("sum", [](const auto& in) { return sum(in[0]); }, {R({3, 4})});
    run("silu", [](const auto& in) { return silu(in[0]); }, {R({3, 5}, 2.0)});
    run("softmax_rows", [](const auto& in) { return softmax_rows(in[0], 0.7); }, {R({4, 6})});
    run("softmax_rows_causal", [](const auto& in) { return softmax_rows(in[0], 0.5, std::size_t{2}); }, {R({3, 5})});
    run("rmsnorm", [](const auto& in) { return rmsnorm(in[0], in[1], 1e-5); }, {R({3, 8}), R({8})});
    run("swiglu_ffn", [](const auto& in) { return swiglu_ffn(in[0], in[1], in[2], in[3]); },
        {R({3, 6}), R({10, 6}, 0.5), R({10, 6}, 0.5), R({6, 10}, 0.5)});
    {
        const std::vector<TokenId> ids = {2, 0, 4, 2};
        run("embedding", [ids](const auto& in) { return embedding(in[0], ids); }, {R({5, 6})});
    }
    {
        const std::vector<std::size_t> pos = {0, 3, 7};
        const auto thetas = rope_angles(4, 10000.0);
        run("rope", [pos, thetas](const auto& in) { return rope(in[0], pos, thetas); }, {R({3, 8})});
    }
    run("slice_cols", [](const auto& in) { return slice_cols(in[0], 2, 3); }, {R({3, 7})});
    run("concat_cols", [](const auto& in) { return concat_cols({in[0], in[1]}); }, {R({3, 2}), R({3, 4})});
    run("concat_rows", [](const auto& in) { return concat_rows(in[0], in[1]); }, {R({2, 4}), R({3, 4})});
    {
        const std::vector<TokenId> targets = {1, 4, 0, 2};
        const std::vector<bool> ignore = {false, true, false, false};
        run("cross_entropy_mean", [=](const auto& in) { return cross_entropy(in[0], targets, ignore); }, {R({4, 5})});
        run("cross_entropy_sum",
            [=](const auto& in) { return cross_entropy(in[0], targets, ignore, Reduction::sum); }, {R({4, 5})});
    }
    run("dropout", [](const auto& in) { return dropout(in[0], 0.3, 77, true); }, {R({4, 6})});
    run("attention", [](const auto& in) { return scaled_dot_product_attention(in[0], in[1], in[2], 2); },
        {R({3, 4}), R({5, 4}), R({5, 4})});
    {
        LoraAdapter ad;
        ad.scale = 2.0;
        ad.dropout = 0.0;
        run("lora_forward",
            [ad](const auto& in) mutable {
                ad.base = in[1];
                ad.a = in[2];
                ad.b = in[3];
                return lora_forward(in[0], ad, false, 0);
            },
            {R({3, 6}), R({5, 6}), R({2, 6}), R({5, 2})});
    }
    {
        ModelConfig c;
        c.n_layers = 1;
        c.n_heads = 2;
        c.d_model = 8;
        c.d_ff = 12;
        c.vocab_size = 7;
        c.max_context = 16;
        const Model base = Model::init(c, options.seed);
        std::vector<Tensor> params;
        for (const auto& [name, t] : base.base_tensors()) {
            Tensor p = t.clone();
            // Widen the initial weights so every path carries signal.
            for (auto& v : p.data()) v *= 10.0;
            params.push_back(p);
        }
        const std::vector<TokenId> tokens = {1, 5, 3, 6, 2};
        run("decoder_block",
            [c, tokens](const std::vector<Tensor>& in) {
                DecoderWeights w;
                std::size_t k = 0;
                w.embedding = in[k++];
                DecoderLayer L;
                L.attn_norm = in[k++];
                L.wq.weight = in[k++];
                L.wk.weight = in[k++];
                L.wv.weight = in[k++];
                L.wo.weight = in[k++];
                L.ffn_norm = in[k++];
                L.w_gate = in[k++];
                L.w_up = in[k++];
                L.w_down = in[k++];
                w.layers.push_back(L);
                w.final_norm = in[k++];
                w.output = in[k++];
                const Model m(c, std::move(w));
                return m.forward(tokens);
            },
            params);
    }
    return out;
}

} // namespace lliam
