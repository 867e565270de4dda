// SPDX-License-Identifier: Apache-2.0
#include "lliam/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lliam/errors.hpp"
#include "lliam/rng.hpp"

namespace lliam {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_mat(const Tensor& t) {
    return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap as_mat(Tensor& t) {
    return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

ConstMap grad_mat(const Tensor& t) {
    return ConstMap(t.grad().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap grad_mat_mut(const Tensor& t) {
    auto g = t.grad_mut();
    return MutMap(g.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Tensor& t, const char* op) {
    if (!t.defined() || t.rank() != 2) throw ShapeError(std::string(op) + ": expected a rank-2 tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions differ (" + shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()) + ")");
    Tensor out({a.rows(), b.cols()});
    as_mat(out).noalias() = as_mat(a) * as_mat(b);
    detail::bump_matmul_count();
    Tape::record({a, b}, out, [a, b, out]() mutable {
        auto dy = grad_mat(out);
        if (a.requires_grad()) grad_mat_mut(a).noalias() += dy * as_mat(b).transpose();
        if (b.requires_grad()) grad_mat_mut(b).noalias() += as_mat(a).transpose() * dy;
    });
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w) {
    require_matrix(x, "linear");
    require_matrix(w, "linear");
    if (x.cols() != w.cols())
        throw ShapeError("linear: input width " + std::to_string(x.cols()) + " does not match weight " +
                         shape_to_string(w.shape()));
    Tensor out({x.rows(), w.rows()});
    as_mat(out).noalias() = as_mat(x) * as_mat(w).transpose();
    detail::bump_matmul_count();
    Tape::record({x, w}, out, [x, w, out]() mutable {
        auto dy = grad_mat(out);
        if (x.requires_grad()) grad_mat_mut(x).noalias() += dy * as_mat(w);
        if (w.requires_grad()) grad_mat_mut(w).noalias() += dy.transpose() * as_mat(x);
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    auto o = out.data();
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
    Tape::record({a, b}, out, [a, b, out]() mutable {
        auto dy = out.grad();
        for (const Tensor* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto g = t->grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    auto o = out.data();
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
    Tape::record({a, b}, out, [a, b, out]() mutable {
        auto dy = out.grad();
        if (a.requires_grad()) {
            auto g = a.grad_mut();
            auto bv = b.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * bv[i];
        }
        if (b.requires_grad()) {
            auto g = b.grad_mut();
            auto av = a.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * av[i];
        }
    });
    return out;
}

Tensor scale(const Tensor& x, Real factor) {
    Tensor out(x.shape());
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor;
    Tape::record({x}, out, [x, out, factor]() mutable {
        auto dy = out.grad();
        auto g = x.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * factor;
    });
    return out;
}

Tensor sum(const Tensor& x) {
    Real s = 0.0;
    for (Real v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    Tape::record({x}, out, [x, out]() mutable {
        const Real dy = out.grad()[0];
        for (auto& g : x.grad_mut()) g += dy;
    });
    return out;
}

Tensor silu(const Tensor& x) {
    Tensor out(x.shape());
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] / (1.0 + std::exp(-xv[i]));
    Tape::record({x}, out, [x, out]() mutable {
        auto dy = out.grad();
        auto xv = x.data();
        auto g = x.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Real s = 1.0 / (1.0 + std::exp(-xv[i]));
            g[i] += dy[i] * s * (1.0 + xv[i] * (1.0 - s));
        }
    });
    return out;
}

Tensor softmax_rows(const Tensor& x, Real scale_factor, std::optional<std::size_t> causal_offset) {
    if (!(scale_factor > 0.0)) throw NumericError("softmax_rows: scale must be positive");
    const std::size_t n = x.cols();
    const std::size_t rows = x.rows();
    Tensor out(x.shape());
    auto xv = x.data();
    auto o = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t width = causal_offset ? std::min(n, r + *causal_offset + 1) : n;
        const Real* in = xv.data() + r * n;
        Real* y = o.data() + r * n;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < width; ++j) {
            const Real v = in[j] * scale_factor;
            if (!std::isfinite(v)) throw NumericError("softmax_rows: non-finite input");
            mx = std::max(mx, v);
        }
        Real total = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            y[j] = std::exp(in[j] * scale_factor - mx);
            total += y[j];
        }
        const Real inv = 1.0 / total;
        for (std::size_t j = 0; j < width; ++j) y[j] *= inv;
        for (std::size_t j = width; j < n; ++j) y[j] = 0.0;
    }
    Tape::record({x}, out, [x, out, n, rows, scale_factor]() mutable {
        auto dy = out.grad();
        auto y = out.data();
        auto g = x.grad_mut();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * n;
            Real dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[base + j] * dy[base + j];
            for (std::size_t j = 0; j < n; ++j)
                g[base + j] += scale_factor * y[base + j] * (dy[base + j] - dot);
        }
    });
    return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, Real eps) {
    const std::size_t d = x.cols();
    if (gain.numel() != d)
        throw ShapeError("rmsnorm: gain has " + std::to_string(gain.numel()) + " entries, expected " +
                         std::to_string(d));
    if (eps < 0.0) throw NumericError("rmsnorm: eps must be non-negative");
    const std::size_t rows = x.rows();
    Tensor out(x.shape());
    std::vector<Real> inv_rms(rows);
    auto xv = x.data();
    auto gv = gain.data();
    auto o = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = xv.data() + r * d;
        Real ms = 0.0;
        for (std::size_t j = 0; j < d; ++j) ms += in[j] * in[j];
        ms /= static_cast<Real>(d);
        const Real inv = 1.0 / std::sqrt(ms + eps);
        inv_rms[r] = inv;
        for (std::size_t j = 0; j < d; ++j) o[r * d + j] = gv[j] * in[j] * inv;
    }
    Tape::record({x, gain}, out, [x, gain, out, inv_rms = std::move(inv_rms), d, rows]() mutable {
        auto dy = out.grad();
        auto xv = x.data();
        auto gv = gain.data();
        if (x.requires_grad()) {
            auto gx = x.grad_mut();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t base = r * d;
                const Real inv = inv_rms[r];
                Real dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += gv[j] * dy[base + j] * xv[base + j];
                const Real coef = inv * inv * inv * dot / static_cast<Real>(d);
                for (std::size_t j = 0; j < d; ++j)
                    gx[base + j] += inv * gv[j] * dy[base + j] - coef * xv[base + j];
            }
        }
        if (gain.requires_grad()) {
            auto gg = gain.grad_mut();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) gg[j] += dy[r * d + j] * xv[r * d + j] * inv_rms[r];
        }
    });
    return out;
}

Tensor swiglu_ffn(const Tensor& x, const Tensor& w_gate, const Tensor& w_up, const Tensor& w_down) {
    require_same_shape(w_gate, w_up, "swiglu_ffn");
    if (w_down.rank() != 2 || w_down.cols() != w_gate.rows() || w_down.rows() != x.cols())
        throw ShapeError("swiglu_ffn: down projection " + shape_to_string(w_down.shape()) +
                         " incompatible with gate " + shape_to_string(w_gate.shape()));
    return linear(mul(silu(linear(x, w_gate)), linear(x, w_up)), w_down);
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
    require_matrix(table, "embedding");
    if (ids.empty()) throw ShapeError("embedding: empty id sequence");
    const std::size_t d = table.cols();
    const std::size_t vocab = table.rows();
    Tensor out({ids.size(), d});
    auto tv = table.data();
    auto o = out.data();
    std::vector<TokenId> idv(ids.begin(), ids.end());
    for (std::size_t t = 0; t < idv.size(); ++t) {
        if (idv[t] < 0 || static_cast<std::size_t>(idv[t]) >= vocab)
            throw RangeError("embedding: token id " + std::to_string(idv[t]) + " outside vocabulary of " +
                             std::to_string(vocab));
        std::copy_n(tv.data() + static_cast<std::size_t>(idv[t]) * d, d, o.data() + t * d);
    }
    Tape::record({table}, out, [table, out, idv = std::move(idv), d]() mutable {
        auto dy = out.grad();
        auto g = table.grad_mut();
        for (std::size_t t = 0; t < idv.size(); ++t) {
            Real* row = g.data() + static_cast<std::size_t>(idv[t]) * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += dy[t * d + j];
        }
    });
    return out;
}

Tensor rope(const Tensor& x, std::span<const std::size_t> positions, std::span<const Real> thetas) {
    require_matrix(x, "rope");
    const std::size_t rows = x.rows();
    const std::size_t width = x.cols();
    const std::size_t half = thetas.size();
    const std::size_t head_dim = 2 * half;
    if (positions.size() != rows)
        throw ShapeError("rope: " + std::to_string(positions.size()) + " positions for " + std::to_string(rows) +
                         " rows");
    if (half == 0 || width % head_dim != 0)
        throw ShapeError("rope: width " + std::to_string(width) + " is not a multiple of head_dim " +
                         std::to_string(head_dim));
    std::vector<Real> cs(rows * half);
    std::vector<Real> sn(rows * half);
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t j = 0; j < half; ++j) {
            const Real angle = static_cast<Real>(positions[t]) * thetas[j];
            cs[t * half + j] = std::cos(angle);
            sn[t * half + j] = std::sin(angle);
        }
    Tensor out(x.shape());
    auto xv = x.data();
    auto o = out.data();
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t c = 0; c < width; c += 2) {
            const std::size_t j = (c % head_dim) / 2;
            const Real c0 = cs[t * half + j];
            const Real s0 = sn[t * half + j];
            const Real a = xv[t * width + c];
            const Real b = xv[t * width + c + 1];
            o[t * width + c] = a * c0 - b * s0;
            o[t * width + c + 1] = a * s0 + b * c0;
        }
    Tape::record({x}, out,
                 [x, out, cs = std::move(cs), sn = std::move(sn), rows, width, half, head_dim]() mutable {
                     auto dy = out.grad();
                     auto g = x.grad_mut();
                     for (std::size_t t = 0; t < rows; ++t)
                         for (std::size_t c = 0; c < width; c += 2) {
                             const std::size_t j = (c % head_dim) / 2;
                             const Real c0 = cs[t * half + j];
                             const Real s0 = sn[t * half + j];
                             const Real da = dy[t * width + c];
                             const Real db = dy[t * width + c + 1];
                             g[t * width + c] += da * c0 + db * s0;
                             g[t * width + c + 1] += -da * s0 + db * c0;
                         }
                 });
    return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
    require_matrix(x, "slice_cols");
    if (count == 0 || begin + count > x.cols()) throw ShapeError("slice_cols: range out of bounds");
    const std::size_t rows = x.rows();
    const std::size_t width = x.cols();
    Tensor out({rows, count});
    auto xv = x.data();
    auto o = out.data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * width + begin, count, o.data() + r * count);
    Tape::record({x}, out, [x, out, begin, count, rows, width]() mutable {
        auto dy = out.grad();
        auto g = x.grad_mut();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < count; ++j) g[r * width + begin + j] += dy[r * count + j];
    });
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = parts.front().rows();
    std::size_t width = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        width += p.cols();
    }
    Tensor out({rows, width});
    auto o = out.data();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        auto pv = p.data();
        const std::size_t w = p.cols();
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(pv.data() + r * w, w, o.data() + r * width + offset);
        offset += w;
    }
    Tape::record(parts, out, [parts, out, rows, width]() mutable {
        auto dy = out.grad();
        std::size_t offset = 0;
        for (auto& p : parts) {
            const std::size_t w = p.cols();
            if (p.requires_grad()) {
                auto g = p.grad_mut();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j) g[r * w + j] += dy[r * width + offset + j];
            }
            offset += w;
        }
    });
    return out;
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
    require_matrix(top, "concat_rows");
    require_matrix(bottom, "concat_rows");
    if (top.cols() != bottom.cols()) throw ShapeError("concat_rows: column counts differ");
    Tensor out({top.rows() + bottom.rows(), top.cols()});
    auto o = out.data();
    std::copy(top.data().begin(), top.data().end(), o.begin());
    std::copy(bottom.data().begin(), bottom.data().end(), o.begin() + static_cast<std::ptrdiff_t>(top.numel()));
    Tape::record({top, bottom}, out, [top, bottom, out]() mutable {
        auto dy = out.grad();
        if (top.requires_grad()) {
            auto g = top.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
        if (bottom.requires_grad()) {
            auto g = bottom.grad_mut();
            const std::size_t off = top.numel();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[off + i];
        }
    });
    return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets, const std::vector<bool>& ignore,
                     Reduction reduction) {
    require_matrix(logits, "cross_entropy");
    const std::size_t steps = logits.rows();
    const std::size_t vocab = logits.cols();
    if (targets.size() != steps || ignore.size() != steps)
        throw ShapeError("cross_entropy: " + std::to_string(steps) + " logit rows, " +
                         std::to_string(targets.size()) + " targets, " + std::to_string(ignore.size()) +
                         " mask entries");
    std::size_t counted = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        if (ignore[t]) continue;
        if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab)
            throw RangeError("cross_entropy: target " + std::to_string(targets[t]) + " outside vocabulary");
        ++counted;
    }
    if (counted == 0 && reduction == Reduction::mean)
        throw NumericError("cross_entropy: every position is masked; mean loss is undefined");

    auto lv = logits.data();
    std::vector<Real> probs(steps * vocab, 0.0);
    Real total = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        if (ignore[t]) continue;
        const Real* row = lv.data() + t * vocab;
        const Real mx = *std::max_element(row, row + vocab);
        Real z = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
        const Real log_z = mx + std::log(z);
        for (std::size_t j = 0; j < vocab; ++j) probs[t * vocab + j] = std::exp(row[j] - log_z);
        total += log_z - row[targets[t]];
    }
    const Real norm = (reduction == Reduction::mean) ? 1.0 / static_cast<Real>(counted) : 1.0;
    if (!std::isfinite(total)) throw NumericError("cross_entropy: non-finite loss");
    Tensor out = Tensor::scalar(total * norm);
    std::vector<TokenId> tv(targets.begin(), targets.end());
    Tape::record({logits}, out,
                 [logits, out, probs = std::move(probs), tv = std::move(tv), ignore, norm, vocab]() mutable {
                     const Real dy = out.grad()[0] * norm;
                     auto g = logits.grad_mut();
                     for (std::size_t t = 0; t < tv.size(); ++t) {
                         if (ignore[t]) continue;
                         for (std::size_t j = 0; j < vocab; ++j) g[t * vocab + j] += dy * probs[t * vocab + j];
                         g[t * vocab + static_cast<std::size_t>(tv[t])] -= dy;
                     }
                 });
    return out;
}

Tensor dropout(const Tensor& x, Real p, std::uint64_t key, bool training) {
    if (!(p >= 0.0) || p >= 1.0) throw ConfigError("dropout: probability must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const Real keep_scale = 1.0 / (1.0 - p);
    std::vector<Real> mask(x.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        CounterRng rng(key, i);
        mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    }
    Tensor out(x.shape());
    auto xv = x.data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * mask[i];
    Tape::record({x}, out, [x, out, mask = std::move(mask)]() mutable {
        auto dy = out.grad();
        auto g = x.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * mask[i];
    });
    return out;
}

Real clip_grad_norm(std::span<Tensor> params, Real max_norm) {
    Real sq = 0.0;
    for (const auto& p : params)
        for (Real g : p.grad()) sq += g * g;
    const Real norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("clip_grad_norm: non-finite gradient norm");
    if (max_norm > 0.0 && norm > max_norm) {
        const Real f = max_norm / norm;
        for (auto& p : params)
            if (p.has_grad())
                for (auto& g : p.grad_mut()) g *= f;
    }
    return norm;
}

} // namespace lliam
