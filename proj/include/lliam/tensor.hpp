// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the tape route gradients back to parameters. Use clone() for a deep
// copy. Operations record themselves on the thread's active Tape only when
// some operand requires a gradient; with no active tape every op is a plain
// computation.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lliam {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = 0.0);
    Tensor(Shape shape, std::vector<Real> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(Real v) { return Tensor(Shape{1}, v); }

    bool defined() const noexcept { return static_cast<bool>(impl_); }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t dim(std::size_t i) const;
    // Treat as a matrix: last dimension is columns, everything else rows.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<Real> data();
    std::span<const Real> data() const;
    Real& operator[](std::size_t i) { return data()[i]; }
    Real operator[](std::size_t i) const { return data()[i]; }
    Real at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
    Real item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const Real> grad() const;
    // Allocates a zero gradient on first use.
    std::span<Real> grad_mut() const;
    void zero_grad() const;
    void clear_grad();

    // True for tensors not produced by a recorded operation.
    bool is_leaf() const;

    Tensor clone() const;
    // Same values, no gradient tracking, independent storage.
    Tensor detach() const { return clone(); }
    Tensor reshape(Shape shape) const;

    bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

private:
    friend class Tape;
    struct Impl {
        Shape shape;
        std::vector<Real> values;
        std::vector<Real> grad;
        bool requires_grad = false;
        bool leaf = true;
    };
    std::shared_ptr<Impl> impl_;
    Impl& impl() const;
};

// Ordered record of differentiable operations. Recording order is a
// topological order, so backward() replays it in reverse and visits each node
// exactly once. A tape is single-threaded; Scope binds it to the calling
// thread.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* active() noexcept;

    // Records `output` as computed from `inputs`; no-op unless a tape is
    // active and some input requires a gradient. Returns whether recorded.
    static bool record(std::initializer_list<Tensor> inputs, Tensor& output, BackwardFn fn);
    static bool record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn fn);

    // Seeds d(loss)/d(loss) = 1 and propagates. Intermediate gradients are
    // reset first; leaf gradients accumulate across calls.
    void backward(const Tensor& loss);

    void clear();
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor output;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
};

// Thread-local count of matrix products executed (linear and matmul).
std::size_t matmul_count() noexcept;
void reset_matmul_count() noexcept;

namespace detail {
void bump_matmul_count() noexcept;
}

} // namespace lliam
