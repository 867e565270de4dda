// SPDX-License-Identifier: Apache-2.0
#include "lliam/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "lliam/errors.hpp"

namespace lliam {

namespace {
thread_local Tape* t_active_tape = nullptr;
thread_local std::size_t t_matmul_count = 0;
} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    return os.str();
}

Tensor::Tensor(Shape shape, Real fill) : impl_(std::make_shared<Impl>()) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_to_string(shape));
    impl_->values.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : impl_(std::make_shared<Impl>()) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_to_string(shape));
    if (shape_numel(shape) != values.size())
        throw ShapeError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
}

Tensor::Impl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::numel() const { return impl().values.size(); }

std::size_t Tensor::dim(std::size_t i) const {
    const auto& s = shape();
    if (i >= s.size()) throw ShapeError("dimension index out of range");
    return s[i];
}

std::size_t Tensor::cols() const { return shape().back(); }
std::size_t Tensor::rows() const { return numel() / cols(); }

std::span<Real> Tensor::data() { return impl().values; }
std::span<const Real> Tensor::data() const { return impl().values; }

Real Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on a tensor of shape " + shape_to_string(shape()));
    return impl().values[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    impl().requires_grad = on;
    if (!on) impl().grad.clear();
    return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const Real> Tensor::grad() const { return impl().grad; }

std::span<Real> Tensor::grad_mut() const {
    auto& im = impl();
    if (im.grad.empty()) im.grad.assign(im.values.size(), 0.0);
    return im.grad;
}

void Tensor::zero_grad() const {
    auto& g = impl().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::clear_grad() { impl().grad.clear(); }

bool Tensor::is_leaf() const { return impl().leaf; }

Tensor Tensor::clone() const {
    Tensor out(shape(), std::vector<Real>(data().begin(), data().end()));
    return out;
}

Tensor Tensor::reshape(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_to_string(this->shape()) + " to " + shape_to_string(shape));
    Tensor out = clone();
    out.impl_->shape = std::move(shape);
    return out;
}

Tape::Scope::Scope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
Tape::Scope::~Scope() { t_active_tape = previous_; }

Tape* Tape::active() noexcept { return t_active_tape; }

bool Tape::record(std::initializer_list<Tensor> inputs, Tensor& output, BackwardFn fn) {
    Tape* tape = t_active_tape;
    if (!tape) return false;
    const bool needed = std::any_of(inputs.begin(), inputs.end(),
                                    [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (!needed) return false;
    output.impl().requires_grad = true;
    output.impl().leaf = false;
    tape->nodes_.push_back({output, std::move(fn)});
    return true;
}

bool Tape::record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn fn) {
    Tape* tape = t_active_tape;
    if (!tape) return false;
    const bool needed = std::any_of(inputs.begin(), inputs.end(),
                                    [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (!needed) return false;
    output.impl().requires_grad = true;
    output.impl().leaf = false;
    tape->nodes_.push_back({output, std::move(fn)});
    return true;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward() needs a scalar loss");
    if (!loss.requires_grad()) throw NumericError("loss does not depend on any trainable tensor");
    for (auto& node : nodes_) node.output.clear_grad();
    Tensor seed = loss;
    seed.grad_mut()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->output.has_grad()) continue;
        it->fn();
    }
}

void Tape::clear() { nodes_.clear(); }

std::size_t matmul_count() noexcept { return t_matmul_count; }
void reset_matmul_count() noexcept { t_matmul_count = 0; }
void detail::bump_matmul_count() noexcept { ++t_matmul_count; }

} // namespace lliam
