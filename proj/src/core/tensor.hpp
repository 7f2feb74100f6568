#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/dtype.hpp"
#include "core/error.hpp"

namespace lslu {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major n-dimensional array. Image tensors use NCHW order.
// A tensor is a cheap handle onto shared storage; values are treated as
// immutable once produced by an op. Leaf tensors (parameters, inputs) may
// be mutated in place by their owner (optimizer, running stats).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dt);
    static Tensor full(Shape shape, double value, DType dt);
    static Tensor scalar(double value, DType dt);
    static Tensor from(Shape shape, std::span<const double> values, DType dt);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int64_t dim(size_t i) const;
    size_t rank() const;
    int64_t size() const;
    DType dtype() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);
    // True when this tensor participates in the current backward pass.
    bool needs_grad() const;
    void mark_needs_grad();

    template <class T> std::span<T> data();
    template <class T> std::span<const T> data() const;

    double item() const;            // scalar value; NotScalar otherwise
    double value_at(int64_t flat) const;
    void set_value_at(int64_t flat, double v);
    void fill(double v);

    bool has_grad() const;
    double grad_at(int64_t flat) const;
    Tensor grad_tensor() const;     // detached copy of the gradient
    void zero_grad();
    // Accumulates `count` values into the gradient buffer (allocating it
    // zero-filled on first use). Typed variants used by backward rules.
    void accumulate_grad_from(const Tensor& contribution);
    template <class T> std::span<T> grad_span();  // allocates if absent

    Tensor detached_copy() const;
    Tensor astype(DType dt) const;

    const void* storage_id() const;

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    Impl& impl() const;
    friend class Tape;
};

// Ordered record of primitive ops for one forward evaluation; records are
// appended in execution order, so the reverse walk is a valid topological
// backward order. A Tape is activated for the current thread on
// construction and deactivated on destruction (scoped, non-reentrant ops).
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Populates grads of every needs-grad tensor reachable from `loss`.
    // `loss` must be scalar; a second call on the same tape is an error.
    void backward(const Tensor& loss);

    size_t op_count() const { return steps_.size(); }

    static Tape* active();
    void record(std::function<void()> backward_step);

private:
    std::vector<std::function<void()>> steps_;
    bool consumed_ = false;
    Tape* prev_ = nullptr;
};

enum class EwKind { Add, Sub, Mul, Div, Neg, Exp, Ln, Tanh, Sqrt, Scale, Shift };

// Elementwise op entry point. Binary kinds accept equal shapes or a scalar
// (1-element) b that broadcasts; Scale/Shift take the constant c.
Tensor ew_op(EwKind kind, const Tensor& a, const Tensor& b);
Tensor ew_op(EwKind kind, const Tensor& a);
Tensor ew_op(EwKind kind, const Tensor& a, double c);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor ln(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor shift(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

enum class ReduceKind { Sum, Mean };
// Reduces over the given axes (keepdims = false). Axes must be valid and
// unique; reducing all axes yields a scalar.
Tensor reduce(ReduceKind kind, const Tensor& a, std::vector<int> axes);
Tensor reduce_all(ReduceKind kind, const Tensor& a);

// Per-channel broadcast over axis 1: v has x.dim(1) elements.
Tensor channel_mul(const Tensor& x, const Tensor& v);
Tensor channel_add(const Tensor& x, const Tensor& v);

// Extracts element i of a vector as a scalar tensor with gradient flow.
Tensor slice_scalar(const Tensor& v, int64_t i);

// Central-difference gradient of fn at x: (fn(x+h e_i) - fn(x-h e_i))/(2h).
// Independent of the tape; fn must be deterministic.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& x, double h);

// Debug-build guard: asserts all values finite. No-op in release builds.
void debug_check_finite(const Tensor& t, const char* op);

}  // namespace lslu
