#include "core/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>

namespace lslu {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

struct Tensor::Impl {
    Shape shape;
    DType dtype = DType::F32;
    std::vector<std::byte> data;
    std::vector<std::byte> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool needs_grad = false;
};

Tensor::Impl& Tensor::impl() const {
    check(impl_ != nullptr, ErrorCode::Internal, "use of undefined tensor");
    return *impl_;
}

Tensor Tensor::zeros(Shape shape, DType dt) {
    for (int64_t d : shape) check(d >= 0, ErrorCode::ShapeMismatch, "negative extent in ", shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->dtype = dt;
    t.impl_->data.assign(static_cast<size_t>(shape_numel(t.impl_->shape)) * dtype_size(dt), std::byte{0});
    return t;
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({}, value, dt); }

Tensor Tensor::from(Shape shape, std::span<const double> values, DType dt) {
    check(shape_numel(shape) == static_cast<int64_t>(values.size()), ErrorCode::ShapeMismatch,
          "value count ", values.size(), " does not fill shape ", shape_str(shape));
    Tensor t = zeros(std::move(shape), dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        auto d = t.data<T>();
        for (size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
    });
    return t;
}

const Shape& Tensor::shape() const { return impl().shape; }
int64_t Tensor::dim(size_t i) const { return impl().shape.at(i); }
size_t Tensor::rank() const { return impl().shape.size(); }
int64_t Tensor::size() const { return shape_numel(impl().shape); }
DType Tensor::dtype() const { return impl().dtype; }

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    impl().requires_grad = v;
    impl().needs_grad = v;
    return *this;
}

bool Tensor::needs_grad() const { return impl_ && impl_->needs_grad; }
void Tensor::mark_needs_grad() { impl().needs_grad = true; }

template <class T> std::span<T> Tensor::data() {
    return {reinterpret_cast<T*>(impl().data.data()), static_cast<size_t>(size())};
}
template <class T> std::span<const T> Tensor::data() const {
    return {reinterpret_cast<const T*>(impl().data.data()), static_cast<size_t>(size())};
}
template std::span<float> Tensor::data<float>();
template std::span<double> Tensor::data<double>();
template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;

double Tensor::item() const {
    check(size() == 1, ErrorCode::NotScalar, "item() on tensor of shape ", shape_str(shape()));
    return value_at(0);
}

double Tensor::value_at(int64_t flat) const {
    check(flat >= 0 && flat < size(), ErrorCode::ShapeMismatch, "flat index ", flat, " out of range");
    return dispatch_dtype(dtype(), [&](auto tag) -> double {
        using T = decltype(tag);
        return static_cast<double>(data<T>()[static_cast<size_t>(flat)]);
    });
}

void Tensor::set_value_at(int64_t flat, double v) {
    check(flat >= 0 && flat < size(), ErrorCode::ShapeMismatch, "flat index ", flat, " out of range");
    dispatch_dtype(dtype(), [&](auto tag) {
        using T = decltype(tag);
        data<T>()[static_cast<size_t>(flat)] = static_cast<T>(v);
    });
}

void Tensor::fill(double v) {
    dispatch_dtype(dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = data<T>();
        std::fill(d.begin(), d.end(), static_cast<T>(v));
    });
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

template <class T> std::span<T> Tensor::grad_span() {
    Impl& im = impl();
    if (im.grad.empty()) im.grad.assign(im.data.size(), std::byte{0});
    return {reinterpret_cast<T*>(im.grad.data()), static_cast<size_t>(size())};
}
template std::span<float> Tensor::grad_span<float>();
template std::span<double> Tensor::grad_span<double>();

double Tensor::grad_at(int64_t flat) const {
    check(has_grad(), ErrorCode::MissingGrad, "gradient not populated");
    check(flat >= 0 && flat < size(), ErrorCode::ShapeMismatch, "flat index ", flat, " out of range");
    return dispatch_dtype(dtype(), [&](auto tag) -> double {
        using T = decltype(tag);
        const T* g = reinterpret_cast<const T*>(impl().grad.data());
        return static_cast<double>(g[flat]);
    });
}

Tensor Tensor::grad_tensor() const {
    check(has_grad(), ErrorCode::MissingGrad, "gradient not populated");
    Tensor out = zeros(shape(), dtype());
    std::memcpy(out.impl().data.data(), impl().grad.data(), impl().grad.size());
    return out;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

void Tensor::accumulate_grad_from(const Tensor& contribution) {
    check(contribution.shape() == shape() && contribution.dtype() == dtype(), ErrorCode::ShapeMismatch,
          "gradient contribution shape mismatch");
    dispatch_dtype(dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = grad_span<T>();
        auto c = contribution.data<T>();
        for (size_t i = 0; i < c.size(); ++i) g[i] += c[i];
    });
}

Tensor Tensor::detached_copy() const {
    Tensor out = zeros(shape(), dtype());
    std::memcpy(out.impl().data.data(), impl().data.data(), impl().data.size());
    return out;
}

Tensor Tensor::astype(DType dt) const {
    if (dt == dtype()) return detached_copy();
    Tensor out = zeros(shape(), dt);
    dispatch_dtype(dt, [&](auto otag) {
        using O = decltype(otag);
        auto od = out.data<O>();
        dispatch_dtype(dtype(), [&](auto itag) {
            using I = decltype(itag);
            auto id = data<I>();
            for (size_t i = 0; i < id.size(); ++i) od[i] = static_cast<O>(id[i]);
        });
    });
    return out;
}

const void* Tensor::storage_id() const { return impl_.get(); }

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_step) { steps_.push_back(std::move(backward_step)); }

void Tape::backward(const Tensor& loss) {
    check(loss.defined() && loss.size() == 1, ErrorCode::NotScalar,
          "backward requires a scalar loss");
    check(!consumed_, ErrorCode::TapeConsumed, "backward already ran on this tape");
    consumed_ = true;
    Tensor seed = loss;
    dispatch_dtype(loss.dtype(), [&](auto tag) {
        using T = decltype(tag);
        seed.grad_span<T>()[0] = T{1};
    });
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------
// op plumbing
// ---------------------------------------------------------------------------

void debug_check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
    bool ok = dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        for (T v : t.data<T>())
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    });
    assert(ok && "non-finite value produced by forward op");
#endif
}

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    for (const Tensor* t : inputs)
        if (t != nullptr && t->defined() && t->needs_grad()) return true;
    return false;
}

void finish_op(Tensor& out, std::initializer_list<const Tensor*> inputs, std::function<void()> back,
               const char* name) {
    debug_check_finite(out, name);
    if (should_record(inputs)) {
        out.mark_needs_grad();
        Tape::active()->record(std::move(back));
    }
}

template <class T>
void axpy(std::span<T> dst, std::span<const T> src, T a = T{1}) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

bool is_scalar_like(const Tensor& t) { return t.size() == 1; }

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

const char* ew_name(EwKind k) {
    switch (k) {
        case EwKind::Add: return "add";
        case EwKind::Sub: return "sub";
        case EwKind::Mul: return "mul";
        case EwKind::Div: return "div";
        case EwKind::Neg: return "neg";
        case EwKind::Exp: return "exp";
        case EwKind::Ln: return "ln";
        case EwKind::Tanh: return "tanh";
        case EwKind::Sqrt: return "sqrt";
        case EwKind::Scale: return "scale";
        case EwKind::Shift: return "shift";
    }
    return "?";
}

template <class T, class FwdFn>
Tensor binary_forward(const Tensor& a, const Tensor& b, bool b_scalar, FwdFn f) {
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    auto ad = a.data<T>();
    auto bd = b.data<T>();
    auto od = out.data<T>();
    if (b_scalar) {
        T bv = bd[0];
        for (size_t i = 0; i < ad.size(); ++i) od[i] = f(ad[i], bv);
    } else {
        for (size_t i = 0; i < ad.size(); ++i) od[i] = f(ad[i], bd[i]);
    }
    return out;
}

}  // namespace

Tensor ew_op(EwKind kind, const Tensor& a, const Tensor& b) {
    check(a.defined() && b.defined(), ErrorCode::Internal, "undefined operand");
    check(kind == EwKind::Add || kind == EwKind::Sub || kind == EwKind::Mul || kind == EwKind::Div,
          ErrorCode::Internal, "ew_op(", ew_name(kind), ") is not binary");
    check(a.dtype() == b.dtype(), ErrorCode::ShapeMismatch, "dtype mismatch in ", ew_name(kind));
    bool b_scalar = is_scalar_like(b) && b.shape() != a.shape();
    check(b_scalar || a.shape() == b.shape(), ErrorCode::ShapeMismatch, ew_name(kind), ": shapes ",
          shape_str(a.shape()), " vs ", shape_str(b.shape()));
    if (kind == EwKind::Div) {
        bool nonzero = dispatch_dtype(b.dtype(), [&](auto tag) {
            using T = decltype(tag);
            for (T v : b.data<T>())
                if (v == T{0}) return false;
            return true;
        });
        check(nonzero, ErrorCode::DomainError, "division by zero");
    }

    Tensor out = dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        switch (kind) {
            case EwKind::Add: return binary_forward<T>(a, b, b_scalar, [](T x, T y) { return x + y; });
            case EwKind::Sub: return binary_forward<T>(a, b, b_scalar, [](T x, T y) { return x - y; });
            case EwKind::Mul: return binary_forward<T>(a, b, b_scalar, [](T x, T y) { return x * y; });
            default: return binary_forward<T>(a, b, b_scalar, [](T x, T y) { return x / y; });
        }
    });

    Tensor ac = a, bc = b, oc = out;
    finish_op(out, {&a, &b}, [ac, bc, oc, kind, b_scalar]() mutable {
        if (!oc.has_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = oc.grad_span<T>();
            auto ad = ac.data<T>();
            auto bd = bc.data<T>();
            if (ac.needs_grad()) {
                auto ga = ac.grad_span<T>();
                switch (kind) {
                    case EwKind::Add:
                    case EwKind::Sub:
                        axpy<T>(ga, g);
                        break;
                    case EwKind::Mul:
                        if (b_scalar) axpy<T>(ga, g, bd[0]);
                        else
                            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bd[i];
                        break;
                    default:  // Div
                        if (b_scalar)
                            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / bd[0];
                        else
                            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / bd[i];
                }
            }
            if (bc.needs_grad()) {
                auto gb = bc.grad_span<T>();
                switch (kind) {
                    case EwKind::Add:
                        if (b_scalar) {
                            T s{0};
                            for (T v : g) s += v;
                            gb[0] += s;
                        } else
                            axpy<T>(gb, g);
                        break;
                    case EwKind::Sub:
                        if (b_scalar) {
                            T s{0};
                            for (T v : g) s += v;
                            gb[0] -= s;
                        } else
                            for (size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                        break;
                    case EwKind::Mul:
                        if (b_scalar) {
                            T s{0};
                            for (size_t i = 0; i < g.size(); ++i) s += g[i] * ad[i];
                            gb[0] += s;
                        } else
                            for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ad[i];
                        break;
                    default:  // Div: d/db (a/b) = -a/b^2
                        if (b_scalar) {
                            T s{0};
                            for (size_t i = 0; i < g.size(); ++i) s += g[i] * ad[i];
                            gb[0] -= s / (bd[0] * bd[0]);
                        } else
                            for (size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i] * ad[i] / (bd[i] * bd[i]);
                }
            }
        });
    }, ew_name(kind));
    return out;
}

Tensor ew_op(EwKind kind, const Tensor& a) {
    check(a.defined(), ErrorCode::Internal, "undefined operand");
    check(kind == EwKind::Neg || kind == EwKind::Exp || kind == EwKind::Ln || kind == EwKind::Tanh ||
              kind == EwKind::Sqrt,
          ErrorCode::Internal, "ew_op(", ew_name(kind), ") is not unary");
    if (kind == EwKind::Ln || kind == EwKind::Sqrt) {
        bool ok = dispatch_dtype(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            for (T v : a.data<T>()) {
                if (kind == EwKind::Ln && !(v > T{0})) return false;
                if (kind == EwKind::Sqrt && v < T{0}) return false;
            }
            return true;
        });
        check(ok, ErrorCode::DomainError, ew_name(kind), " outside domain");
    }

    Tensor out = dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        Tensor o = Tensor::zeros(a.shape(), a.dtype());
        auto ad = a.data<T>();
        auto od = o.data<T>();
        for (size_t i = 0; i < ad.size(); ++i) {
            switch (kind) {
                case EwKind::Neg: od[i] = -ad[i]; break;
                case EwKind::Exp: od[i] = std::exp(ad[i]); break;
                case EwKind::Ln: od[i] = std::log(ad[i]); break;
                case EwKind::Tanh: od[i] = std::tanh(ad[i]); break;
                default: od[i] = std::sqrt(ad[i]);
            }
        }
        return o;
    });

    Tensor ac = a, oc = out;
    finish_op(out, {&a}, [ac, oc, kind]() mutable {
        if (!oc.has_grad() || !ac.needs_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = oc.grad_span<T>();
            auto ga = ac.grad_span<T>();
            auto ad = ac.data<T>();
            auto od = oc.data<T>();
            for (size_t i = 0; i < ga.size(); ++i) {
                switch (kind) {
                    case EwKind::Neg: ga[i] -= g[i]; break;
                    case EwKind::Exp: ga[i] += g[i] * od[i]; break;
                    case EwKind::Ln: ga[i] += g[i] / ad[i]; break;
                    case EwKind::Tanh: ga[i] += g[i] * (T{1} - od[i] * od[i]); break;
                    default: ga[i] += g[i] * T{0.5} / od[i];
                }
            }
        });
    }, ew_name(kind));
    return out;
}

Tensor ew_op(EwKind kind, const Tensor& a, double c) {
    check(kind == EwKind::Scale || kind == EwKind::Shift, ErrorCode::Internal,
          "ew_op(", ew_name(kind), ") does not take a constant");
    Tensor out = dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        Tensor o = Tensor::zeros(a.shape(), a.dtype());
        auto ad = a.data<T>();
        auto od = o.data<T>();
        T cv = static_cast<T>(c);
        for (size_t i = 0; i < ad.size(); ++i) od[i] = kind == EwKind::Scale ? ad[i] * cv : ad[i] + cv;
        return o;
    });
    Tensor ac = a, oc = out;
    finish_op(out, {&a}, [ac, oc, kind, c]() mutable {
        if (!oc.has_grad() || !ac.needs_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = oc.grad_span<T>();
            auto ga = ac.grad_span<T>();
            axpy<T>(ga, g, kind == EwKind::Scale ? static_cast<T>(c) : T{1});
        });
    }, ew_name(kind));
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return ew_op(EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return ew_op(EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return ew_op(EwKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return ew_op(EwKind::Div, a, b); }
Tensor neg(const Tensor& a) { return ew_op(EwKind::Neg, a); }
Tensor exp(const Tensor& a) { return ew_op(EwKind::Exp, a); }
Tensor ln(const Tensor& a) { return ew_op(EwKind::Ln, a); }
Tensor tanh(const Tensor& a) { return ew_op(EwKind::Tanh, a); }
Tensor sqrt(const Tensor& a) { return ew_op(EwKind::Sqrt, a); }
Tensor scale(const Tensor& a, double c) { return ew_op(EwKind::Scale, a, c); }
Tensor shift(const Tensor& a, double c) { return ew_op(EwKind::Shift, a, c); }

// ---------------------------------------------------------------------------
// matmul / transpose / reshape
// ---------------------------------------------------------------------------

namespace {

// C[m,p] += A[m,k] * B[k,p]
template <class T>
void mm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
            T av = a[i * k + kk];
            const T* brow = b + kk * p;
            T* crow = c + i * p;
            for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,p] * B[k,p]^T  (i.e. A * B^T)
template <class T>
void mm_nt(const T* a, const T* b, T* c, int64_t m, int64_t p, int64_t k) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < k; ++j) {
            T s{0};
            const T* arow = a + i * p;
            const T* brow = b + j * p;
            for (int64_t kk = 0; kk < p; ++kk) s += arow[kk] * brow[kk];
            c[i * k + j] += s;
        }
    }
}

// C[k,p] += A[m,k]^T * B[m,p]
template <class T>
void mm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * p;
        for (int64_t kk = 0; kk < k; ++kk) {
            T av = arow[kk];
            T* crow = c + kk * p;
            for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, ErrorCode::ShapeMismatch, "matmul expects rank-2 operands, got ",
          shape_str(a.shape()), " and ", shape_str(b.shape()));
    check(a.dtype() == b.dtype(), ErrorCode::ShapeMismatch, "matmul dtype mismatch");
    int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    check(b.dim(0) == k, ErrorCode::ShapeMismatch, "matmul inner extents disagree: ", shape_str(a.shape()),
          " x ", shape_str(b.shape()));

    Tensor out = Tensor::zeros({m, p}, a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        mm_nn<T>(a.data<T>().data(), b.data<T>().data(), out.data<T>().data(), m, k, p);
    });

    Tensor ac = a, bc = b, oc = out;
    finish_op(out, {&a, &b}, [ac, bc, oc, m, k, p]() mutable {
        if (!oc.has_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* g = oc.grad_span<T>().data();
            if (ac.needs_grad())
                mm_nt<T>(g, bc.data<T>().data(), ac.grad_span<T>().data(), m, p, k);
            if (bc.needs_grad())
                mm_tn<T>(ac.data<T>().data(), g, bc.grad_span<T>().data(), m, k, p);
        });
    }, "matmul");
    return out;
}

Tensor transpose2d(const Tensor& a) {
    check(a.rank() == 2, ErrorCode::ShapeMismatch, "transpose2d expects rank 2, got ", shape_str(a.shape()));
    int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({n, m}, a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto ad = a.data<T>();
        auto od = out.data<T>();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) od[j * m + i] = ad[i * n + j];
    });
    Tensor ac = a, oc = out;
    finish_op(out, {&a}, [ac, oc, m, n]() mutable {
        if (!oc.has_grad() || !ac.needs_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = oc.grad_span<T>();
            auto ga = ac.grad_span<T>();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        });
    }, "transpose2d");
    return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
    check(shape_numel(shape) == a.size(), ErrorCode::ShapeMismatch, "reshape ", shape_str(a.shape()),
          " -> ", shape_str(shape), " changes element count");
    Tensor out = Tensor::zeros(shape, a.dtype());
    std::memcpy(out.data<float>().data(), a.data<float>().data(), static_cast<size_t>(a.size()) * dtype_size(a.dtype()));
    Tensor ac = a, oc = out;
    finish_op(out, {&a}, [ac, oc]() mutable {
        if (!oc.has_grad() || !ac.needs_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            axpy<T>(ac.grad_span<T>(), std::span<const T>(oc.grad_span<T>()));
        });
    }, "reshape");
    return out;
}

// ---------------------------------------------------------------------------
// reduce
// ---------------------------------------------------------------------------

namespace {

struct ReducePlan {
    Shape out_shape;
    std::vector<int64_t> out_stride;  // per input axis; 0 on reduced axes
    int64_t count = 1;                // elements folded into each output cell
};

ReducePlan plan_reduce(const Shape& in, const std::vector<int>& axes) {
    std::vector<bool> reduced(in.size(), false);
    for (int ax : axes) {
        check(ax >= 0 && static_cast<size_t>(ax) < in.size(), ErrorCode::InvalidAxis, "axis ", ax,
              " invalid for shape ", shape_str(in));
        check(!reduced[static_cast<size_t>(ax)], ErrorCode::InvalidAxis, "duplicate axis ", ax);
        reduced[static_cast<size_t>(ax)] = true;
    }
    ReducePlan plan;
    for (size_t d = 0; d < in.size(); ++d) {
        if (reduced[d]) plan.count *= in[d];
        else plan.out_shape.push_back(in[d]);
    }
    plan.out_stride.assign(in.size(), 0);
    int64_t stride = 1;
    for (size_t d = in.size(); d-- > 0;) {
        if (!reduced[d]) {
            plan.out_stride[d] = stride;
            stride *= in[d];
        }
    }
    return plan;
}

// Walks input row-major, invoking f(in_flat, out_flat).
template <class F>
void walk_mapped(const Shape& in, const std::vector<int64_t>& out_stride, F&& f) {
    int64_t n = shape_numel(in);
    if (n == 0) return;
    size_t rank = in.size();
    std::vector<int64_t> idx(rank, 0);
    int64_t out_flat = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
        f(flat, out_flat);
        for (size_t d = rank; d-- > 0;) {
            idx[d]++;
            out_flat += out_stride[d];
            if (idx[d] < in[d]) break;
            out_flat -= out_stride[d] * in[d];
            idx[d] = 0;
        }
    }
}

}  // namespace

Tensor reduce(ReduceKind kind, const Tensor& a, std::vector<int> axes) {
    ReducePlan plan = plan_reduce(a.shape(), axes);
    Tensor out = Tensor::zeros(plan.out_shape, a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto ad = a.data<T>();
        auto od = out.data<T>();
        walk_mapped(a.shape(), plan.out_stride, [&](int64_t i, int64_t o) { od[o] += ad[i]; });
        if (kind == ReduceKind::Mean && plan.count > 0) {
            T inv = static_cast<T>(1.0 / static_cast<double>(plan.count));
            for (auto& v : od) v *= inv;
        }
    });
    Tensor ac = a, oc = out;
    Shape in_shape = a.shape();
    finish_op(out, {&a}, [ac, oc, kind, plan, in_shape]() mutable {
        if (!oc.has_grad() || !ac.needs_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = oc.grad_span<T>();
            auto ga = ac.grad_span<T>();
            T w = kind == ReduceKind::Mean ? static_cast<T>(1.0 / static_cast<double>(plan.count)) : T{1};
            walk_mapped(in_shape, plan.out_stride, [&](int64_t i, int64_t o) { ga[i] += w * g[o]; });
        });
    }, "reduce");
    return out;
}

Tensor reduce_all(ReduceKind kind, const Tensor& a) {
    std::vector<int> axes(a.rank());
    for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
    return reduce(kind, a, axes);
}

// ---------------------------------------------------------------------------
// channel broadcast (axis 1)
// ---------------------------------------------------------------------------

namespace {

struct ChannelDims {
    int64_t outer, channels, inner;
};

ChannelDims channel_dims(const Tensor& x, const Tensor& v, const char* op) {
    check(x.rank() >= 2, ErrorCode::ShapeMismatch, op, " requires rank >= 2, got ", shape_str(x.shape()));
    check(v.rank() == 1 && v.dim(0) == x.dim(1), ErrorCode::ShapeMismatch, op, ": vector ",
          shape_str(v.shape()), " does not match channel extent of ", shape_str(x.shape()));
    check(x.dtype() == v.dtype(), ErrorCode::ShapeMismatch, op, " dtype mismatch");
    int64_t inner = 1;
    for (size_t d = 2; d < x.rank(); ++d) inner *= x.dim(d);
    return {x.dim(0), x.dim(1), inner};
}

}  // namespace

Tensor channel_mul(const Tensor& x, const Tensor& v) {
    ChannelDims dims = channel_dims(x, v, "channel_mul");
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto vd = v.data<T>();
        auto od = out.data<T>();
        int64_t i = 0;
        for (int64_t n = 0; n < dims.outer; ++n)
            for (int64_t c = 0; c < dims.channels; ++c) {
                T vv = vd[c];
                for (int64_t k = 0; k < dims.inner; ++k, ++i) od[i] = xd[i] * vv;
            }
    });
    Tensor xc = x, vc = v, oc = out;
    finish_op(out, {&x, &v}, [xc, vc, oc, dims]() mutable {
        if (!oc.has_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = oc.grad_span<T>();
            auto xd = xc.data<T>();
            auto vd = vc.data<T>();
            if (xc.needs_grad()) {
                auto gx = xc.grad_span<T>();
                int64_t i = 0;
                for (int64_t n = 0; n < dims.outer; ++n)
                    for (int64_t c = 0; c < dims.channels; ++c) {
                        T vv = vd[c];
                        for (int64_t k = 0; k < dims.inner; ++k, ++i) gx[i] += g[i] * vv;
                    }
            }
            if (vc.needs_grad()) {
                auto gv = vc.grad_span<T>();
                int64_t i = 0;
                for (int64_t n = 0; n < dims.outer; ++n)
                    for (int64_t c = 0; c < dims.channels; ++c) {
                        T s{0};
                        for (int64_t k = 0; k < dims.inner; ++k, ++i) s += g[i] * xd[i];
                        gv[c] += s;
                    }
            }
        });
    }, "channel_mul");
    return out;
}

Tensor channel_add(const Tensor& x, const Tensor& v) {
    ChannelDims dims = channel_dims(x, v, "channel_add");
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto vd = v.data<T>();
        auto od = out.data<T>();
        int64_t i = 0;
        for (int64_t n = 0; n < dims.outer; ++n)
            for (int64_t c = 0; c < dims.channels; ++c) {
                T vv = vd[c];
                for (int64_t k = 0; k < dims.inner; ++k, ++i) od[i] = xd[i] + vv;
            }
    });
    Tensor xc = x, vc = v, oc = out;
    finish_op(out, {&x, &v}, [xc, vc, oc, dims]() mutable {
        if (!oc.has_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = oc.grad_span<T>();
            if (xc.needs_grad()) axpy<T>(xc.grad_span<T>(), std::span<const T>(g));
            if (vc.needs_grad()) {
                auto gv = vc.grad_span<T>();
                int64_t i = 0;
                for (int64_t n = 0; n < dims.outer; ++n)
                    for (int64_t c = 0; c < dims.channels; ++c) {
                        T s{0};
                        for (int64_t k = 0; k < dims.inner; ++k, ++i) s += g[i];
                        gv[c] += s;
                    }
            }
        });
    }, "channel_add");
    return out;
}

Tensor slice_scalar(const Tensor& v, int64_t i) {
    check(i >= 0 && i < v.size(), ErrorCode::ShapeMismatch, "slice_scalar index ", i, " out of range for ",
          shape_str(v.shape()));
    Tensor out = Tensor::scalar(v.value_at(i), v.dtype());
    Tensor vc = v, oc = out;
    finish_op(out, {&v}, [vc, oc, i]() mutable {
        if (!oc.has_grad() || !vc.needs_grad()) return;
        dispatch_dtype(oc.dtype(), [&](auto tag) {
            using T = decltype(tag);
            vc.grad_span<T>()[static_cast<size_t>(i)] += oc.grad_span<T>()[0];
        });
    }, "slice_scalar");
    return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& x, double h) {
    check(h > 0.0, ErrorCode::DomainError, "finite_diff_grad requires h > 0");
    Tensor g = Tensor::zeros(x.shape(), x.dtype());
    Tensor probe = x.detached_copy();
    for (int64_t i = 0; i < x.size(); ++i) {
        double v = probe.value_at(i);
        probe.set_value_at(i, v + h);
        double fp = fn(probe);
        probe.set_value_at(i, v - h);
        double fm = fn(probe);
        probe.set_value_at(i, v);
        g.set_value_at(i, (fp - fm) / (2.0 * h));
    }
    return g;
}

}  // namespace lslu
