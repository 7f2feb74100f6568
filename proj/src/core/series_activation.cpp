#include "core/series_activation.hpp"

#include <algorithm>
#include <cmath>

namespace lslu {

SeriesActivationParams init_series(int terms, BaseActKind base, DType dt, double leaky_slope) {
    check(terms >= 0, ErrorCode::InvalidConfig, "series term count ", terms, " negative");
    SeriesActivationParams p;
    p.terms = terms;
    p.base = base;
    p.leaky_slope = leaky_slope;
    if (terms > 0) {
        p.theta = Tensor::full({terms}, 1.0, dt);
        p.omega = Tensor::zeros({terms}, dt);
        p.alpha = Tensor::full({terms}, 1.0 / static_cast<double>(terms), dt);
        p.shift = Tensor::zeros({terms}, dt);
        p.theta.set_requires_grad(true);
        p.omega.set_requires_grad(true);
        p.alpha.set_requires_grad(true);
        p.shift.set_requires_grad(true);
    }
    return p;
}

Tensor series_forward(const Tensor& x, const SeriesActivationParams& p) {
    if (p.terms == 0) return base_activation(p.base, x, p.leaky_slope);
    check(p.theta.defined() && p.theta.size() == p.terms, ErrorCode::InvalidConfig,
          "series parameters do not carry ", p.terms, " terms");

    int terms = p.terms;
    BaseActKind kind = p.base;
    double slope = p.leaky_slope;

    bool shared_shift = true;
    for (int n = 1; n < terms; ++n)
        if (p.shift.value_at(n) != p.shift.value_at(0)) shared_shift = false;

    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto od = out.data<T>();
        if (shared_shift) {
            // One shared shift lets the series collapse to coeff*f(x+b)+bias.
            // Accumulating coeff in T keeps S bitwise equal to f at the
            // theta=1, alpha=1/N, omega=0, b=0 starting point.
            T coeff{0}, bias{0};
            for (int n = 0; n < terms; ++n) {
                coeff += static_cast<T>(p.theta.value_at(n)) * static_cast<T>(p.alpha.value_at(n));
                bias += static_cast<T>(p.omega.value_at(n));
            }
            double sh = p.shift.value_at(0);
            for (size_t i = 0; i < xd.size(); ++i) {
                T fv = static_cast<T>(base_act_value(kind, static_cast<double>(xd[i]) + sh, slope));
                od[i] = coeff * fv + bias;
            }
        } else {
            for (int n = 0; n < terms; ++n) {
                double th = p.theta.value_at(n), om = p.omega.value_at(n);
                double al = p.alpha.value_at(n), sh = p.shift.value_at(n);
                double w = th * al;
                for (size_t i = 0; i < xd.size(); ++i)
                    od[i] +=
                        static_cast<T>(w * base_act_value(kind, static_cast<double>(xd[i]) + sh, slope) + om);
            }
        }
    });

    Tensor xc = x, oc = out;
    SeriesActivationParams pc = p;
    bool any_grad = x.needs_grad() || p.theta.needs_grad() || p.omega.needs_grad() ||
                    p.alpha.needs_grad() || p.shift.needs_grad();
    if (Tape::active() && any_grad) {
        out.mark_needs_grad();
        Tape::active()->record([xc, oc, pc, terms, kind, slope]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                auto g = oc.grad_span<T>();
                auto xd = xc.data<T>();
                bool want_x = xc.needs_grad();
                std::span<T> gx;
                if (want_x) gx = xc.grad_span<T>();
                for (int n = 0; n < terms; ++n) {
                    double th = pc.theta.value_at(n), al = pc.alpha.value_at(n);
                    double sh = pc.shift.value_at(n);
                    double d_theta = 0.0, d_omega = 0.0, d_alpha = 0.0, d_shift = 0.0;
                    for (size_t i = 0; i < g.size(); ++i) {
                        double ge = static_cast<double>(g[i]);
                        double z = static_cast<double>(xd[i]) + sh;
                        double fv = base_act_value(kind, z, slope);
                        double fd = base_act_deriv(kind, z, slope);
                        d_theta += ge * al * fv;
                        d_omega += ge;
                        d_alpha += ge * th * fv;
                        d_shift += ge * th * al * fd;
                        if (want_x) gx[i] += static_cast<T>(ge * th * al * fd);
                    }
                    if (pc.theta.needs_grad()) pc.theta.grad_span<T>()[n] += static_cast<T>(d_theta);
                    if (pc.omega.needs_grad()) pc.omega.grad_span<T>()[n] += static_cast<T>(d_omega);
                    if (pc.alpha.needs_grad()) pc.alpha.grad_span<T>()[n] += static_cast<T>(d_alpha);
                    if (pc.shift.needs_grad()) pc.shift.grad_span<T>()[n] += static_cast<T>(d_shift);
                }
            });
        });
    }
    debug_check_finite(out, "series_forward");
    return out;
}

double blend_lambda(int epoch, int total_epochs) {
    check(total_epochs >= 1, ErrorCode::InvalidConfig, "blend schedule needs total_epochs >= 1");
    double lam = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return std::clamp(lam, 0.0, 1.0);
}

Tensor blended_activation(BaseActKind kind, const Tensor& x, double lambda, double slope) {
    check(lambda >= 0.0 && lambda <= 1.0, ErrorCode::InvalidConfig, "blend lambda ", lambda,
          " outside [0,1]");
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto od = out.data<T>();
        for (size_t i = 0; i < xd.size(); ++i) {
            double v = static_cast<double>(xd[i]);
            od[i] = static_cast<T>((1.0 - lambda) * base_act_value(kind, v, slope) + lambda * v);
        }
    });
    Tensor xc = x, oc = out;
    if (Tape::active() && x.needs_grad()) {
        out.mark_needs_grad();
        Tape::active()->record([xc, oc, kind, lambda, slope]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                auto g = oc.grad_span<T>();
                auto gx = xc.grad_span<T>();
                auto xd = xc.data<T>();
                for (size_t i = 0; i < gx.size(); ++i) {
                    double d = (1.0 - lambda) * base_act_deriv(kind, static_cast<double>(xd[i]), slope) + lambda;
                    gx[i] += g[i] * static_cast<T>(d);
                }
            });
        });
    }
    debug_check_finite(out, "blended_activation");
    return out;
}

}  // namespace lslu
