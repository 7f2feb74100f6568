#include "core/optim.hpp"

#include <cmath>

namespace lslu {

void zero_grads(std::vector<NamedParam>& params) {
    for (NamedParam& p : params) p.tensor.zero_grad();
}

void sgd_step(std::vector<NamedParam>& params, SgdState& state, double lr, double momentum) {
    if (state.velocity.empty())
        for (NamedParam& p : params) state.velocity.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
    check(state.velocity.size() == params.size(), ErrorCode::Internal, "sgd state out of step");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& param = params[i].tensor;
        check(param.has_grad(), ErrorCode::MissingGrad, "no gradient for ", params[i].name);
        Tensor& vel = state.velocity[i];
        dispatch_dtype(param.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pd = param.data<T>();
            auto vd = vel.data<T>();
            auto gd = param.grad_span<T>();
            T mu = static_cast<T>(momentum);
            T eta = static_cast<T>(lr);
            for (size_t e = 0; e < pd.size(); ++e) {
                vd[e] = mu * vd[e] + gd[e];
                pd[e] -= eta * vd[e];
            }
        });
    }
}

void adam_step(std::vector<NamedParam>& params, AdamState& state, double lr) {
    if (state.m.empty()) {
        for (NamedParam& p : params) {
            state.m.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
            state.v.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
        }
    }
    check(state.m.size() == params.size(), ErrorCode::Internal, "adam state out of step");
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& param = params[i].tensor;
        check(param.has_grad(), ErrorCode::MissingGrad, "no gradient for ", params[i].name);
        dispatch_dtype(param.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pd = param.data<T>();
            auto md = state.m[i].data<T>();
            auto vd = state.v[i].data<T>();
            auto gd = param.grad_span<T>();
            for (size_t e = 0; e < pd.size(); ++e) {
                double g = static_cast<double>(gd[e]);
                double m = state.beta1 * static_cast<double>(md[e]) + (1.0 - state.beta1) * g;
                double v = state.beta2 * static_cast<double>(vd[e]) + (1.0 - state.beta2) * g * g;
                md[e] = static_cast<T>(m);
                vd[e] = static_cast<T>(v);
                double mhat = m / bc1;
                double vhat = v / bc2;
                pd[e] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + state.eps));
            }
        });
    }
}

double cosine_lr(int t, int total, double eta_max, double eta_min) {
    check(total >= 1, ErrorCode::InvalidConfig, "cosine schedule needs total >= 1");
    check(t >= 0 && t <= total, ErrorCode::InvalidConfig, "epoch ", t, " outside [0,", total, "]");
    return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(M_PI * static_cast<double>(t) / total));
}

bool EarlyStopper::update(double value) {
    if (patience <= 0) return false;
    bool improved = !seen_any || (higher_is_better ? value > best : value < best);
    if (improved) {
        best = value;
        since_best = 0;
        seen_any = true;
        return false;
    }
    since_best += 1;
    return since_best >= patience;
}

}  // namespace lslu
