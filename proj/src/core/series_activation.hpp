#pragma once

#include "core/nn.hpp"
#include "core/tensor.hpp"

namespace lslu {

// Learnable series over a base activation f:
//   S(x) = sum_n  theta_n * alpha_n * f(x + shift_n) + omega_n
// applied elementwise. The four per-term scalars are shared across every
// channel and position of the tensor the activation is applied to.
// terms == 0 degenerates to plain f(x).
struct SeriesActivationParams {
    int terms = 0;
    BaseActKind base = BaseActKind::ReLU;
    double leaky_slope = 0.01;
    Tensor theta, omega, alpha, shift;  // each [terms]
};

// theta=1, omega=0, alpha=1/N, shift=0, so S == f at initialization.
SeriesActivationParams init_series(int terms, BaseActKind base, DType dt, double leaky_slope = 0.01);

Tensor series_forward(const Tensor& x, const SeriesActivationParams& p);

// phi(x) = (1-lambda)*f(x) + lambda*x; lambda=1 is the identity, which is what
// lets the surrounding 1x1 convolutions merge after training.
Tensor blended_activation(BaseActKind kind, const Tensor& x, double lambda, double slope = 0.01);

// lambda ramps linearly with the epoch index and saturates at 1.
double blend_lambda(int epoch, int total_epochs);

}  // namespace lslu
