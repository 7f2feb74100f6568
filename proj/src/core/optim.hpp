#pragma once

#include <cstdint>
#include <vector>

#include "core/graph.hpp"
#include "core/tensor.hpp"

namespace lslu {

// v <- momentum*v + g;  param <- param - lr*v. Momentum 0 is plain descent.
struct SgdState {
    std::vector<Tensor> velocity;  // parallel to the parameter list
};

void sgd_step(std::vector<NamedParam>& params, SgdState& state, double lr, double momentum);

// Bias-corrected Adam.
struct AdamState {
    std::vector<Tensor> m, v;
    int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

void adam_step(std::vector<NamedParam>& params, AdamState& state, double lr);

// eta_t = eta_min + (eta_max - eta_min)/2 * (1 + cos(pi*t/T)); t in [0,T].
double cosine_lr(int t, int total, double eta_max, double eta_min);

// Counts epochs since the best value; ties do not count as improvement.
struct EarlyStopper {
    int patience = 0;  // 0 disables
    bool higher_is_better = true;
    double best = 0.0;
    int since_best = 0;
    bool seen_any = false;

    // feed one epoch's metric; true means stop now
    bool update(double value);
};

void zero_grads(std::vector<NamedParam>& params);

}  // namespace lslu
