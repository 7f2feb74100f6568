#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/conv_ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace lslu {

enum class BaseActKind { ReLU, LeakyReLU, GELU, SiLU };

BaseActKind base_act_from_string(const std::string& name);
std::string base_act_name(BaseActKind kind);

double base_act_value(BaseActKind kind, double x, double slope);
double base_act_deriv(BaseActKind kind, double x, double slope);

Tensor base_activation(BaseActKind kind, const Tensor& x, double slope = 0.01);

// Weight is stored matmul-ready as [C_out, C_in*k*k]; element (co, (ci*k+ki)*k+kj)
// is the kernel tap at input channel ci, row ki, col kj.
struct ConvLayer {
    int k = 1, stride = 1, pad = 0;
    int64_t c_in = 0, c_out = 0;
    Tensor weight;
    Tensor bias;  // [C_out]
};

ConvLayer make_conv(int64_t c_in, int64_t c_out, int k, int stride, int pad, DType dt, RngStream& rng);
Tensor conv2d(const Tensor& x, const ConvLayer& layer);

struct BatchNormState {
    int64_t channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    Tensor gamma, beta;              // trainable
    Tensor running_mean, running_var;  // eval-mode stats; var holds the unbiased estimate
    bool populated = false;
};

BatchNormState make_batchnorm(int64_t channels, DType dt);

// train: normalize by batch moments (biased variance); eval: by running stats.
// update_stats=false keeps the running buffers untouched so a train-mode pass
// stays a pure function of its inputs.
Tensor batchnorm(const Tensor& x, BatchNormState& s, bool train, bool update_stats);

struct LinearLayer {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
};

LinearLayer make_linear(int64_t in, int64_t out, DType dt, RngStream& rng);
Tensor linear(const Tensor& x, const LinearLayer& layer);  // x: [N, in]

// Inverted dropout: train zeroes with prob p and scales survivors by 1/(1-p);
// eval returns the input handle unchanged.
Tensor dropout(const Tensor& x, double p, bool train, RngStream& rng);

// logits: [N, K]. cross_entropy averages over the batch; bce_with_logits
// targets the one-hot encoding and averages over batch and classes.
Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& labels);
Tensor bce_with_logits(const Tensor& logits, const std::vector<int32_t>& labels);

}  // namespace lslu
