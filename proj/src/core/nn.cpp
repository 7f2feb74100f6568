#include "core/nn.hpp"

#include <cmath>

namespace lslu {

BaseActKind base_act_from_string(const std::string& name) {
    if (name == "relu") return BaseActKind::ReLU;
    if (name == "leakyrelu") return BaseActKind::LeakyReLU;
    if (name == "gelu") return BaseActKind::GELU;
    if (name == "silu") return BaseActKind::SiLU;
    fail(ErrorCode::InvalidConfig, "unknown base activation '", name, "'");
}

std::string base_act_name(BaseActKind kind) {
    switch (kind) {
        case BaseActKind::ReLU: return "relu";
        case BaseActKind::LeakyReLU: return "leakyrelu";
        case BaseActKind::GELU: return "gelu";
        case BaseActKind::SiLU: return "silu";
    }
    return "?";
}

double base_act_value(BaseActKind kind, double x, double slope) {
    switch (kind) {
        case BaseActKind::ReLU: return x > 0.0 ? x : 0.0;
        case BaseActKind::LeakyReLU: return x > 0.0 ? x : slope * x;
        case BaseActKind::GELU: return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
        case BaseActKind::SiLU: return x / (1.0 + std::exp(-x));
    }
    return 0.0;
}

double base_act_deriv(BaseActKind kind, double x, double slope) {
    switch (kind) {
        case BaseActKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
        case BaseActKind::LeakyReLU: return x > 0.0 ? 1.0 : slope;
        case BaseActKind::GELU: {
            double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
        }
        case BaseActKind::SiLU: {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        }
    }
    return 0.0;
}

Tensor base_activation(BaseActKind kind, const Tensor& x, double slope) {
    if (kind == BaseActKind::LeakyReLU)
        check(slope > 0.0 && slope < 1.0, ErrorCode::InvalidConfig, "leaky slope ", slope, " outside (0,1)");
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto od = out.data<T>();
        for (size_t i = 0; i < xd.size(); ++i)
            od[i] = static_cast<T>(base_act_value(kind, static_cast<double>(xd[i]), slope));
    });
    Tensor xc = x, oc = out;
    if (Tape::active() && x.needs_grad()) {
        out.mark_needs_grad();
        Tape::active()->record([xc, oc, kind, slope]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                auto g = oc.grad_span<T>();
                auto gx = xc.grad_span<T>();
                auto xd = xc.data<T>();
                for (size_t i = 0; i < gx.size(); ++i)
                    gx[i] += g[i] * static_cast<T>(base_act_deriv(kind, static_cast<double>(xd[i]), slope));
            });
        });
    }
    debug_check_finite(out, "base_activation");
    return out;
}

ConvLayer make_conv(int64_t c_in, int64_t c_out, int k, int stride, int pad, DType dt, RngStream& rng) {
    check(c_in >= 1 && c_out >= 1 && k >= 1 && stride >= 1 && pad >= 0, ErrorCode::InvalidConfig,
          "bad conv geometry: c_in=", c_in, " c_out=", c_out, " k=", k);
    ConvLayer layer;
    layer.k = k;
    layer.stride = stride;
    layer.pad = pad;
    layer.c_in = c_in;
    layer.c_out = c_out;
    int64_t fan_in = c_in * k * k;
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    layer.weight = Tensor::zeros({c_out, fan_in}, dt);
    for (int64_t i = 0; i < layer.weight.size(); ++i)
        layer.weight.set_value_at(i, rng.normal() * std_dev);
    layer.weight.set_requires_grad(true);
    layer.bias = Tensor::zeros({c_out}, dt);
    layer.bias.set_requires_grad(true);
    return layer;
}

Tensor conv2d(const Tensor& x, const ConvLayer& layer) {
    check(x.rank() == 4 && x.dim(1) == layer.c_in, ErrorCode::ShapeMismatch, "conv input ",
          shape_str(x.shape()), " does not carry ", layer.c_in, " channels");
    ConvGeom g = conv_geometry(x.shape(), layer.k, layer.stride, layer.pad);
    Tensor cols = im2col(x, layer.k, layer.stride, layer.pad);
    Tensor prod = matmul(layer.weight, cols);
    Tensor y = cols_to_nchw(prod, g.n, layer.c_out, g.h_out, g.w_out);
    return channel_add(y, layer.bias);
}

BatchNormState make_batchnorm(int64_t channels, DType dt) {
    check(channels >= 1, ErrorCode::InvalidConfig, "batchnorm needs >= 1 channel");
    BatchNormState s;
    s.channels = channels;
    s.gamma = Tensor::full({channels}, 1.0, dt);
    s.gamma.set_requires_grad(true);
    s.beta = Tensor::zeros({channels}, dt);
    s.beta.set_requires_grad(true);
    s.running_mean = Tensor::zeros({channels}, dt);
    s.running_var = Tensor::full({channels}, 1.0, dt);
    return s;
}

Tensor batchnorm(const Tensor& x, BatchNormState& s, bool train, bool update_stats) {
    check(x.rank() == 4 && x.dim(1) == s.channels, ErrorCode::ShapeMismatch, "batchnorm input ",
          shape_str(x.shape()), " does not carry ", s.channels, " channels");
    Tensor mean, var_eps_sqrt;
    if (train) {
        int64_t count = x.dim(0) * x.dim(2) * x.dim(3);
        check(count >= 2, ErrorCode::DegenerateBatch, "batchnorm needs N*H*W >= 2; got ", count);
        mean = reduce(ReduceKind::Mean, x, {0, 2, 3});
        Tensor centered = channel_add(x, neg(mean));
        Tensor var = reduce(ReduceKind::Mean, mul(centered, centered), {0, 2, 3});
        var_eps_sqrt = sqrt(shift(var, s.eps));
        if (update_stats) {
            double m = s.momentum;
            double correction = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
            for (int64_t c = 0; c < s.channels; ++c) {
                s.running_mean.set_value_at(c, (1.0 - m) * s.running_mean.value_at(c) + m * mean.value_at(c));
                s.running_var.set_value_at(
                    c, (1.0 - m) * s.running_var.value_at(c) + m * var.value_at(c) * correction);
            }
            s.populated = true;
        }
        Tensor inv = div(Tensor::full({s.channels}, 1.0, x.dtype()), var_eps_sqrt);
        Tensor xhat = channel_mul(centered, inv);
        return channel_add(channel_mul(xhat, s.gamma), s.beta);
    }
    check(s.populated, ErrorCode::UnpopulatedStats, "eval-mode batchnorm before any training batch");
    Tensor denom = sqrt(shift(s.running_var, s.eps));
    Tensor inv = div(Tensor::full({s.channels}, 1.0, x.dtype()), denom);
    Tensor xhat = channel_mul(channel_add(x, neg(s.running_mean)), inv);
    return channel_add(channel_mul(xhat, s.gamma), s.beta);
}

LinearLayer make_linear(int64_t in, int64_t out, DType dt, RngStream& rng) {
    check(in >= 1 && out >= 1, ErrorCode::InvalidConfig, "bad linear extents ", in, "x", out);
    LinearLayer layer;
    double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    layer.weight = Tensor::zeros({out, in}, dt);
    for (int64_t i = 0; i < layer.weight.size(); ++i) layer.weight.set_value_at(i, rng.normal() * std_dev);
    layer.weight.set_requires_grad(true);
    layer.bias = Tensor::zeros({out}, dt);
    layer.bias.set_requires_grad(true);
    return layer;
}

Tensor linear(const Tensor& x, const LinearLayer& layer) {
    check(x.rank() == 2 && x.dim(1) == layer.weight.dim(1), ErrorCode::ShapeMismatch, "linear input ",
          shape_str(x.shape()), " vs weight ", shape_str(layer.weight.shape()));
    Tensor y = matmul(x, transpose2d(layer.weight));
    return channel_add(y, layer.bias);
}

Tensor dropout(const Tensor& x, double p, bool train, RngStream& rng) {
    check(p >= 0.0 && p < 1.0, ErrorCode::InvalidRate, "dropout rate ", p, " outside [0,1)");
    if (!train || p == 0.0) return x;
    double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(x.size()));
    for (auto& m : *mask) m = rng.uniform() >= p ? 1 : 0;
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto od = out.data<T>();
        T inv = static_cast<T>(1.0 / keep);
        for (size_t i = 0; i < xd.size(); ++i) od[i] = (*mask)[i] ? xd[i] * inv : T{0};
    });
    Tensor xc = x, oc = out;
    if (Tape::active() && x.needs_grad()) {
        out.mark_needs_grad();
        Tape::active()->record([xc, oc, mask, keep]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                auto g = oc.grad_span<T>();
                auto gx = xc.grad_span<T>();
                T inv = static_cast<T>(1.0 / keep);
                for (size_t i = 0; i < gx.size(); ++i)
                    if ((*mask)[i]) gx[i] += g[i] * inv;
            });
        });
    }
    return out;
}

namespace {

void check_labels(const Tensor& logits, const std::vector<int32_t>& labels) {
    check(logits.rank() == 2, ErrorCode::ShapeMismatch, "loss expects [N,K] logits, got ",
          shape_str(logits.shape()));
    check(logits.dim(1) >= 2, ErrorCode::ShapeMismatch, "loss needs K >= 2 classes");
    check(static_cast<int64_t>(labels.size()) == logits.dim(0), ErrorCode::ShapeMismatch, "label count ",
          labels.size(), " vs batch ", logits.dim(0));
    for (int32_t l : labels)
        check(l >= 0 && l < logits.dim(1), ErrorCode::LabelOutOfRange, "label ", l, " outside [0,",
              logits.dim(1), ")");
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& labels) {
    check_labels(logits, labels);
    int64_t n = logits.dim(0), k = logits.dim(1);
    double total = 0.0;
    Tensor out = dispatch_dtype(logits.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto ld = logits.data<T>();
        for (int64_t i = 0; i < n; ++i) {
            const T* row = ld.data() + i * k;
            double m = static_cast<double>(row[0]);
            for (int64_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(row[j]));
            double sum = 0.0;
            for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - m);
            total += m + std::log(sum) - static_cast<double>(row[labels[static_cast<size_t>(i)]]);
        }
        return Tensor::scalar(total / static_cast<double>(n), logits.dtype());
    });
    Tensor lg = logits, oc = out;
    if (Tape::active() && logits.needs_grad()) {
        out.mark_needs_grad();
        Tape::active()->record([lg, oc, labels, n, k]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                T g = oc.grad_span<T>()[0];
                auto ld = lg.data<T>();
                auto gl = lg.grad_span<T>();
                for (int64_t i = 0; i < n; ++i) {
                    const T* row = ld.data() + i * k;
                    double m = static_cast<double>(row[0]);
                    for (int64_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(row[j]));
                    double sum = 0.0;
                    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - m);
                    for (int64_t j = 0; j < k; ++j) {
                        double p = std::exp(static_cast<double>(row[j]) - m) / sum;
                        double onehot = j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
                        gl[i * k + j] += g * static_cast<T>((p - onehot) / static_cast<double>(n));
                    }
                }
            });
        });
    }
    return out;
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<int32_t>& labels) {
    check_labels(logits, labels);
    int64_t n = logits.dim(0), k = logits.dim(1);
    double total = 0.0;
    Tensor out = dispatch_dtype(logits.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto ld = logits.data<T>();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j) {
                double z = static_cast<double>(ld[i * k + j]);
                double t = j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
                // max(z,0) - z·t + ln(1+e^-|z|): stable for either sign
                total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
            }
        return Tensor::scalar(total / static_cast<double>(n * k), logits.dtype());
    });
    Tensor lg = logits, oc = out;
    if (Tape::active() && logits.needs_grad()) {
        out.mark_needs_grad();
        Tape::active()->record([lg, oc, labels, n, k]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                T g = oc.grad_span<T>()[0];
                auto ld = lg.data<T>();
                auto gl = lg.grad_span<T>();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < k; ++j) {
                        double z = static_cast<double>(ld[i * k + j]);
                        double t = j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
                        double s = 1.0 / (1.0 + std::exp(-z));
                        gl[i * k + j] += g * static_cast<T>((s - t) / static_cast<double>(n * k));
                    }
            });
        });
    }
    return out;
}

}  // namespace lslu
