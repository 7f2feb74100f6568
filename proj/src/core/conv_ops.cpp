#include "core/conv_ops.hpp"

#include <limits>

namespace lslu {

ConvGeom conv_geometry(const Shape& x, int k, int stride, int pad) {
    check(x.size() == 4, ErrorCode::ShapeMismatch, "expected rank-4 NCHW input, got ", shape_str(x));
    check(k >= 1 && stride >= 1 && pad >= 0, ErrorCode::ShapeMismatch, "bad window: k=", k, " stride=",
          stride, " pad=", pad);
    ConvGeom g;
    g.n = x[0];
    g.c = x[1];
    g.h = x[2];
    g.w = x[3];
    g.k = k;
    g.stride = stride;
    g.pad = pad;
    check(g.h + 2 * pad >= k && g.w + 2 * pad >= k, ErrorCode::ShapeMismatch, "window k=", k,
          " exceeds padded input ", shape_str(x), " pad=", pad);
    g.h_out = (g.h + 2 * pad - k) / stride + 1;
    g.w_out = (g.w + 2 * pad - k) / stride + 1;
    return g;
}

namespace {

// f(col_row, col_col, in_flat) over every in-bounds (patch element, input cell) pair.
template <class F>
void walk_patches(const ConvGeom& g, F&& f) {
    int64_t cols = g.n * g.h_out * g.w_out;
    for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t oh = 0; oh < g.h_out; ++oh) {
            for (int64_t ow = 0; ow < g.w_out; ++ow) {
                int64_t col = (n * g.h_out + oh) * g.w_out + ow;
                int64_t ih0 = oh * g.stride - g.pad;
                int64_t iw0 = ow * g.stride - g.pad;
                for (int64_t c = 0; c < g.c; ++c) {
                    for (int64_t ki = 0; ki < g.k; ++ki) {
                        int64_t ih = ih0 + ki;
                        if (ih < 0 || ih >= g.h) continue;
                        for (int64_t kj = 0; kj < g.k; ++kj) {
                            int64_t iw = iw0 + kj;
                            if (iw < 0 || iw >= g.w) continue;
                            int64_t row = (c * g.k + ki) * g.k + kj;
                            int64_t in_flat = ((n * g.c + c) * g.h + ih) * g.w + iw;
                            f(row * cols + col, in_flat);
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor im2col(const Tensor& x, int k, int stride, int pad) {
    ConvGeom g = conv_geometry(x.shape(), k, stride, pad);
    int64_t rows = g.c * g.k * g.k;
    int64_t cols = g.n * g.h_out * g.w_out;
    Tensor out = Tensor::zeros({rows, cols}, x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto od = out.data<T>();
        walk_patches(g, [&](int64_t out_flat, int64_t in_flat) { od[out_flat] = xd[in_flat]; });
    });
    Tensor xc = x, oc = out;
    if (Tape::active() && x.needs_grad()) {
        out.mark_needs_grad();
        Tape::active()->record([xc, oc, g]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                auto go = oc.grad_span<T>();
                auto gx = xc.grad_span<T>();
                walk_patches(g, [&](int64_t out_flat, int64_t in_flat) { gx[in_flat] += go[out_flat]; });
            });
        });
    }
    debug_check_finite(out, "im2col");
    return out;
}

Tensor cols_to_nchw(const Tensor& cols, int64_t n, int64_t c_out, int64_t h_out, int64_t w_out) {
    check(cols.rank() == 2 && cols.dim(0) == c_out && cols.dim(1) == n * h_out * w_out,
          ErrorCode::ShapeMismatch, "cols ", shape_str(cols.shape()), " does not rearrange to [", n, ",",
          c_out, ",", h_out, ",", w_out, "]");
    int64_t positions = n * h_out * w_out;
    int64_t plane = h_out * w_out;
    Tensor out = Tensor::zeros({n, c_out, h_out, w_out}, cols.dtype());
    dispatch_dtype(cols.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto cd = cols.data<T>();
        auto od = out.data<T>();
        for (int64_t co = 0; co < c_out; ++co)
            for (int64_t b = 0; b < n; ++b)
                for (int64_t p = 0; p < plane; ++p)
                    od[(b * c_out + co) * plane + p] = cd[co * positions + b * plane + p];
    });
    Tensor cc = cols, oc = out;
    if (Tape::active() && cols.needs_grad()) {
        out.mark_needs_grad();
        Tape::active()->record([cc, oc, n, c_out, positions, plane]() mutable {
            if (!oc.has_grad()) return;
            dispatch_dtype(oc.dtype(), [&](auto tag) {
                using T = decltype(tag);
                auto go = oc.grad_span<T>();
                auto gc = cc.grad_span<T>();
                for (int64_t co = 0; co < c_out; ++co)
                    for (int64_t b = 0; b < n; ++b)
                        for (int64_t p = 0; p < plane; ++p)
                            gc[co * positions + b * plane + p] += go[(b * c_out + co) * plane + p];
            });
        });
    }
    return out;
}

namespace {

Tensor pool2d(const Tensor& x, int k, int stride, bool take_max) {
    ConvGeom g = conv_geometry(x.shape(), k, stride, /*pad=*/0);
    Tensor out = Tensor::zeros({g.n, g.c, g.h_out, g.w_out}, x.dtype());
    // flat input index of each window's chosen element (max pooling only)
    auto arg = std::make_shared<std::vector<int64_t>>();
    if (take_max) arg->resize(static_cast<size_t>(out.size()));
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xd = x.data<T>();
        auto od = out.data<T>();
        int64_t o = 0;
        for (int64_t n = 0; n < g.n; ++n)
            for (int64_t c = 0; c < g.c; ++c)
                for (int64_t oh = 0; oh < g.h_out; ++oh)
                    for (int64_t ow = 0; ow < g.w_out; ++ow, ++o) {
                        int64_t ih0 = oh * stride, iw0 = ow * stride;
                        T best = -std::numeric_limits<T>::infinity();
                        int64_t best_i = -1;
                        T acc{0};
                        for (int64_t ki = 0; ki < k; ++ki)
                            for (int64_t kj = 0; kj < k; ++kj) {
                                int64_t i = ((n * g.c + c) * g.h + ih0 + ki) * g.w + iw0 + kj;
                                if (take_max) {
                                    if (xd[i] > best) { best = xd[i]; best_i = i; }
                                } else {
                                    acc += xd[i];
                                }
                            }
                        if (take_max) {
                            od[o] = best;
                            (*arg)[static_cast<size_t>(o)] = best_i;
                        } else {
                            od[o] = acc / static_cast<T>(k * k);
                        }
                    }
    });
    Tensor xc = x, oc = out;
    if (Tape::active() && x.needs_grad()) {
        out.mark_needs_grad();
        if (take_max) {
            Tape::active()->record([xc, oc, arg]() mutable {
                if (!oc.has_grad()) return;
                dispatch_dtype(oc.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto go = oc.grad_span<T>();
                    auto gx = xc.grad_span<T>();
                    for (size_t o = 0; o < arg->size(); ++o) gx[(*arg)[o]] += go[o];
                });
            });
        } else {
            Tape::active()->record([xc, oc, g, k, stride]() mutable {
                if (!oc.has_grad()) return;
                dispatch_dtype(oc.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto go = oc.grad_span<T>();
                    auto gx = xc.grad_span<T>();
                    T inv = static_cast<T>(1.0 / (k * k));
                    int64_t o = 0;
                    for (int64_t n = 0; n < g.n; ++n)
                        for (int64_t c = 0; c < g.c; ++c)
                            for (int64_t oh = 0; oh < g.h_out; ++oh)
                                for (int64_t ow = 0; ow < g.w_out; ++ow, ++o) {
                                    T w = go[o] * inv;
                                    for (int64_t ki = 0; ki < k; ++ki)
                                        for (int64_t kj = 0; kj < k; ++kj)
                                            gx[((n * g.c + c) * g.h + oh * stride + ki) * g.w +
                                               ow * stride + kj] += w;
                                }
                });
            });
        }
    }
    debug_check_finite(out, take_max ? "maxpool2d" : "avgpool2d");
    return out;
}

}  // namespace

Tensor maxpool2d(const Tensor& x, int k, int stride) { return pool2d(x, k, stride, true); }
Tensor avgpool2d(const Tensor& x, int k, int stride) { return pool2d(x, k, stride, false); }

}  // namespace lslu
