#pragma once

#include "core/tensor.hpp"

namespace lslu {

// Output extents for a k x k window over [N,C,H,W] input, floor division.
struct ConvGeom {
    int64_t n = 0, c = 0, h = 0, w = 0;
    int k = 0, stride = 1, pad = 0;
    int64_t h_out = 0, w_out = 0;
};

ConvGeom conv_geometry(const Shape& x, int k, int stride, int pad);

// [N,C,H,W] -> [(C*k*k) x (N*h_out*w_out)]; column j is the flattened
// receptive field of output position j, zero where the window overhangs.
Tensor im2col(const Tensor& x, int k, int stride, int pad);

// [C_out x (N*h_out*w_out)] -> [N,C_out,h_out,w_out]; inverse ordering of the
// im2col column index.
Tensor cols_to_nchw(const Tensor& cols, int64_t n, int64_t c_out, int64_t h_out, int64_t w_out);

// Unpadded window max / mean. maxpool grad goes to the first (row-major)
// maximal element of each window.
Tensor maxpool2d(const Tensor& x, int k, int stride);
Tensor avgpool2d(const Tensor& x, int k, int stride);

}  // namespace lslu
