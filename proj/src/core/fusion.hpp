#pragma once

#include <string>
#include <vector>

#include "core/graph.hpp"

namespace lslu {

// Folds eval-mode batchnorm into the preceding conv:
//   W'_i = (gamma_i / sqrt(var_i + eps)) * W_i
//   B'_i = (B_i - mean_i) * gamma_i / sqrt(var_i + eps) + beta_i
// Running statistics must be populated.
ConvLayer fuse_conv_bn(const ConvLayer& conv, const BatchNormState& bn);

// Collapses two pointwise convolutions into one: W = W2*W1, B = W2*B1 + B2.
// Both layers must be k=1, stride 1, pad 0 and channel-compatible, and
// nothing nonlinear may sit between them (the caller guarantees that).
ConvLayer merge_1x1_convs(const ConvLayer& first, const ConvLayer& second);

// Moves a shared series scale into the conv: W,B scale by theta, every
// theta_n resets to 1. Exact only for a positively homogeneous base (ReLU,
// LeakyReLU) with all shifts zero and one positive theta shared by all
// terms; anything else is declined with a reason.
struct FoldOutcome {
    bool folded = false;
    std::string reason;  // set when not folded
};
FoldOutcome fold_theta(ConvLayer& conv, SeriesActivationParams& series);

struct FusionRow {
    std::string transform;  // conv_bn | drop_identity_act | merge_1x1 | fold_theta | not_foldable
    std::string nodes;
    std::string detail;
};

struct FusionReport {
    std::vector<FusionRow> rows;
    int64_t probes = 0;
    double max_abs_diff = 0.0;
    bool argmax_preserved = true;
    std::string csv() const;  // one row per transform plus a summary row
};

struct FusedNetwork {
    Graph graph;
    FusionReport report;
};

// Full deploy pass over a copy of the graph: fuse every adjacent conv+bn
// pair (projection shortcuts included), drop fully-blended activations
// (lambda = 1), merge adjacent pointwise convs, then fold shared series
// scales. The report compares the copy against the original on a random
// eval-mode probe batch.
FusedNetwork fuse_network(Graph& g, int64_t probe_count = 100, uint64_t probe_seed = 0);

}  // namespace lslu
