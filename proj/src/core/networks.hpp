#pragma once

#include "core/graph.hpp"

namespace lslu {

struct NetworkSpec {
    std::string arch = "mini-vanillanet";  // or "mini-resnet"
    int depth = 5;                         // vanillanet: total layers, stem + stages + classifier
    int stages = 2;                        // resnet
    int blocks_per_stage = 1;              // resnet
    int width = 16;                        // channels out of the stem
    int terms = 3;                         // series terms; 0 keeps the plain base activation
    BaseActKind base = BaseActKind::ReLU;
    double leaky_slope = 0.01;
    bool downsampling_only = false;        // resnet: series only at stride-2 blocks
    std::vector<bool> downsample_mask;     // optional per-stride-2-block override
    bool blend_stages = false;             // vanillanet: paired 1x1 convs around a blended activation
    double dropout = 0.0;
    int64_t in_channels = 1, in_hw = 28, classes = 10;
    DType dtype = DType::F32;
    uint64_t seed = 0;
};

Graph build_mini_vanillanet(const NetworkSpec& spec);
Graph build_mini_resnet(const NetworkSpec& spec);
Graph build_network(const NetworkSpec& spec);  // dispatches on spec.arch

struct ParamsFlops {
    int64_t params = 0;
    int64_t flops = 0;  // multiply-accumulate count for one sample, conv = 2*Cin*k^2*Cout*Hout*Wout
};

ParamsFlops count_params_flops(const Graph& g);

}  // namespace lslu
