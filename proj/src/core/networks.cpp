#include "core/networks.hpp"

#include <sstream>

namespace lslu {

namespace {

std::string node_name(size_t index, const char* kind) {
    std::ostringstream os;
    os << "n" << (index < 10 ? "0" : "") << index << "." << kind;
    return os.str();
}

ActNode make_act(const NetworkSpec& spec, bool series) {
    ActNode act;
    act.base = spec.base;
    act.leaky_slope = spec.leaky_slope;
    if (series && spec.terms > 0) {
        act.mode = ActMode::Series;
        act.series = init_series(spec.terms, spec.base, spec.dtype, spec.leaky_slope);
    } else {
        act.mode = ActMode::Base;
    }
    return act;
}

struct GraphBuilder {
    Graph g;
    size_t index = 0;
    void add(const char* kind, NodePayload payload) {
        g.nodes.push_back({node_name(index++, kind), std::move(payload)});
    }
};

}  // namespace

Graph build_mini_vanillanet(const NetworkSpec& spec) {
    check(spec.depth >= 4 && spec.depth <= 6, ErrorCode::InvalidDepth, "depth ", spec.depth,
          " outside [4,6]");
    check(spec.width >= 1 && spec.classes >= 2 && spec.in_channels >= 1 && spec.in_hw >= 4,
          ErrorCode::InvalidConfig, "bad extents");
    RngStream init = derive_stream(spec.seed, "init");

    GraphBuilder b;
    b.g.arch = "mini-vanillanet";
    b.g.dtype = spec.dtype;
    b.g.input_channels = spec.in_channels;
    b.g.input_hw = spec.in_hw;
    b.g.classes = spec.classes;

    // stem
    b.add("conv", ConvNode{make_conv(spec.in_channels, spec.width, 4, 4, 0, spec.dtype, init)});
    b.add("bn", BatchNormNode{make_batchnorm(spec.width, spec.dtype)});
    b.add("act", make_act(spec, true));

    int64_t c = spec.width;
    int stages = spec.depth - 2;
    for (int s = 0; s < stages; ++s) {
        int64_t c_next = std::min<int64_t>(c * 2, 64);
        if (spec.blend_stages) {
            b.add("conv", ConvNode{make_conv(c, c_next, 1, 1, 0, spec.dtype, init)});
            b.add("bn", BatchNormNode{make_batchnorm(c_next, spec.dtype)});
            ActNode blended;
            blended.mode = ActMode::Blended;
            blended.base = spec.base;
            blended.leaky_slope = spec.leaky_slope;
            blended.lambda = 0.0;
            b.add("act", std::move(blended));
            b.add("conv", ConvNode{make_conv(c_next, c_next, 1, 1, 0, spec.dtype, init)});
            b.add("bn", BatchNormNode{make_batchnorm(c_next, spec.dtype)});
            b.add("act", make_act(spec, true));
        } else {
            b.add("conv", ConvNode{make_conv(c, c_next, 1, 1, 0, spec.dtype, init)});
            b.add("bn", BatchNormNode{make_batchnorm(c_next, spec.dtype)});
            b.add("act", make_act(spec, true));
        }
        PoolNode pool;
        pool.is_max = true;
        pool.k = 2;
        pool.stride = 2;
        pool.skip_if_small = true;
        b.add("maxpool", pool);
        c = c_next;
    }

    if (spec.dropout > 0.0) b.add("dropout", DropoutNode{spec.dropout, 0});
    b.add("global_avg_pool", GlobalAvgPoolNode{});
    b.add("flatten", FlattenNode{});
    b.add("linear", LinearNode{make_linear(c, spec.classes, spec.dtype, init)});

    b.g.seed_dropout(spec.seed);
    return std::move(b.g);
}

Graph build_mini_resnet(const NetworkSpec& spec) {
    check(spec.stages >= 1 && spec.blocks_per_stage >= 1, ErrorCode::InvalidConfig,
          "resnet needs >= 1 stage and >= 1 block per stage");
    check(spec.width >= 1 && spec.classes >= 2 && spec.in_channels >= 1 && spec.in_hw >= 4,
          ErrorCode::InvalidConfig, "bad extents");
    RngStream init = derive_stream(spec.seed, "init");

    GraphBuilder b;
    b.g.arch = "mini-resnet";
    b.g.dtype = spec.dtype;
    b.g.input_channels = spec.in_channels;
    b.g.input_hw = spec.in_hw;
    b.g.classes = spec.classes;

    // stem
    b.add("conv", ConvNode{make_conv(spec.in_channels, spec.width, 3, 1, 1, spec.dtype, init)});
    b.add("bn", BatchNormNode{make_batchnorm(spec.width, spec.dtype)});
    b.add("act", make_act(spec, !spec.downsampling_only));

    int64_t c = spec.width;
    size_t downsample_index = 0;
    for (int s = 0; s < spec.stages; ++s) {
        for (int blk = 0; blk < spec.blocks_per_stage; ++blk) {
            bool downsamples = s > 0 && blk == 0;
            int stride = downsamples ? 2 : 1;
            int64_t c_out = downsamples ? std::min<int64_t>(c * 2, 64) : c;

            bool series_here;
            if (!spec.downsampling_only) {
                series_here = true;
            } else if (downsamples) {
                series_here = downsample_index >= spec.downsample_mask.size() ||
                              spec.downsample_mask[downsample_index];
                ++downsample_index;
            } else {
                series_here = false;
            }

            ResidualBeginNode rb;
            if (downsamples) {
                rb.has_projection = true;
                rb.proj = make_conv(c, c_out, 1, 2, 0, spec.dtype, init);
                rb.proj_bn = make_batchnorm(c_out, spec.dtype);
            }
            b.add("residual_begin", std::move(rb));
            b.add("conv", ConvNode{make_conv(c, c_out, 3, stride, 1, spec.dtype, init)});
            b.add("bn", BatchNormNode{make_batchnorm(c_out, spec.dtype)});
            b.add("act", make_act(spec, !spec.downsampling_only));
            b.add("conv", ConvNode{make_conv(c_out, c_out, 3, 1, 1, spec.dtype, init)});
            b.add("bn", BatchNormNode{make_batchnorm(c_out, spec.dtype)});
            b.add("residual_end", ResidualEndNode{});
            // post-add activation; in downsampling mode this is the one series
            // slot of a stride-2 block
            b.add("act", make_act(spec, series_here));
            c = c_out;
        }
    }

    if (spec.dropout > 0.0) b.add("dropout", DropoutNode{spec.dropout, 0});
    b.add("global_avg_pool", GlobalAvgPoolNode{});
    b.add("flatten", FlattenNode{});
    b.add("linear", LinearNode{make_linear(c, spec.classes, spec.dtype, init)});

    b.g.seed_dropout(spec.seed);
    return std::move(b.g);
}

Graph build_network(const NetworkSpec& spec) {
    if (spec.arch == "mini-vanillanet") return build_mini_vanillanet(spec);
    if (spec.arch == "mini-resnet") return build_mini_resnet(spec);
    fail(ErrorCode::InvalidConfig, "unknown architecture '", spec.arch, "'");
}

ParamsFlops count_params_flops(const Graph& g) {
    check(g.input_channels >= 1 && g.input_hw >= 1, ErrorCode::UnresolvedShape,
          "graph carries no input shape");
    ParamsFlops out;
    for (const NamedParam& p : const_cast<Graph&>(g).parameters()) out.params += p.tensor.size();

    int64_t c = g.input_channels, h = g.input_hw, w = g.input_hw;
    bool spatial = true;  // false once flattened to [N, features]
    for (const Node& node : g.nodes) {
        if (auto* conv = std::get_if<ConvNode>(&node.payload)) {
            const ConvLayer& l = conv->layer;
            int64_t h_out = (h + 2 * l.pad - l.k) / l.stride + 1;
            int64_t w_out = (w + 2 * l.pad - l.k) / l.stride + 1;
            out.flops += 2 * l.c_in * l.k * l.k * l.c_out * h_out * w_out;
            c = l.c_out;
            h = h_out;
            w = w_out;
        } else if (std::get_if<BatchNormNode>(&node.payload)) {
            out.flops += c * h * w;
        } else if (auto* act = std::get_if<ActNode>(&node.payload)) {
            int64_t n = act->mode == ActMode::Series ? std::max(1, act->series.terms) : 1;
            out.flops += n * c * (spatial ? h * w : 1);
        } else if (auto* pool = std::get_if<PoolNode>(&node.payload)) {
            if (!(pool->skip_if_small && (h < pool->k || w < pool->k))) {
                int64_t h_out = (h - pool->k) / pool->stride + 1;
                int64_t w_out = (w - pool->k) / pool->stride + 1;
                out.flops += static_cast<int64_t>(pool->k) * pool->k * c * h_out * w_out;
                h = h_out;
                w = w_out;
            }
        } else if (auto* lin = std::get_if<LinearNode>(&node.payload)) {
            out.flops += 2 * lin->layer.weight.dim(0) * lin->layer.weight.dim(1);
            c = lin->layer.weight.dim(0);
            spatial = false;
        } else if (std::get_if<GlobalAvgPoolNode>(&node.payload)) {
            out.flops += c * h * w;
            h = 1;
            w = 1;
            spatial = false;
        } else if (std::get_if<FlattenNode>(&node.payload)) {
            if (spatial) {
                c = c * h * w;
                h = 1;
                w = 1;
                spatial = false;
            }
        } else if (auto* rb = std::get_if<ResidualBeginNode>(&node.payload)) {
            if (rb->has_projection) {
                const ConvLayer& l = rb->proj;
                int64_t h_out = (h + 2 * l.pad - l.k) / l.stride + 1;
                int64_t w_out = (w + 2 * l.pad - l.k) / l.stride + 1;
                out.flops += 2 * l.c_in * l.k * l.k * l.c_out * h_out * w_out;
                if (!rb->proj_bn_fused) out.flops += l.c_out * h_out * w_out;
            }
        } else if (std::get_if<ResidualEndNode>(&node.payload)) {
            out.flops += c * h * w;
        }
    }
    return out;
}

}  // namespace lslu
