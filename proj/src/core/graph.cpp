#include "core/graph.hpp"

#include <algorithm>

namespace lslu {

using nlohmann::json;

std::string node_kind_name(const NodePayload& payload) {
    struct Visitor {
        std::string operator()(const ConvNode&) const { return "conv"; }
        std::string operator()(const BatchNormNode&) const { return "bn"; }
        std::string operator()(const ActNode&) const { return "act"; }
        std::string operator()(const PoolNode& p) const { return p.is_max ? "maxpool" : "avgpool"; }
        std::string operator()(const LinearNode&) const { return "linear"; }
        std::string operator()(const DropoutNode&) const { return "dropout"; }
        std::string operator()(const FlattenNode&) const { return "flatten"; }
        std::string operator()(const GlobalAvgPoolNode&) const { return "global_avg_pool"; }
        std::string operator()(const ResidualBeginNode&) const { return "residual_begin"; }
        std::string operator()(const ResidualEndNode&) const { return "residual_end"; }
    };
    return std::visit(Visitor{}, payload);
}

size_t count_nodes_of_kind(const Graph& g, const char* kind) {
    size_t n = 0;
    for (const Node& node : g.nodes)
        if (node_kind_name(node.payload) == kind) ++n;
    return n;
}

Tensor Graph::forward(const Tensor& x, const ForwardCtx& ctx) {
    check(x.defined() && x.dtype() == dtype, ErrorCode::ShapeMismatch,
          "input dtype does not match the graph");
    std::vector<Tensor> skips;
    Tensor cur = x;
    for (Node& node : nodes) {
        if (auto* conv = std::get_if<ConvNode>(&node.payload)) {
            cur = conv2d(cur, conv->layer);
        } else if (auto* bn = std::get_if<BatchNormNode>(&node.payload)) {
            cur = batchnorm(cur, bn->state, ctx.train, ctx.train && ctx.update_bn_stats);
        } else if (auto* act = std::get_if<ActNode>(&node.payload)) {
            switch (act->mode) {
                case ActMode::Base: cur = base_activation(act->base, cur, act->leaky_slope); break;
                case ActMode::Series: cur = series_forward(cur, act->series); break;
                case ActMode::Blended:
                    cur = blended_activation(act->base, cur, act->lambda, act->leaky_slope);
                    break;
            }
        } else if (auto* pool = std::get_if<PoolNode>(&node.payload)) {
            bool too_small = cur.rank() == 4 && (cur.dim(2) < pool->k || cur.dim(3) < pool->k);
            if (!(pool->skip_if_small && too_small))
                cur = pool->is_max ? maxpool2d(cur, pool->k, pool->stride)
                                   : avgpool2d(cur, pool->k, pool->stride);
        } else if (auto* lin = std::get_if<LinearNode>(&node.payload)) {
            cur = linear(cur, lin->layer);
        } else if (auto* drop = std::get_if<DropoutNode>(&node.payload)) {
            if (ctx.train && ctx.dropout_enabled && drop->p > 0.0) {
                check(static_cast<size_t>(drop->stream_index) < dropout_streams.size(),
                      ErrorCode::Internal, "dropout stream not seeded");
                cur = dropout(cur, drop->p, true, dropout_streams[drop->stream_index]);
            }
        } else if (std::get_if<FlattenNode>(&node.payload)) {
            cur = reshape(cur, {cur.dim(0), cur.size() / cur.dim(0)});
        } else if (std::get_if<GlobalAvgPoolNode>(&node.payload)) {
            check(cur.rank() == 4, ErrorCode::ShapeMismatch, "global_avg_pool expects NCHW, got ",
                  shape_str(cur.shape()));
            cur = reduce(ReduceKind::Mean, cur, {2, 3});
        } else if (auto* rb = std::get_if<ResidualBeginNode>(&node.payload)) {
            Tensor skip = cur;
            if (rb->has_projection) {
                skip = conv2d(skip, rb->proj);
                if (!rb->proj_bn_fused)
                    skip = batchnorm(skip, rb->proj_bn, ctx.train, ctx.train && ctx.update_bn_stats);
            }
            skips.push_back(skip);
        } else if (std::get_if<ResidualEndNode>(&node.payload)) {
            check(!skips.empty(), ErrorCode::InvalidConfig, "residual_end without matching begin");
            cur = add(cur, skips.back());
            skips.pop_back();
        }
        if (ctx.capture) ctx.capture(node.name, cur);
    }
    check(skips.empty(), ErrorCode::InvalidConfig, "unbalanced residual markers");
    return cur;
}

namespace {

void push_series_params(std::vector<NamedParam>& out, const std::string& prefix,
                        const SeriesActivationParams& p) {
    if (p.terms == 0) return;
    out.push_back({prefix + ".theta", p.theta});
    out.push_back({prefix + ".omega", p.omega});
    out.push_back({prefix + ".alpha", p.alpha});
    out.push_back({prefix + ".shift", p.shift});
}

}  // namespace

std::vector<NamedParam> Graph::parameters() {
    std::vector<NamedParam> out;
    for (Node& node : nodes) {
        if (auto* conv = std::get_if<ConvNode>(&node.payload)) {
            out.push_back({node.name + ".weight", conv->layer.weight});
            out.push_back({node.name + ".bias", conv->layer.bias});
        } else if (auto* bn = std::get_if<BatchNormNode>(&node.payload)) {
            out.push_back({node.name + ".gamma", bn->state.gamma});
            out.push_back({node.name + ".beta", bn->state.beta});
        } else if (auto* act = std::get_if<ActNode>(&node.payload)) {
            if (act->mode == ActMode::Series) push_series_params(out, node.name, act->series);
        } else if (auto* lin = std::get_if<LinearNode>(&node.payload)) {
            out.push_back({node.name + ".weight", lin->layer.weight});
            out.push_back({node.name + ".bias", lin->layer.bias});
        } else if (auto* rb = std::get_if<ResidualBeginNode>(&node.payload)) {
            if (rb->has_projection) {
                out.push_back({node.name + ".proj_weight", rb->proj.weight});
                out.push_back({node.name + ".proj_bias", rb->proj.bias});
                if (!rb->proj_bn_fused) {
                    out.push_back({node.name + ".proj_gamma", rb->proj_bn.gamma});
                    out.push_back({node.name + ".proj_beta", rb->proj_bn.beta});
                }
            }
        }
    }
    return out;
}

std::vector<NamedParam> Graph::state_tensors() {
    std::vector<NamedParam> out = parameters();
    for (Node& node : nodes) {
        if (auto* bn = std::get_if<BatchNormNode>(&node.payload)) {
            out.push_back({node.name + ".running_mean", bn->state.running_mean});
            out.push_back({node.name + ".running_var", bn->state.running_var});
        } else if (auto* rb = std::get_if<ResidualBeginNode>(&node.payload)) {
            if (rb->has_projection && !rb->proj_bn_fused) {
                out.push_back({node.name + ".proj_running_mean", rb->proj_bn.running_mean});
                out.push_back({node.name + ".proj_running_var", rb->proj_bn.running_var});
            }
        }
    }
    return out;
}

namespace {

json conv_structure(const ConvLayer& layer) {
    return {{"k", layer.k},       {"stride", layer.stride}, {"pad", layer.pad},
            {"c_in", layer.c_in}, {"c_out", layer.c_out}};
}

ConvLayer conv_from_structure(const json& j, DType dt) {
    ConvLayer layer;
    layer.k = j.at("k");
    layer.stride = j.at("stride");
    layer.pad = j.at("pad");
    layer.c_in = j.at("c_in");
    layer.c_out = j.at("c_out");
    layer.weight = Tensor::zeros({layer.c_out, layer.c_in * layer.k * layer.k}, dt);
    layer.weight.set_requires_grad(true);
    layer.bias = Tensor::zeros({layer.c_out}, dt);
    layer.bias.set_requires_grad(true);
    return layer;
}

json bn_structure(const BatchNormState& s) {
    return {{"channels", s.channels}, {"eps", s.eps}, {"momentum", s.momentum}, {"populated", s.populated}};
}

BatchNormState bn_from_structure(const json& j, DType dt) {
    BatchNormState s = make_batchnorm(j.at("channels"), dt);
    s.eps = j.at("eps");
    s.momentum = j.at("momentum");
    s.populated = j.at("populated");
    return s;
}

}  // namespace

json Graph::structure() const {
    json nodes_json = json::array();
    for (const Node& node : nodes) {
        json nj;
        nj["name"] = node.name;
        nj["kind"] = node_kind_name(node.payload);
        if (auto* conv = std::get_if<ConvNode>(&node.payload)) {
            nj["conv"] = conv_structure(conv->layer);
        } else if (auto* bn = std::get_if<BatchNormNode>(&node.payload)) {
            nj["bn"] = bn_structure(bn->state);
        } else if (auto* act = std::get_if<ActNode>(&node.payload)) {
            nj["mode"] = act->mode == ActMode::Base     ? "base"
                         : act->mode == ActMode::Series ? "series"
                                                        : "blended";
            nj["base"] = base_act_name(act->base);
            nj["slope"] = act->leaky_slope;
            nj["lambda"] = act->lambda;
            nj["terms"] = act->mode == ActMode::Series ? act->series.terms : 0;
        } else if (auto* pool = std::get_if<PoolNode>(&node.payload)) {
            nj["k"] = pool->k;
            nj["stride"] = pool->stride;
            nj["skip_if_small"] = pool->skip_if_small;
        } else if (auto* lin = std::get_if<LinearNode>(&node.payload)) {
            nj["in"] = lin->layer.weight.dim(1);
            nj["out"] = lin->layer.weight.dim(0);
        } else if (auto* drop = std::get_if<DropoutNode>(&node.payload)) {
            nj["p"] = drop->p;
        } else if (auto* rb = std::get_if<ResidualBeginNode>(&node.payload)) {
            nj["projection"] = rb->has_projection;
            if (rb->has_projection) {
                nj["proj"] = conv_structure(rb->proj);
                nj["proj_bn_fused"] = rb->proj_bn_fused;
                if (!rb->proj_bn_fused) nj["proj_bn"] = bn_structure(rb->proj_bn);
            }
        }
        nodes_json.push_back(std::move(nj));
    }
    return {{"arch", arch},
            {"dtype", dtype_name(dtype)},
            {"input_channels", input_channels},
            {"input_hw", input_hw},
            {"classes", classes},
            {"norm_mean", norm_mean},
            {"norm_std", norm_std},
            {"nodes", std::move(nodes_json)}};
}

Graph Graph::from_structure(const json& j) {
    Graph g;
    g.arch = j.at("arch");
    std::string dt_name = j.at("dtype");
    g.dtype = dt_name == "f64" ? DType::F64 : DType::F32;
    check(dt_name == "f32" || dt_name == "f64", ErrorCode::Corrupt, "unknown dtype '", dt_name, "'");
    g.input_channels = j.at("input_channels");
    g.input_hw = j.at("input_hw");
    g.classes = j.at("classes");
    g.norm_mean = j.at("norm_mean").get<std::vector<double>>();
    g.norm_std = j.at("norm_std").get<std::vector<double>>();

    int dropout_count = 0;
    for (const json& nj : j.at("nodes")) {
        Node node;
        node.name = nj.at("name");
        std::string kind = nj.at("kind");
        if (kind == "conv") {
            node.payload = ConvNode{conv_from_structure(nj.at("conv"), g.dtype)};
        } else if (kind == "bn") {
            node.payload = BatchNormNode{bn_from_structure(nj.at("bn"), g.dtype)};
        } else if (kind == "act") {
            ActNode act;
            std::string mode = nj.at("mode");
            act.mode = mode == "base" ? ActMode::Base : mode == "series" ? ActMode::Series : ActMode::Blended;
            act.base = base_act_from_string(nj.at("base"));
            act.leaky_slope = nj.at("slope");
            act.lambda = nj.at("lambda");
            if (act.mode == ActMode::Series)
                act.series = init_series(nj.at("terms"), act.base, g.dtype, act.leaky_slope);
            node.payload = std::move(act);
        } else if (kind == "maxpool" || kind == "avgpool") {
            PoolNode pool;
            pool.is_max = kind == "maxpool";
            pool.k = nj.at("k");
            pool.stride = nj.at("stride");
            pool.skip_if_small = nj.at("skip_if_small");
            node.payload = pool;
        } else if (kind == "linear") {
            LinearLayer layer;
            int64_t in = nj.at("in"), out = nj.at("out");
            layer.weight = Tensor::zeros({out, in}, g.dtype);
            layer.weight.set_requires_grad(true);
            layer.bias = Tensor::zeros({out}, g.dtype);
            layer.bias.set_requires_grad(true);
            node.payload = LinearNode{std::move(layer)};
        } else if (kind == "dropout") {
            node.payload = DropoutNode{nj.at("p"), dropout_count++};
        } else if (kind == "flatten") {
            node.payload = FlattenNode{};
        } else if (kind == "global_avg_pool") {
            node.payload = GlobalAvgPoolNode{};
        } else if (kind == "residual_begin") {
            ResidualBeginNode rb;
            rb.has_projection = nj.at("projection");
            if (rb.has_projection) {
                rb.proj = conv_from_structure(nj.at("proj"), g.dtype);
                rb.proj_bn_fused = nj.at("proj_bn_fused");
                if (!rb.proj_bn_fused) rb.proj_bn = bn_from_structure(nj.at("proj_bn"), g.dtype);
            }
            node.payload = std::move(rb);
        } else if (kind == "residual_end") {
            node.payload = ResidualEndNode{};
        } else {
            fail(ErrorCode::Corrupt, "unknown node kind '", kind, "'");
        }
        g.nodes.push_back(std::move(node));
    }
    g.seed_dropout(0);
    return g;
}

Graph Graph::clone() const {
    Graph copy = from_structure(structure());
    auto src = const_cast<Graph*>(this)->state_tensors();
    auto dst = copy.state_tensors();
    check(src.size() == dst.size(), ErrorCode::Internal, "clone tensor lists disagree");
    for (size_t i = 0; i < src.size(); ++i) {
        check(src[i].name == dst[i].name && src[i].tensor.shape() == dst[i].tensor.shape(),
              ErrorCode::Internal, "clone mismatch at ", src[i].name);
        for (int64_t e = 0; e < src[i].tensor.size(); ++e)
            dst[i].tensor.set_value_at(e, src[i].tensor.value_at(e));
    }
    return copy;
}

void Graph::seed_dropout(uint64_t master_seed) {
    dropout_streams.clear();
    size_t count = 0;
    for (Node& node : nodes)
        if (auto* drop = std::get_if<DropoutNode>(&node.payload)) {
            drop->stream_index = static_cast<int>(count);
            ++count;
        }
    for (size_t i = 0; i < count; ++i)
        dropout_streams.push_back(derive_stream(master_seed, "dropout", i));
}

}  // namespace lslu
