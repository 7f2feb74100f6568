#include "core/fusion.hpp"

#include <cmath>
#include <sstream>

namespace lslu {

ConvLayer fuse_conv_bn(const ConvLayer& conv, const BatchNormState& bn) {
    check(bn.channels == conv.c_out, ErrorCode::ChannelMismatch, "batchnorm over ", bn.channels,
          " channels after a conv producing ", conv.c_out);
    check(bn.populated, ErrorCode::UnpopulatedStats, "running statistics never written");

    ConvLayer out = conv;
    out.weight = conv.weight.detached_copy();
    out.bias = conv.bias.detached_copy();
    int64_t cols = conv.weight.dim(1);
    for (int64_t i = 0; i < conv.c_out; ++i) {
        double gamma = bn.gamma.value_at(i);
        double beta = bn.beta.value_at(i);
        double mean = bn.running_mean.value_at(i);
        double var = bn.running_var.value_at(i);
        double s = gamma / std::sqrt(var + bn.eps);
        for (int64_t j = 0; j < cols; ++j)
            out.weight.set_value_at(i * cols + j, conv.weight.value_at(i * cols + j) * s);
        out.bias.set_value_at(i, (conv.bias.value_at(i) - mean) * s + beta);
    }
    out.weight.set_requires_grad(true);
    out.bias.set_requires_grad(true);
    return out;
}

ConvLayer merge_1x1_convs(const ConvLayer& first, const ConvLayer& second) {
    check(first.k == 1 && second.k == 1 && first.stride == 1 && second.stride == 1 &&
              first.pad == 0 && second.pad == 0,
          ErrorCode::GeometryUnsupported, "merge needs two 1x1 stride-1 pad-0 convs");
    check(first.c_out == second.c_in, ErrorCode::ChannelMismatch, "first conv emits ", first.c_out,
          " channels, second expects ", second.c_in);

    ConvLayer out;
    out.k = 1;
    out.stride = 1;
    out.pad = 0;
    out.c_in = first.c_in;
    out.c_out = second.c_out;
    DType dt = first.weight.dtype();
    out.weight = Tensor::zeros({out.c_out, out.c_in}, dt);
    out.bias = Tensor::zeros({out.c_out}, dt);
    for (int64_t i = 0; i < second.c_out; ++i) {
        double b = second.bias.value_at(i);
        for (int64_t j = 0; j < first.c_in; ++j) {
            double acc = 0.0;
            for (int64_t m = 0; m < first.c_out; ++m)
                acc += second.weight.value_at(i * second.c_in + m) *
                       first.weight.value_at(m * first.c_in + j);
            out.weight.set_value_at(i * out.c_in + j, acc);
        }
        for (int64_t m = 0; m < first.c_out; ++m)
            b += second.weight.value_at(i * second.c_in + m) * first.bias.value_at(m);
        out.bias.set_value_at(i, b);
    }
    out.weight.set_requires_grad(true);
    out.bias.set_requires_grad(true);
    return out;
}

FoldOutcome fold_theta(ConvLayer& conv, SeriesActivationParams& series) {
    if (series.terms == 0) return {false, "no series terms"};
    if (series.base != BaseActKind::ReLU && series.base != BaseActKind::LeakyReLU)
        return {false, std::string(base_act_name(series.base)) + " is not positively homogeneous"};
    for (int n = 0; n < series.terms; ++n)
        if (series.shift.value_at(n) != 0.0) return {false, "nonzero shift"};
    double theta = series.theta.value_at(0);
    for (int n = 1; n < series.terms; ++n)
        if (series.theta.value_at(n) != theta) return {false, "per-term theta values differ"};
    if (!(theta > 0.0)) return {false, "shared theta is not positive"};

    for (int64_t e = 0; e < conv.weight.size(); ++e)
        conv.weight.set_value_at(e, conv.weight.value_at(e) * theta);
    for (int64_t e = 0; e < conv.bias.size(); ++e)
        conv.bias.set_value_at(e, conv.bias.value_at(e) * theta);
    for (int n = 0; n < series.terms; ++n) series.theta.set_value_at(n, 1.0);
    return {true, ""};
}

std::string FusionReport::csv() const {
    std::ostringstream os;
    os << "transform,nodes,detail\n";
    for (const FusionRow& row : rows) os << row.transform << "," << row.nodes << "," << row.detail << "\n";
    os << "equivalence,probes=" << probes << ",max_abs_diff=" << max_abs_diff
       << (argmax_preserved ? " argmax_preserved" : " ARGMAX CHANGED") << "\n";
    return os.str();
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

FusedNetwork fuse_network(Graph& g, int64_t probe_count, uint64_t probe_seed) {
    FusedNetwork out;
    out.graph = g.clone();
    Graph& f = out.graph;
    std::vector<FusionRow>& rows = out.report.rows;

    // conv+bn pairs, projection shortcuts included
    for (size_t i = 0; i < f.nodes.size(); ++i) {
        if (auto* rb = std::get_if<ResidualBeginNode>(&f.nodes[i].payload)) {
            if (rb->has_projection && !rb->proj_bn_fused) {
                rb->proj = fuse_conv_bn(rb->proj, rb->proj_bn);
                rb->proj_bn_fused = true;
                rows.push_back({"conv_bn", f.nodes[i].name + ".proj", ""});
            }
            continue;
        }
        auto* conv = std::get_if<ConvNode>(&f.nodes[i].payload);
        if (!conv || i + 1 >= f.nodes.size()) continue;
        if (auto* bn = std::get_if<BatchNormNode>(&f.nodes[i + 1].payload)) {
            std::string pair = f.nodes[i].name + "+" + f.nodes[i + 1].name;
            conv->layer = fuse_conv_bn(conv->layer, bn->state);
            f.nodes.erase(f.nodes.begin() + static_cast<int64_t>(i) + 1);
            rows.push_back({"conv_bn", pair, ""});
        }
    }

    // fully-blended activations are the identity map
    for (size_t i = 0; i < f.nodes.size();) {
        auto* act = std::get_if<ActNode>(&f.nodes[i].payload);
        if (act && act->mode == ActMode::Blended && act->lambda >= 1.0) {
            rows.push_back({"drop_identity_act", f.nodes[i].name, "lambda=1"});
            f.nodes.erase(f.nodes.begin() + static_cast<int64_t>(i));
        } else {
            ++i;
        }
    }

    // adjacent pointwise convs; repeat so chains collapse fully
    for (bool merged = true; merged;) {
        merged = false;
        for (size_t i = 0; i + 1 < f.nodes.size(); ++i) {
            auto* a = std::get_if<ConvNode>(&f.nodes[i].payload);
            auto* b = std::get_if<ConvNode>(&f.nodes[i + 1].payload);
            if (!a || !b) continue;
            const ConvLayer& la = a->layer;
            const ConvLayer& lb = b->layer;
            if (la.k != 1 || lb.k != 1 || la.stride != 1 || lb.stride != 1 || la.pad != 0 || lb.pad != 0)
                continue;
            std::string pair = f.nodes[i].name + "+" + f.nodes[i + 1].name;
            a->layer = merge_1x1_convs(la, lb);
            f.nodes.erase(f.nodes.begin() + static_cast<int64_t>(i) + 1);
            rows.push_back({"merge_1x1", pair, ""});
            merged = true;
            break;
        }
    }

    // shared series scales directly after a conv
    for (size_t i = 0; i + 1 < f.nodes.size(); ++i) {
        auto* conv = std::get_if<ConvNode>(&f.nodes[i].payload);
        auto* act = std::get_if<ActNode>(&f.nodes[i + 1].payload);
        if (!conv || !act || act->mode != ActMode::Series) continue;
        double theta0 = act->series.terms > 0 ? act->series.theta.value_at(0) : 1.0;
        FoldOutcome fold = fold_theta(conv->layer, act->series);
        if (fold.folded)
            rows.push_back({"fold_theta", f.nodes[i].name + "+" + f.nodes[i + 1].name,
                            "theta=" + fmt_double(theta0)});
        else
            rows.push_back({"not_foldable", f.nodes[i + 1].name, fold.reason});
    }

    // equivalence probe, eval mode on both graphs
    if (probe_count > 0) {
        RngStream probe = derive_stream(probe_seed, "fusion-probe");
        Tensor x = Tensor::zeros({probe_count, g.input_channels, g.input_hw, g.input_hw}, g.dtype);
        for (int64_t e = 0; e < x.size(); ++e) x.set_value_at(e, probe.normal());
        ForwardCtx ctx;
        ctx.train = false;
        Tensor a = g.forward(x, ctx);
        Tensor b = f.forward(x, ctx);
        check(a.shape() == b.shape(), ErrorCode::Internal, "fused graph changed the output shape");
        out.report.probes = probe_count;
        int64_t classes = a.dim(1);
        for (int64_t s = 0; s < probe_count; ++s) {
            int64_t arg_a = 0, arg_b = 0;
            for (int64_t k = 0; k < classes; ++k) {
                double va = a.value_at(s * classes + k);
                double vb = b.value_at(s * classes + k);
                out.report.max_abs_diff = std::max(out.report.max_abs_diff, std::abs(va - vb));
                if (va > a.value_at(s * classes + arg_a)) arg_a = k;
                if (vb > b.value_at(s * classes + arg_b)) arg_b = k;
            }
            if (arg_a != arg_b) out.report.argmax_preserved = false;
        }
    }
    return out;
}

}  // namespace lslu
