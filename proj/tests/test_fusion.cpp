#include <cmath>
#include <vector>

#include "doctest.h"

#include "core/fusion.hpp"
#include "core/networks.hpp"
#include "support/oracles.hpp"

using namespace lslu;
using lslu::testing::max_abs_diff;
using lslu::testing::random_tensor;

namespace {

ConvLayer scalar_conv(double w, double b, DType dt = DType::F64) {
    ConvLayer layer;
    layer.k = 1;
    layer.c_in = 1;
    layer.c_out = 1;
    layer.weight = Tensor::from({1, 1}, std::vector<double>{w}, dt);
    layer.bias = Tensor::from({1}, std::vector<double>{b}, dt);
    return layer;
}

BatchNormState stats_bn(std::vector<double> mean, std::vector<double> var, std::vector<double> gamma,
                        std::vector<double> beta, double eps, DType dt = DType::F64) {
    auto n = static_cast<int64_t>(mean.size());
    BatchNormState s = make_batchnorm(n, dt);
    s.eps = eps;
    s.running_mean = Tensor::from({n}, mean, dt);
    s.running_var = Tensor::from({n}, var, dt);
    s.gamma = Tensor::from({n}, gamma, dt);
    s.beta = Tensor::from({n}, beta, dt);
    s.populated = true;
    return s;
}

ConvLayer random_conv(int64_t c_in, int64_t c_out, int k, int stride, int pad, DType dt,
                      uint64_t seed) {
    RngStream rng = derive_stream(seed, "fusion-conv");
    ConvLayer layer = make_conv(c_in, c_out, k, stride, pad, dt, rng);
    for (int64_t i = 0; i < layer.bias.size(); ++i) layer.bias.set_value_at(i, rng.uniform(-0.5, 0.5));
    return layer;
}

BatchNormState random_bn(int64_t channels, DType dt, uint64_t seed) {
    RngStream rng = derive_stream(seed, "fusion-bn");
    std::vector<double> mean(channels), var(channels), gamma(channels), beta(channels);
    for (auto& v : mean) v = rng.uniform(-1.0, 1.0);
    for (auto& v : var) v = rng.uniform(0.2, 2.0);
    for (auto& v : gamma) v = rng.uniform(0.5, 1.5);
    for (auto& v : beta) v = rng.uniform(-0.5, 0.5);
    return stats_bn(mean, var, gamma, beta, 1e-5, dt);
}

}  // namespace

TEST_CASE("conv+bn folding matches the hand-worked example") {
    ConvLayer conv = scalar_conv(1.0, 0.0);
    BatchNormState bn = stats_bn({2.0}, {4.0}, {2.0}, {1.0}, 0.0);
    ConvLayer fused = fuse_conv_bn(conv, bn);
    CHECK(fused.weight.value_at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fused.bias.value_at(0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("identity batchnorm folds to the original conv") {
    ConvLayer conv = scalar_conv(3.0, 0.5);
    BatchNormState bn = stats_bn({0.0}, {1.0}, {1.0}, {0.0}, 0.0);
    ConvLayer fused = fuse_conv_bn(conv, bn);
    CHECK(fused.weight.value_at(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(fused.bias.value_at(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("conv+bn folding is numerically equivalent to running both") {
    auto run = [&](DType dt, double tol) {
        ConvLayer conv = random_conv(3, 8, 3, 1, 1, dt, 7);
        BatchNormState bn = random_bn(8, dt, 8);
        ConvLayer fused = fuse_conv_bn(conv, bn);
        RngStream probe = derive_stream(99, "fusion-x");
        Tensor x = random_tensor({2, 3, 9, 9}, probe, dt);
        Tensor want = batchnorm(conv2d(x, conv), bn, false, false);
        Tensor got = conv2d(x, fused);
        CHECK(max_abs_diff(want, got) < tol);
    };
    SUBCASE("float32") { run(DType::F32, 1e-5); }
    SUBCASE("float64") { run(DType::F64, 1e-10); }
}

TEST_CASE("conv+bn folding rejects bad inputs") {
    ConvLayer conv = scalar_conv(1.0, 0.0);
    SUBCASE("channel mismatch") {
        BatchNormState bn = stats_bn({0.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}, {0.0, 0.0}, 0.0);
        try {
            fuse_conv_bn(conv, bn);
            FAIL("expected ChannelMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ChannelMismatch);
        }
    }
    SUBCASE("unpopulated running stats") {
        BatchNormState bn = make_batchnorm(1, DType::F64);
        try {
            fuse_conv_bn(conv, bn);
            FAIL("expected UnpopulatedStats");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::UnpopulatedStats);
        }
    }
}

TEST_CASE("pointwise merge matches the scalar example") {
    ConvLayer first = scalar_conv(2.0, 1.0);
    ConvLayer second = scalar_conv(3.0, -1.0);
    ConvLayer merged = merge_1x1_convs(first, second);
    CHECK(merged.weight.value_at(0) == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(merged.bias.value_at(0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("merging with an identity second conv returns the first") {
    DType dt = DType::F64;
    ConvLayer first = random_conv(4, 4, 1, 1, 0, dt, 21);
    ConvLayer identity;
    identity.k = 1;
    identity.c_in = 4;
    identity.c_out = 4;
    identity.weight = Tensor::zeros({4, 4}, dt);
    for (int64_t i = 0; i < 4; ++i) identity.weight.set_value_at(i * 4 + i, 1.0);
    identity.bias = Tensor::zeros({4}, dt);
    ConvLayer merged = merge_1x1_convs(first, identity);
    CHECK(max_abs_diff(merged.weight, first.weight) == 0.0);
    CHECK(max_abs_diff(merged.bias, first.bias) == 0.0);
}

TEST_CASE("pointwise merge is equivalent across a channel bottleneck") {
    DType dt = DType::F64;
    ConvLayer first = random_conv(8, 16, 1, 1, 0, dt, 31);
    ConvLayer second = random_conv(16, 4, 1, 1, 0, dt, 32);
    ConvLayer merged = merge_1x1_convs(first, second);
    RngStream probe = derive_stream(33, "fusion-x");
    Tensor x = random_tensor({3, 8, 5, 5}, probe, dt);
    Tensor want = conv2d(conv2d(x, first), second);
    Tensor got = conv2d(x, merged);
    CHECK(max_abs_diff(want, got) < 1e-10);
}

TEST_CASE("pointwise merge rejects unsupported geometry") {
    DType dt = DType::F64;
    SUBCASE("spatial kernel") {
        ConvLayer first = random_conv(4, 4, 3, 1, 1, dt, 41);
        ConvLayer second = random_conv(4, 4, 1, 1, 0, dt, 42);
        try {
            merge_1x1_convs(first, second);
            FAIL("expected GeometryUnsupported");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::GeometryUnsupported);
        }
    }
    SUBCASE("channel mismatch") {
        ConvLayer first = random_conv(4, 8, 1, 1, 0, dt, 43);
        ConvLayer second = random_conv(4, 4, 1, 1, 0, dt, 44);
        try {
            merge_1x1_convs(first, second);
            FAIL("expected ChannelMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ChannelMismatch);
        }
    }
}

TEST_CASE("theta folds into the conv when the base is homogeneous") {
    DType dt = DType::F64;
    ConvLayer conv = random_conv(2, 4, 1, 1, 0, dt, 51);
    SeriesActivationParams series = init_series(3, BaseActKind::ReLU, dt);
    for (int n = 0; n < 3; ++n) series.theta.set_value_at(n, 2.0);
    series.alpha.set_value_at(0, 0.2);
    series.alpha.set_value_at(1, 0.5);
    series.alpha.set_value_at(2, 0.3);

    RngStream probe = derive_stream(52, "fusion-x");
    Tensor x = random_tensor({2, 2, 6, 6}, probe, dt);
    Tensor before = series_forward(conv2d(x, conv), series);

    FoldOutcome outcome = fold_theta(conv, series);
    REQUIRE(outcome.folded);
    for (int n = 0; n < 3; ++n) CHECK(series.theta.value_at(n) == 1.0);
    Tensor after = series_forward(conv2d(x, conv), series);
    CHECK(max_abs_diff(before, after) < 1e-10);
}

TEST_CASE("theta of one folds to an unchanged conv") {
    DType dt = DType::F64;
    ConvLayer conv = random_conv(2, 2, 1, 1, 0, dt, 61);
    Tensor weight_before = conv.weight.detached_copy();
    SeriesActivationParams series = init_series(2, BaseActKind::ReLU, dt);
    FoldOutcome outcome = fold_theta(conv, series);
    CHECK(outcome.folded);
    CHECK(max_abs_diff(conv.weight, weight_before) == 0.0);
}

TEST_CASE("theta folding declines everything it cannot reproduce exactly") {
    DType dt = DType::F64;
    SUBCASE("smooth base") {
        ConvLayer conv = random_conv(2, 2, 1, 1, 0, dt, 71);
        SeriesActivationParams series = init_series(2, BaseActKind::GELU, dt);
        FoldOutcome outcome = fold_theta(conv, series);
        CHECK(!outcome.folded);
        CHECK(outcome.reason.find("homogeneous") != std::string::npos);
    }
    SUBCASE("nonzero shift") {
        ConvLayer conv = random_conv(2, 2, 1, 1, 0, dt, 72);
        SeriesActivationParams series = init_series(2, BaseActKind::ReLU, dt);
        series.shift.set_value_at(1, 0.25);
        CHECK(!fold_theta(conv, series).folded);
    }
    SUBCASE("thetas differ across terms") {
        ConvLayer conv = random_conv(2, 2, 1, 1, 0, dt, 73);
        SeriesActivationParams series = init_series(2, BaseActKind::ReLU, dt);
        series.theta.set_value_at(0, 2.0);
        CHECK(!fold_theta(conv, series).folded);
    }
    SUBCASE("nonpositive theta") {
        ConvLayer conv = random_conv(2, 2, 1, 1, 0, dt, 74);
        SeriesActivationParams series = init_series(2, BaseActKind::ReLU, dt);
        series.theta.set_value_at(0, -1.0);
        series.theta.set_value_at(1, -1.0);
        CHECK(!fold_theta(conv, series).folded);
    }
    SUBCASE("no terms") {
        ConvLayer conv = random_conv(2, 2, 1, 1, 0, dt, 75);
        SeriesActivationParams series = init_series(0, BaseActKind::ReLU, dt);
        CHECK(!fold_theta(conv, series).folded);
    }
}

namespace {

Graph trained_like_net(DType dt, uint64_t seed) {
    NetworkSpec spec;
    spec.arch = "mini-vanillanet";
    spec.depth = 5;
    spec.width = 8;
    spec.terms = 3;
    spec.in_channels = 1;
    spec.in_hw = 16;
    spec.classes = 4;
    spec.dtype = dt;
    spec.seed = seed;
    Graph g = build_network(spec);

    // a few training-mode passes so BN carries plausible statistics
    RngStream rng = derive_stream(seed, "fusion-warm");
    ForwardCtx ctx;
    ctx.train = true;
    ctx.update_bn_stats = true;
    for (int pass = 0; pass < 3; ++pass) {
        Tensor x = Tensor::zeros({8, 1, 16, 16}, dt);
        for (int64_t i = 0; i < x.size(); ++i) x.set_value_at(i, rng.normal());
        g.forward(x, ctx);
    }
    return g;
}

}  // namespace

TEST_CASE("whole-network fusion removes nodes and preserves outputs") {
    Graph g = trained_like_net(DType::F64, 5);
    int64_t bn_before = count_nodes_of_kind(g, "bn");
    int64_t nodes_before = static_cast<int64_t>(g.nodes.size());
    REQUIRE(bn_before > 0);

    FusedNetwork fused = fuse_network(g, 64, 17);
    CHECK(count_nodes_of_kind(fused.graph, "bn") == 0);
    CHECK(static_cast<int64_t>(fused.graph.nodes.size()) == nodes_before - bn_before);
    CHECK(fused.report.probes == 64);
    CHECK(fused.report.max_abs_diff < 1e-10);
    CHECK(fused.report.argmax_preserved);

    bool saw_conv_bn = false;
    for (const FusionRow& row : fused.report.rows) saw_conv_bn |= row.transform == "conv_bn";
    CHECK(saw_conv_bn);

    std::string csv = fused.report.csv();
    CHECK(csv.find("transform,nodes,detail") == 0);
    CHECK(csv.find("argmax_preserved") != std::string::npos);
}

TEST_CASE("whole-network fusion holds in float32 at eval tolerance") {
    Graph g = trained_like_net(DType::F32, 9);
    FusedNetwork fused = fuse_network(g, 100, 3);
    CHECK(fused.report.max_abs_diff < 1e-5);
    CHECK(fused.report.argmax_preserved);
}

TEST_CASE("whole-network fusion on a resnet handles projection shortcuts") {
    NetworkSpec spec;
    spec.arch = "mini-resnet";
    spec.stages = 2;
    spec.blocks_per_stage = 1;
    spec.width = 8;
    spec.terms = 2;
    spec.in_channels = 1;
    spec.in_hw = 16;
    spec.classes = 4;
    spec.dtype = DType::F64;
    spec.seed = 13;
    Graph g = build_network(spec);
    RngStream rng = derive_stream(13, "fusion-warm");
    ForwardCtx ctx;
    ctx.train = true;
    ctx.update_bn_stats = true;
    for (int pass = 0; pass < 3; ++pass) {
        Tensor x = Tensor::zeros({8, 1, 16, 16}, DType::F64);
        for (int64_t i = 0; i < x.size(); ++i) x.set_value_at(i, rng.normal());
        g.forward(x, ctx);
    }

    FusedNetwork fused = fuse_network(g, 32, 29);
    CHECK(count_nodes_of_kind(fused.graph, "bn") == 0);
    CHECK(fused.report.max_abs_diff < 1e-10);
    CHECK(fused.report.argmax_preserved);

    bool saw_proj = false;
    for (const FusionRow& row : fused.report.rows)
        saw_proj |= row.nodes.find(".proj") != std::string::npos;
    CHECK(saw_proj);
}

TEST_CASE("fusion leaves the source graph untouched") {
    Graph g = trained_like_net(DType::F64, 23);
    nlohmann::json before = g.structure();
    fuse_network(g, 8, 1);
    CHECK(g.structure() == before);
}
