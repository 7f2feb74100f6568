#include <cmath>

#include "doctest.h"

#include "core/optim.hpp"

using namespace lslu;

namespace {

NamedParam scalar_param(double value, double grad) {
    NamedParam p{"p", Tensor::scalar(value, DType::F64)};
    p.tensor.set_requires_grad(true);
    p.tensor.grad_span<double>()[0] = grad;
    return p;
}

void set_grad(NamedParam& p, double g) { p.tensor.grad_span<double>()[0] = g; }

}  // namespace

TEST_CASE("sgd plain step") {
    std::vector<NamedParam> params{scalar_param(1.0, 0.5)};
    SgdState state;
    sgd_step(params, state, 0.1, 0.0);
    CHECK(params[0].tensor.item() == doctest::Approx(0.95).epsilon(1e-15));

    set_grad(params[0], 0.0);
    sgd_step(params, state, 0.1, 0.0);
    CHECK(params[0].tensor.item() == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("sgd momentum recursion") {
    std::vector<NamedParam> params{scalar_param(0.0, 1.0)};
    SgdState state;
    sgd_step(params, state, 1.0, 0.9);
    CHECK(params[0].tensor.item() == doctest::Approx(-1.0));
    set_grad(params[0], 1.0);
    sgd_step(params, state, 1.0, 0.9);
    // second velocity = 0.9*1 + 1 = 1.9
    CHECK(params[0].tensor.item() == doctest::Approx(-1.0 - 1.9));
}

TEST_CASE("sgd requires populated grads") {
    std::vector<NamedParam> params{{"w", Tensor::scalar(1.0, DType::F64)}};
    SgdState state;
    CHECK_THROWS_WITH_AS(sgd_step(params, state, 0.1, 0.0), doctest::Contains("w"), Error);
}

TEST_CASE("sgd on a convex quadratic converges monotonically") {
    // loss = (x - a)^2 / 2, grad = x - a
    double a = 3.0;
    std::vector<NamedParam> params{scalar_param(-2.0, 0.0)};
    SgdState state;
    double prev_dist = std::abs(params[0].tensor.item() - a);
    for (int i = 0; i < 60; ++i) {
        set_grad(params[0], params[0].tensor.item() - a);
        sgd_step(params, state, 0.5, 0.0);
        double dist = std::abs(params[0].tensor.item() - a);
        CHECK(dist <= prev_dist + 1e-15);
        prev_dist = dist;
    }
    CHECK(prev_dist < 1e-8);
}

TEST_CASE("adam first step magnitude") {
    std::vector<NamedParam> params{scalar_param(0.0, 1.0)};
    AdamState state;
    adam_step(params, state, 1e-3);
    // mhat = 1, vhat = 1 at t=1, so the step is lr/(1 + eps)
    CHECK(params[0].tensor.item() == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam stays put on zero gradients") {
    std::vector<NamedParam> params{scalar_param(0.7, 0.0)};
    AdamState state;
    for (int i = 0; i < 25; ++i) adam_step(params, state, 1e-2);
    CHECK(params[0].tensor.item() == 0.7);
}

TEST_CASE("adam constant gradient steps approach lr") {
    std::vector<NamedParam> params{scalar_param(0.0, 0.25)};
    AdamState state;
    double lr = 1e-3;
    double before = params[0].tensor.item();
    for (int t = 0; t < 50; ++t) {
        set_grad(params[0], 0.25);
        adam_step(params, state, lr);
        double after = params[0].tensor.item();
        double step = before - after;  // positive: moving against the gradient
        // constant g makes mhat = g and vhat = g^2 exactly, so each step is
        // lr * g / (|g| + eps)
        CHECK(step == doctest::Approx(lr).epsilon(1e-6));
        CHECK(step <= lr);
        before = after;
    }
}

TEST_CASE("adam step magnitude bound over random gradient histories") {
    // Worst case per element is lr*(1-b1)/sqrt(1-b2) when the latest gradient
    // dominates both moments; no history can exceed it.
    AdamState probe;
    double bound = (1.0 - probe.beta1) / std::sqrt(1.0 - probe.beta2);
    RngStream rng(123);
    double lr = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<NamedParam> params{scalar_param(0.0, 0.0)};
        AdamState state;
        double before = 0.0;
        for (int t = 0; t < 40; ++t) {
            double g = rng.normal() * std::pow(10.0, rng.uniform(-3.0, 3.0));
            if (rng.uniform() < 0.25) g = 0.0;
            set_grad(params[0], g);
            adam_step(params, state, lr);
            double after = params[0].tensor.item();
            CHECK(std::abs(after - before) <= lr * bound * (1.0 + 1e-9));
            before = after;
        }
    }
}

TEST_CASE("adam requires populated grads") {
    std::vector<NamedParam> params{{"b", Tensor::scalar(0.0, DType::F64)}};
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, state, 1e-3), Error);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 10, 3.5e-3, 0.0) == doctest::Approx(3.5e-3).epsilon(1e-15));
    CHECK(cosine_lr(10, 10, 3.5e-3, 1e-5) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(cosine_lr(5, 10, 3.5e-3, 0.0) == doctest::Approx(1.75e-3).epsilon(1e-12));
}

TEST_CASE("cosine schedule is nonincreasing and hits both ends") {
    int total = 37;
    double prev = cosine_lr(0, total, 0.01, 1e-4);
    CHECK(prev == 0.01);
    for (int t = 1; t <= total; ++t) {
        double lr = cosine_lr(t, total, 0.01, 1e-4);
        CHECK(lr <= prev + 1e-18);
        prev = lr;
    }
    CHECK(prev == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(-1, total, 0.01, 0.0), Error);
    CHECK_THROWS_AS(cosine_lr(total + 1, total, 0.01, 0.0), Error);
}

TEST_CASE("early stopping counts epochs without improvement") {
    SUBCASE("strictly improving never stops") {
        EarlyStopper stop{7, true};
        for (int e = 0; e < 100; ++e) CHECK(!stop.update(static_cast<double>(e)));
    }
    SUBCASE("flat history stops once patience is exhausted") {
        EarlyStopper stop{7, true};
        CHECK(!stop.update(0.5));  // epoch 1 sets the best
        for (int e = 2; e <= 7; ++e) CHECK(!stop.update(0.5));
        CHECK(stop.update(0.5));  // epoch 8: seventh tie in a row
    }
    SUBCASE("an improvement resets the counter") {
        EarlyStopper stop{7, true};
        stop.update(0.5);
        for (int e = 0; e < 4; ++e) CHECK(!stop.update(0.5));
        CHECK(!stop.update(0.9));  // epoch 6 improves
        for (int e = 0; e < 6; ++e) CHECK(!stop.update(0.9));
        CHECK(stop.update(0.9));
    }
    SUBCASE("lower-is-better mode") {
        EarlyStopper stop{2, false};
        CHECK(!stop.update(1.0));
        CHECK(!stop.update(0.5));
        CHECK(!stop.update(0.6));
        CHECK(stop.update(0.5));  // tie with best counts against patience
    }
    SUBCASE("patience 0 disables stopping") {
        EarlyStopper stop{0, true};
        for (int e = 0; e < 50; ++e) CHECK(!stop.update(0.0));
    }
}

TEST_CASE("zero_grads clears accumulated gradients") {
    std::vector<NamedParam> params{scalar_param(1.0, 2.0)};
    CHECK(params[0].tensor.has_grad());
    zero_grads(params);
    CHECK(!params[0].tensor.has_grad());
}
