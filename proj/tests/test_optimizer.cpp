#include <cmath>

#include "artadapter/optimizer.hpp"
#include "artadapter/ops.hpp"
#include "doctest.h"

using namespace artadapter;
using namespace artadapter::ops;

TEST_CASE("one AdamW step matches the closed form") {
    Var p = make_leaf(Tensor::from_vector({2}, {1.0, -2.0}), true, "p");
    ParamGroup g;
    g.params = {p};
    g.lr = 0.1;
    AdamW opt({g}, 0.9, 0.999, 1e-8, 0.01);

    p->ensure_grad();
    p->grad.at(0) = 0.5;
    p->grad.at(1) = -1.5;
    opt.step();
    CHECK(opt.step_count() == 1);

    // After one step: m = (1-b1)g, v = (1-b2)g^2, mhat = g, vhat = g^2,
    // update = lr * (g/(|g|+eps) + wd*p).
    for (int64_t i = 0; i < 2; ++i) {
        const scalar_t x0 = (i == 0) ? 1.0 : -2.0;
        const scalar_t gr = (i == 0) ? 0.5 : -1.5;
        const scalar_t want =
            x0 - 0.1 * (gr / (std::sqrt(gr * gr) + 1e-8) + 0.01 * x0);
        CHECK(p->value.at(i) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("AdamW converges on a quadratic") {
    Var p = make_leaf(Tensor::from_vector({1}, {5.0}), true, "p");
    ParamGroup g;
    g.params = {p};
    g.lr = 0.05;
    AdamW opt({g}, 0.9, 0.999, 1e-8, 0.0);

    for (int i = 0; i < 800; ++i) {
        opt.zero_grad();
        Var loss = sum_all(mul(p, p));
        backward(loss);
        opt.step();
    }
    CHECK(std::abs(p->value.at(0)) < 1e-2);
}

TEST_CASE("empty grads are skipped entirely") {
    // A parameter whose grad tensor was never materialized is untouched:
    // no decay, no moment update.
    Var touched = make_leaf(Tensor::from_vector({1}, {1.0}), true, "a");
    Var untouched = make_leaf(Tensor::from_vector({1}, {3.0}), true, "b");
    ParamGroup g;
    g.params = {touched, untouched};
    g.lr = 0.1;
    AdamW opt({g}, 0.9, 0.999, 1e-8, 0.5);  // heavy decay to make skips visible

    touched->ensure_grad();
    touched->grad.at(0) = 1.0;
    opt.step();
    CHECK(touched->value.at(0) < 1.0);
    CHECK(untouched->value.at(0) == 3.0);

    // Once materialized (even at zero), decay applies.
    untouched->ensure_grad();
    opt.step();
    CHECK(untouched->value.at(0) < 3.0);
}

TEST_CASE("groups keep separate learning rates") {
    Var a = make_leaf(Tensor::from_vector({1}, {1.0}), true, "a");
    Var b = make_leaf(Tensor::from_vector({1}, {1.0}), true, "b");
    ParamGroup g1, g2;
    g1.params = {a};
    g1.lr = 0.1;
    g2.params = {b};
    g2.lr = 0.001;
    AdamW opt({g1, g2}, 0.9, 0.999, 1e-8, 0.0);

    a->ensure_grad();
    a->grad.at(0) = 1.0;
    b->ensure_grad();
    b->grad.at(0) = 1.0;
    opt.step();
    const scalar_t da = 1.0 - a->value.at(0);
    const scalar_t db = 1.0 - b->value.at(0);
    CHECK(da == doctest::Approx(100.0 * db).epsilon(1e-6));
}

TEST_CASE("zero_grad clears materialized grads") {
    Var p = make_leaf(Tensor::from_vector({2}, {1.0, 2.0}), true, "p");
    ParamGroup g;
    g.params = {p};
    g.lr = 0.1;
    AdamW opt({g});
    p->ensure_grad();
    p->grad.at(0) = 9.0;
    opt.zero_grad();
    CHECK(!p->grad.empty());
    CHECK(p->grad.at(0) == 0.0);
}

TEST_CASE("constructor validates hyperparameters") {
    Var p = make_leaf(Tensor({1}), true, "p");
    ParamGroup g;
    g.params = {p};
    g.lr = 0.1;
    CHECK_NOTHROW(AdamW({g}));
    CHECK_THROWS_AS(AdamW({g}, 1.5, 0.999, 1e-8, 0.0), ArgumentError);
    CHECK_THROWS_AS(AdamW({g}, 0.9, -0.1, 1e-8, 0.0), ArgumentError);
    CHECK_THROWS_AS(AdamW({g}, 0.9, 0.999, 0.0, 0.0), ArgumentError);
    CHECK_THROWS_AS(AdamW({g}, 0.9, 0.999, 1e-8, -0.1), ArgumentError);
    ParamGroup bad;
    bad.params = {p};
    bad.lr = 0.0;
    CHECK_THROWS_AS(AdamW({bad}), ArgumentError);
}

TEST_CASE("deterministic given identical trajectories") {
    auto run = [&]() {
        Var p = make_leaf(Tensor::from_vector({3}, {0.3, -0.7, 2.0}), true, "p");
        ParamGroup g;
        g.params = {p};
        g.lr = 0.01;
        AdamW opt({g}, 0.9, 0.999, 1e-8, 0.01);
        for (int i = 0; i < 20; ++i) {
            opt.zero_grad();
            Var loss = sum_all(mul(mul(p, p), p));
            backward(loss);
            opt.step();
        }
        return p->value;
    };
    Tensor r1 = run();
    Tensor r2 = run();
    CHECK(r1.bitwise_equal(r2));
}
