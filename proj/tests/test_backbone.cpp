#include <set>

#include "artadapter/backbone.hpp"
#include "artadapter/model.hpp"
#include "artadapter/ops.hpp"
#include "doctest.h"

using namespace artadapter;

namespace {

DiffusionConfig tiny_cfg() {
    DiffusionConfig cfg;
    cfg.image_size = 16;
    cfg.T = 20;
    cfg.unet_widths = {8, 8, 8, 8};
    cfg.context_dim = 16;
    cfg.cross_attention_resolutions = {4, 2};
    cfg.attention_heads = 2;
    cfg.max_text_tokens = 12;
    cfg.text_blocks = 1;
    return cfg;
}

}  // namespace

TEST_CASE("norm group selection") {
    CHECK(norm_groups(8) == 8);
    CHECK(norm_groups(32) == 32);
    CHECK(norm_groups(64) == 32);
    CHECK(norm_groups(48) == 24);
    CHECK(norm_groups(7) == 7);
    CHECK(norm_groups(1) == 1);
    CHECK(norm_groups(96) == 32);
    CHECK(norm_groups(33) == 33 / 3);  // largest divisor of 33 at most 32 is 11
}

TEST_CASE("unet forward preserves image shape") {
    Model m;
    m.build(tiny_cfg(), 5);
    m.text().set_vocab(Vocab::build({"one circle"}));

    Rng rng(41);
    Var x = make_constant(rng.gaussian_tensor({2, 3, 16, 16}));
    EncodedContext c1 = m.text().encode_prompt("one circle");
    EncodedContext c2 = m.text().encode_prompt("");
    Var eps = m.predict_noise(x, {3, 17}, {c1, c2});
    REQUIRE(eps->value.shape() == std::vector<int64_t>{2, 3, 16, 16});
    CHECK(eps->value.all_finite());

    // Zero-initialized output head: a fresh model predicts exactly zero.
    for (int64_t i = 0; i < eps->value.numel(); ++i) CHECK(eps->value.at(i) == 0.0);
}

TEST_CASE("unet forward is deterministic and batch-consistent") {
    Model m;
    m.build(tiny_cfg(), 5);
    m.text().set_vocab(Vocab::build({"one circle two squares"}));
    // Perturb the output head so outputs are nonzero.
    Rng pert(99);
    pert.fill_gaussian(m.params().get("unet.out_conv.weight")->value, 0.0, 0.05);

    Rng rng(42);
    Tensor xt = rng.gaussian_tensor({2, 3, 16, 16});
    EncodedContext ca = m.text().encode_prompt("one circle");
    EncodedContext cb = m.text().encode_prompt("two squares");

    Var out1 = m.predict_noise(make_constant(xt), {3, 9}, {ca, cb});
    Var out2 = m.predict_noise(make_constant(xt), {3, 9}, {ca, cb});
    CHECK(out1->value.bitwise_equal(out2->value));

    // Each batch row equals its single-sample forward.
    for (int64_t n = 0; n < 2; ++n) {
        Tensor xn({1, 3, 16, 16});
        for (int64_t i = 0; i < xn.numel(); ++i) xn.at(i) = xt.at(n * xn.numel() + i);
        Var single = m.predict_noise(make_constant(xn), {n == 0 ? 3 : 9},
                                     {n == 0 ? ca : cb});
        for (int64_t i = 0; i < xn.numel(); ++i)
            CHECK(single->value.at(i) ==
                  doctest::Approx(out1->value.at(n * xn.numel() + i)).epsilon(1e-12));
    }

    // The timestep matters.
    Var other_t = m.predict_noise(make_constant(xt), {4, 9}, {ca, cb});
    CHECK(!out1->value.bitwise_equal(other_t->value));
    // The context matters.
    Var other_c = m.predict_noise(make_constant(xt), {3, 9}, {cb, cb});
    CHECK(!out1->value.bitwise_equal(other_c->value));
}

TEST_CASE("unet input validation") {
    Model m;
    m.build(tiny_cfg(), 5);
    m.text().set_vocab(Vocab::build({"x"}));
    EncodedContext c = m.text().encode_prompt("x");
    Rng rng(43);

    // Batch count must match timesteps and contexts.
    Var x2 = make_constant(rng.gaussian_tensor({2, 3, 16, 16}));
    CHECK_THROWS_AS(m.predict_noise(x2, {3}, {c, c}), ShapeError);
    CHECK_THROWS_AS(m.predict_noise(x2, {3, 4}, {c}), ShapeError);
    // Spatial size must divide by 8.
    CHECK_THROWS_AS(
        m.predict_noise(make_constant(rng.gaussian_tensor({1, 3, 12, 12})), {3}, {c}),
        ShapeError);
}

TEST_CASE("aca features inject at the deepest encoder stage") {
    Model m;
    m.build(tiny_cfg(), 5);
    m.text().set_vocab(Vocab::build({"x"}));
    // Give the zero-initialized head and ACA tail nonzero weights so the
    // injection visibly changes the output.
    Rng pert(77);
    pert.fill_gaussian(m.params().get("unet.out_conv.weight")->value, 0.0, 0.05);

    Rng rng(44);
    Tensor xt = rng.gaussian_tensor({1, 3, 16, 16});
    EncodedContext c = m.text().encode_prompt("x");

    Var without = m.predict_noise(make_constant(xt), {3}, {c});
    // Correctly shaped features: (N, w2, size/8, size/8).
    Var feats = make_constant(rng.gaussian_tensor({1, 8, 2, 2}));
    Var with = m.predict_noise(make_constant(xt), {3}, {c}, feats);
    REQUIRE(with->value.same_shape(without->value));
    CHECK(!with->value.bitwise_equal(without->value));

    // Zero features reproduce the no-feature forward bit-exactly.
    Var zeros = make_constant(Tensor({1, 8, 2, 2}));
    Var with_zero = m.predict_noise(make_constant(xt), {3}, {c}, zeros);
    CHECK(with_zero->value.bitwise_equal(without->value));

    // Wrong shape is rejected with the expected-shape message.
    CHECK_THROWS_AS(
        m.predict_noise(make_constant(xt), {3}, {c}, make_constant(Tensor({1, 8, 4, 4}))),
        ShapeError);
}

TEST_CASE("adapted projections enumerate five layers in k/v pairs") {
    Model m;
    m.build(tiny_cfg(), 5);
    std::vector<AdaptedProjection*> projs = m.adapted_projections();
    REQUIRE(projs.size() == 10);
    std::set<std::string> paths;
    for (size_t i = 0; i < projs.size(); i += 2) {
        CHECK(projs[i]->kind == 'k');
        CHECK(projs[i + 1]->kind == 'v');
        CHECK(projs[i]->path == projs[i + 1]->path);
        paths.insert(projs[i]->path);
    }
    CHECK(paths == std::set<std::string>{"unet.enc2.cross", "unet.enc3.cross", "unet.mid.cross",
                                         "unet.dec3.cross", "unet.dec2.cross"});

    // Every projection input width is the context dim, output the stage width.
    for (AdaptedProjection* p : projs) {
        CHECK(p->w->value.dim(0) == 16);
        CHECK(p->delta_down->value.dim(1) == 4);
    }
}

TEST_CASE("style contexts flow through cross attention") {
    Model m;
    m.build(tiny_cfg(), 5);
    m.text().set_vocab(Vocab::build({"one circle"}));
    Rng pert(78);
    pert.fill_gaussian(m.params().get("unet.out_conv.weight")->value, 0.0, 0.05);

    Rng rng(45);
    Tensor xt = rng.gaussian_tensor({1, 3, 16, 16});
    Var style = make_constant(rng.gaussian_tensor({9, 16}));

    EncodedContext plain = m.text().encode_prompt("one circle");
    EncodedContext styled = m.text().encode_prompt("one circle", style);
    Var a = m.predict_noise(make_constant(xt), {3}, {plain});
    Var b = m.predict_noise(make_constant(xt), {3}, {styled});
    CHECK(!a->value.bitwise_equal(b->value));

    // Mixed-length batches work: one styled, one plain.
    Var pair = m.predict_noise(make_constant(rng.gaussian_tensor({2, 3, 16, 16})), {3, 5},
                               {styled, plain});
    CHECK(pair->value.all_finite());
}
