#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <omp.h>

#include "artadapter/autograd.hpp"
#include "artadapter/checkpoint.hpp"
#include "artadapter/config.hpp"
#include "artadapter/common.hpp"
#include "artadapter/hash.hpp"
#include "artadapter/image.hpp"
#include "artadapter/model.hpp"
#include "artadapter/rng.hpp"
#include "artadapter/sampler.hpp"
#include "artadapter/style_encoder.hpp"
#include "artadapter/tensor.hpp"
#include "artadapter/trainer.hpp"

#include "doctest.h"

using namespace artadapter;
namespace fs = std::filesystem;

namespace {

DiffusionConfig tiny_config() {
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

Model tiny_model(uint64_t seed = 13) {
    Model m;
    m.build(tiny_config(), seed);
    return m;
}

// Fresh models gate their transformer blocks, the style MLP outputs, and the
// output head at zero, so references cannot reach the image. Nudge those
// gates when a test needs the style pathway to have a visible effect.
void wake_context(Model& m) {
    m.params().get("unet.mid.st.proj_out.weight")->value.fill(0.01);
    m.params().get("unet.out_conv.weight")->value.fill(0.01);
    m.params().get("style.low.out.weight")->value.fill(0.001);
    m.params().get("style.mid.out.weight")->value.fill(0.001);
    m.params().get("style.high.out.weight")->value.fill(0.001);
}

Tensor random_image(uint64_t seed, int64_t size = 16) {
    Rng rng(seed);
    Tensor img({3, size, size});
    for (int64_t i = 0; i < img.numel(); ++i) img.data()[i] = rng.uniform();
    return img;
}

SampleOptions quick_opts(uint64_t seed = 5, int64_t steps = 4) {
    SampleOptions opts;
    opts.steps = steps;
    opts.seed = seed;
    return opts;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && hash_tensor(a) == hash_tensor(b);
}

}  // namespace

TEST_CASE("classifier-free guidance arithmetic and endpoints") {
    Tensor cond({2, 2});
    Tensor uncond({2, 2});
    cond.fill(1.0);
    uncond.fill(2.0);

    SUBCASE("scale 9 extrapolates past the conditional branch") {
        const Tensor out = cfg_combine(cond, uncond, 9.0);
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(-7.0));
    }
    SUBCASE("generic scale matches the formula elementwise") {
        Rng rng(3);
        for (int64_t i = 0; i < cond.numel(); ++i) {
            cond.data()[i] = rng.gaussian();
            uncond.data()[i] = rng.gaussian();
        }
        const Tensor out = cfg_combine(cond, uncond, 2.5);
        for (int64_t i = 0; i < out.numel(); ++i) {
            const scalar_t expect = uncond.data()[i] + 2.5 * (cond.data()[i] - uncond.data()[i]);
            CHECK(out.data()[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("scale one returns the conditional branch bit-exactly") {
        // Values chosen so u + 1 * (c - u) would not round back to c.
        cond.fill(0.3);
        uncond.fill(0.1);
        const Tensor out = cfg_combine(cond, uncond, 1.0);
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == cond.data()[i]);
    }
    SUBCASE("scale zero returns the unconditional branch bit-exactly") {
        cond.fill(0.3);
        uncond.fill(0.1);
        const Tensor out = cfg_combine(cond, uncond, 0.0);
        for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == uncond.data()[i]);
    }
    SUBCASE("shape mismatch") {
        Tensor other({2, 3});
        CHECK_THROWS_AS(cfg_combine(cond, other, 1.0), ShapeError);
    }
}

TEST_CASE("sample options carry the published defaults and validate") {
    SampleOptions opts;
    CHECK(opts.steps == 50);
    CHECK(opts.cfg_scale == 9.0);
    CHECK(opts.eta == 0.0);
    CHECK(opts.alpha_scale == 1.0);
    CHECK_NOTHROW(opts.validate());

    opts.steps = 0;
    CHECK_THROWS_AS(opts.validate(), ArgumentError);
    opts = SampleOptions{};
    opts.cfg_scale = -1.0;
    CHECK_THROWS_AS(opts.validate(), ArgumentError);
    opts = SampleOptions{};
    opts.eta = 1.5;
    CHECK_THROWS_AS(opts.validate(), ArgumentError);
    opts = SampleOptions{};
    opts.alpha_scale = -0.5;
    CHECK_THROWS_AS(opts.validate(), ArgumentError);
}

TEST_CASE("ddim sampling is deterministic and thread-count independent") {
    Model m = tiny_model();
    const EncodedContext cond = m.text().encode_prompt("one circle");
    const EncodedContext uncond = m.text().encode_prompt("");

    omp_set_num_threads(1);
    const Tensor img_a = ddim_sample(m, cond, uncond, quick_opts(7));
    omp_set_num_threads(3);
    const Tensor img_b = ddim_sample(m, cond, uncond, quick_opts(7));
    omp_set_num_threads(1);
    const Tensor img_c = ddim_sample(m, cond, uncond, quick_opts(8));

    REQUIRE(img_a.shape() == std::vector<int64_t>({3, 16, 16}));
    CHECK(bitwise_equal(img_a, img_b));
    CHECK(!bitwise_equal(img_a, img_c));  // seed matters
    for (int64_t i = 0; i < img_a.numel(); ++i) {
        CHECK(img_a.data()[i] >= 0.0);
        CHECK(img_a.data()[i] <= 1.0);
    }
}

TEST_CASE("a single sampling step is legal") {
    Model m = tiny_model();
    const EncodedContext cond = m.text().encode_prompt("one circle");
    const EncodedContext uncond = m.text().encode_prompt("");
    const Tensor img = ddim_sample(m, cond, uncond, quick_opts(2, 1));
    CHECK(img.shape() == std::vector<int64_t>({3, 16, 16}));

    SampleOptions too_many = quick_opts(2, 21);  // T = 20
    CHECK_THROWS_AS(ddim_sample(m, cond, uncond, too_many), ArgumentError);
}

TEST_CASE("stochastic sampling stays seeded and differs from the ODE path") {
    Model m = tiny_model();
    const EncodedContext cond = m.text().encode_prompt("one circle");
    const EncodedContext uncond = m.text().encode_prompt("");

    SampleOptions noisy = quick_opts(9);
    noisy.eta = 1.0;
    const Tensor a = ddim_sample(m, cond, uncond, noisy);
    const Tensor b = ddim_sample(m, cond, uncond, noisy);
    const Tensor ode = ddim_sample(m, cond, uncond, quick_opts(9));
    CHECK(bitwise_equal(a, b));
    CHECK(!bitwise_equal(a, ode));
}

TEST_CASE("sampling never touches the content encoder") {
    Model m = tiny_model();
    const uint64_t before = m.aca().access_count();
    const GenerateResult r = generate(m, "one circle", {random_image(4)}, quick_opts());
    CHECK(m.aca().access_count() == before);
    CHECK(r.image01.shape() == std::vector<int64_t>({3, 16, 16}));
}

TEST_CASE("a non-finite weight surfaces as NumericError naming the step") {
    Model m = tiny_model();
    m.params().get("unet.out_conv.bias")->value.data()[0] =
        std::numeric_limits<scalar_t>::quiet_NaN();
    const EncodedContext cond = m.text().encode_prompt("one circle");
    const EncodedContext uncond = m.text().encode_prompt("");
    CHECK_THROWS_WITH_AS(ddim_sample(m, cond, uncond, quick_opts()),
                         doctest::Contains("step"), NumericError);
}

TEST_CASE("generate is reproducible and reports its settings") {
    Model m = tiny_model();
    const Tensor ref = random_image(11);

    const GenerateResult a = generate(m, "two squares", {ref}, quick_opts(3));
    const GenerateResult b = generate(m, "two squares", {ref}, quick_opts(3));
    CHECK(bitwise_equal(a.image01, b.image01));

    CHECK(a.metadata.at("prompt") == "two squares");
    CHECK(a.metadata.at("seed") == "3");
    CHECK(a.metadata.at("steps") == "4");
    CHECK(a.metadata.count("cfg_scale") == 1);
    CHECK(a.metadata.count("alpha_scale") == 1);
    CHECK(a.metadata.count("eta") == 1);
    CHECK(a.metadata.count("style_refs") == 1);
}

TEST_CASE("multi-reference generation equals sampling from the averaged embedding") {
    Model m = tiny_model();
    wake_context(m);
    const Tensor ref_a = random_image(21);
    const Tensor ref_b = random_image(22);
    const SampleOptions opts = quick_opts(6);

    const GenerateResult multi = generate(m, "one triangle", {ref_a, ref_b}, opts);

    // Rebuild the pipeline by hand around a precomputed averaged embedding.
    const StyleEmbedding avg =
        average_style_embeddings({m.style().encode_style(ref_a), m.style().encode_style(ref_b)});
    NoGradGuard ng;
    const EncodedContext cond =
        m.text().encode_prompt("one triangle", make_constant(avg.tokens));
    const EncodedContext uncond = m.text().encode_prompt("");
    const Tensor manual = ddim_sample(m, cond, uncond, opts);

    CHECK(bitwise_equal(multi.image01, manual));
}

TEST_CASE("mixing the same reference into all levels equals single-reference use") {
    Model m = tiny_model();
    wake_context(m);
    const Tensor ref = random_image(31);
    const SampleOptions opts = quick_opts(12);

    const GenerateResult single = generate(m, "one circle", {ref}, opts);
    const GenerateResult mixed = generate_mixed(m, "one circle", ref, ref, ref, opts);
    CHECK(bitwise_equal(single.image01, mixed.image01));

    // Distinct level sources change the image.
    const GenerateResult crossed =
        generate_mixed(m, "one circle", ref, random_image(32), ref, opts);
    CHECK(!bitwise_equal(single.image01, crossed.image01));
    CHECK(crossed.metadata.count("mix_low") == 1);
    CHECK(crossed.metadata.count("mix_mid") == 1);
    CHECK(crossed.metadata.count("mix_high") == 1);
}

TEST_CASE("a sidecar applies for the call and leaves stored weights untouched") {
    const Tensor ref = random_image(41);
    const fs::path dir = fs::temp_directory_path() / "artadapter_test_sampler";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string sidecar = (dir / "style.aasc").string();

    // Train residuals on one model and persist them.
    Model trained = tiny_model(17);
    wake_context(trained);
    fast_finetune(trained, {ref}, sidecar, 2, 0.02, 1);

    // A clean model with the sidecar must match a model that loaded the
    // residuals permanently, and must come back residual-free.
    Model clean = tiny_model(17);
    wake_context(clean);
    const std::vector<uint64_t> before{clean.section_hash(Section::Backbone),
                                       clean.section_hash(Section::FinetuneResidual)};
    const GenerateResult with_sidecar =
        generate(clean, "one circle", {ref}, quick_opts(2), sidecar);
    CHECK(clean.section_hash(Section::Backbone) == before[0]);
    CHECK(clean.section_hash(Section::FinetuneResidual) == before[1]);
    CHECK(!clean.has_finetune_residuals());

    Model loaded = tiny_model(17);
    wake_context(loaded);
    apply_finetune_sidecar(loaded, sidecar);
    const GenerateResult with_residuals = generate(loaded, "one circle", {ref}, quick_opts(2));
    CHECK(bitwise_equal(with_sidecar.image01, with_residuals.image01));
    CHECK(with_sidecar.metadata.count("sidecar") == 1);

    // The sidecar alters the result relative to the zero-shot model.
    Model plain = tiny_model(17);
    wake_context(plain);
    const GenerateResult zero_shot = generate(plain, "one circle", {ref}, quick_opts(2));
    CHECK(!bitwise_equal(with_sidecar.image01, zero_shot.image01));
}

TEST_CASE("a sidecar overlay restores residuals that were already present") {
    const Tensor ref = random_image(43);
    const fs::path dir = fs::temp_directory_path() / "artadapter_test_sampler_overlay";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string sidecar = (dir / "style.aasc").string();

    Model donor = tiny_model(19);
    wake_context(donor);
    fast_finetune(donor, {ref}, sidecar, 2, 0.02, 1);

    // Give the subject model its own, different residuals.
    Model subject = tiny_model(19);
    wake_context(subject);
    fast_finetune(subject, {random_image(44)}, (dir / "own.aasc").string(), 2, 0.05, 2);
    const uint64_t own_residuals = subject.section_hash(Section::FinetuneResidual);
    CHECK(own_residuals != donor.section_hash(Section::FinetuneResidual));

    generate(subject, "one circle", {ref}, quick_opts(2), sidecar);
    CHECK(subject.has_finetune_residuals());
    CHECK(subject.section_hash(Section::FinetuneResidual) == own_residuals);
}

TEST_CASE("mixing applies a sidecar only for its own uniform reference") {
    const Tensor ref = random_image(47);
    const Tensor other = random_image(48);
    const fs::path dir = fs::temp_directory_path() / "artadapter_test_sampler_mix";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string sidecar = (dir / "style.aasc").string();

    Model trained = tiny_model(23);
    wake_context(trained);
    fast_finetune(trained, {ref}, sidecar, 2, 0.02, 1);

    Model m = tiny_model(23);
    wake_context(m);
    const GenerateResult uniform =
        generate_mixed(m, "one circle", ref, ref, ref, quick_opts(2), sidecar);
    CHECK(uniform.metadata.count("sidecar") == 1);
    CHECK(uniform.metadata.count("sidecar_skipped") == 0);

    const GenerateResult crossed =
        generate_mixed(m, "one circle", ref, other, ref, quick_opts(2), sidecar);
    CHECK(crossed.metadata.count("sidecar_skipped") == 1);

    const GenerateResult forced =
        generate_mixed(m, "one circle", ref, other, ref, quick_opts(2), sidecar, true);
    CHECK(forced.metadata.count("sidecar") == 1);
    CHECK(forced.metadata.count("sidecar_skipped") == 0);
    CHECK(!bitwise_equal(forced.image01, crossed.image01));
}

TEST_CASE("generated PNGs carry their settings as text chunks") {
    Model m = tiny_model();
    const GenerateResult r = generate(m, "one circle", {random_image(51)}, quick_opts(1, 2));
    const fs::path dir = fs::temp_directory_path() / "artadapter_test_sampler_png";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string path = (dir / "out.png").string();
    write_generated_png(path, r);

    const Tensor back = image_to_tensor01(read_image(path));
    REQUIRE(back.shape() == std::vector<int64_t>({3, 16, 16}));
    const auto text = read_png_text(path);
    CHECK(text.at("prompt") == "one circle");
    CHECK(text.at("seed") == "1");
}
