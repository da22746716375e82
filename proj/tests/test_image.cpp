#include <cmath>
#include <cstdio>
#include <fstream>

#include "artadapter/image.hpp"
#include "artadapter/rng.hpp"
#include "doctest.h"

using namespace artadapter;

// Test data lives next to the test binary; CMake copies it there.
static std::string fixture(const std::string& name) { return "data/" + name; }

TEST_CASE("png round trip preserves pixels and metadata") {
    Image img;
    img.width = 5;
    img.height = 4;
    img.rgb.resize(5 * 4 * 3);
    for (size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<uint8_t>(i * 7 % 256);

    const std::string path = "roundtrip_tmp.png";
    write_png(path, img, {{"seed", "42"}, {"prompt", "a robot"}});
    Image back = read_image(path);
    REQUIRE(back.width == 5);
    REQUIRE(back.height == 4);
    CHECK(back.rgb == img.rgb);

    const std::map<std::string, std::string> text = read_png_text(path);
    REQUIRE(text.count("seed") == 1);
    CHECK(text.at("seed") == "42");
    CHECK(text.at("prompt") == "a robot");
    std::remove(path.c_str());
}

TEST_CASE("decoder dispatches on magic bytes") {
    CHECK_THROWS_AS(read_image("no_such_file.png"), IoError);

    const std::string junk = "junk_tmp.bin";
    {
        std::ofstream out(junk, std::ios::binary);
        out << "this is not an image at all";
    }
    CHECK_THROWS_AS(read_image(junk), FormatError);
    std::remove(junk.c_str());

    // JPEG fixture decodes to its known size; lossy, so compare loosely
    // against the losslessly stored PNG of the same pixels.
    Image jpg = read_image(fixture("gradient.jpg"));
    Image png = read_image(fixture("gradient.png"));
    REQUIRE(jpg.width == 12);
    REQUIRE(jpg.height == 9);
    REQUIRE(png.width == 12);
    double max_err = 0.0;
    for (size_t i = 0; i < jpg.rgb.size(); ++i)
        max_err = std::max(max_err, std::abs(double(jpg.rgb[i]) - double(png.rgb[i])));
    CHECK(max_err <= 24.0);
}

TEST_CASE("grayscale and palette pngs expand to rgb") {
    Image gray = read_image(fixture("gray.png"));
    REQUIRE(gray.width == 6);
    REQUIRE(gray.height == 5);
    // Grayscale expands with equal channels; column 2 is value 80.
    const size_t at = (0 * 6 + 2) * 3;
    CHECK(gray.rgb[at] == 80);
    CHECK(gray.rgb[at + 1] == 80);
    CHECK(gray.rgb[at + 2] == 80);

    Image pal = read_image(fixture("palette.png"));
    REQUIRE(pal.width == 4);
    // Palette index 0 at (0,0) maps to (250, 10, 10).
    CHECK(pal.rgb[0] == 250);
    CHECK(pal.rgb[1] == 10);
    CHECK(pal.rgb[2] == 10);
}

TEST_CASE("tensor conversions are inverse up to rounding") {
    Image img;
    img.width = 3;
    img.height = 2;
    img.rgb = {0, 128, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150};
    Tensor t = image_to_tensor01(img);
    REQUIRE(t.shape() == std::vector<int64_t>{3, 2, 3});
    CHECK(t.at(0) == doctest::Approx(0.0));
    // Channel-planar layout: green channel starts at plane 1.
    CHECK(t.at(1 * 6 + 0) == doctest::Approx(128.0 / 255.0));
    CHECK(t.at(2 * 6 + 0) == doctest::Approx(1.0));

    Image back = tensor01_to_image(t);
    CHECK(back.rgb == img.rgb);

    // Out-of-range values clamp instead of wrapping.
    Tensor wild = Tensor::full({3, 1, 1}, 2.0);
    wild.at(1) = -0.5;
    Image clamped = tensor01_to_image(wild);
    CHECK(clamped.rgb[0] == 255);
    CHECK(clamped.rgb[1] == 0);
}

TEST_CASE("bilinear resize endpoints and constancy") {
    // A constant image stays constant at any size.
    Tensor c = Tensor::full({3, 5, 7}, 0.375);
    Tensor rc = resize_bilinear01(c, 11, 3);
    REQUIRE(rc.shape() == std::vector<int64_t>{3, 11, 3});
    for (int64_t i = 0; i < rc.numel(); ++i) CHECK(rc.at(i) == doctest::Approx(0.375));

    // Corners align: a linear ramp keeps its endpoint values.
    Tensor ramp({3, 1, 4});
    for (int64_t ch = 0; ch < 3; ++ch)
        for (int64_t x = 0; x < 4; ++x) ramp.at(ch * 4 + x) = static_cast<scalar_t>(x);
    Tensor up = resize_bilinear01(ramp, 1, 7);
    CHECK(up.at(0) == doctest::Approx(0.0));
    CHECK(up.at(6) == doctest::Approx(3.0));
    CHECK(up.at(3) == doctest::Approx(1.5));
}

TEST_CASE("center crop takes the middle square") {
    Tensor x({3, 4, 6});
    for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = static_cast<scalar_t>(i);
    Tensor c = center_crop01(x, 4);
    REQUIRE(c.shape() == std::vector<int64_t>{3, 4, 4});
    // Columns shift by the (6-4)/2 = 1 offset; rows already fit.
    CHECK(c.at(0) == x.at(1));
    CHECK_THROWS_AS(center_crop01(x, 5), ShapeError);
}

TEST_CASE("style preprocessing yields a 256 square from any aspect") {
    Rng rng(3);
    Tensor wide = rng.gaussian_tensor({3, 64, 200});
    Tensor tall = rng.gaussian_tensor({3, 120, 48});
    Tensor sq = rng.gaussian_tensor({3, 80, 80});
    for (const Tensor* t : {&wide, &tall, &sq}) {
        Tensor p = style_preprocess01(*t, 256);
        CHECK(p.shape() == std::vector<int64_t>{3, 256, 256});
    }
    // Already the target size: only the identity crop applies.
    Tensor exact = rng.gaussian_tensor({3, 256, 256});
    Tensor p = style_preprocess01(exact, 256);
    CHECK(p.shape() == std::vector<int64_t>{3, 256, 256});
}
