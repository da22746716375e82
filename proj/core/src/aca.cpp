#include "artadapter/aca.hpp"

#include <algorithm>
#include <cmath>

#include "artadapter/ops.hpp"

namespace artadapter {

using namespace ops;

bool gate_aca(int64_t t, int64_t T, scalar_t fraction) {
    if (fraction < 0.0 || fraction > 1.0)
        throw ArgumentError("gate fraction must lie in [0, 1]");
    if (T < 1 || t < 1 || t > T) throw RangeError("gate_aca timestep outside [1, T]");
    // Integer band arithmetic keeps the boundary exact: the active band is
    // the round(fraction * T) highest-noise steps, [T - count, T).
    const int64_t count = static_cast<int64_t>(std::llround(fraction * static_cast<scalar_t>(T)));
    return t >= T - count && t < T;
}

namespace {

void rgb_to_hsv(scalar_t r, scalar_t g, scalar_t b, scalar_t& h, scalar_t& s, scalar_t& v) {
    const scalar_t mx = std::max({r, g, b});
    const scalar_t mn = std::min({r, g, b});
    const scalar_t delta = mx - mn;
    v = mx;
    s = mx > 0.0 ? delta / mx : 0.0;
    if (delta <= 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = (g - b) / delta;
    else if (mx == g)
        h = 2.0 + (b - r) / delta;
    else
        h = 4.0 + (r - g) / delta;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(scalar_t h, scalar_t s, scalar_t v, scalar_t& r, scalar_t& g, scalar_t& b) {
    if (s <= 0.0) {
        r = g = b = v;
        return;
    }
    h = h - std::floor(h);
    const scalar_t h6 = h * 6.0;
    const int sector = std::min(5, static_cast<int>(h6));
    const scalar_t f = h6 - sector;
    const scalar_t p = v * (1.0 - s);
    const scalar_t q = v * (1.0 - s * f);
    const scalar_t t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace

Tensor augment_content(const Tensor& img01, const AugmentPolicy& policy, uint64_t seed) {
    if (img01.rank() != 3 || img01.dim(0) != 3)
        throw ShapeError("augment_content expects (3, H, W)");
    policy.validate();
    Rng rng(seed);
    Tensor x = img01;
    const int64_t hw = x.dim(1) * x.dim(2);

    if (rng.uniform() < policy.inversion_probability)
        for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = 1.0 - x.at(i);

    // Each jitter is skipped entirely when its sampled factor is the
    // identity, so a zero-range policy is a bit-exact no-op.
    const scalar_t brightness = 1.0 + rng.uniform(-policy.brightness, policy.brightness);
    if (brightness != 1.0)
        for (int64_t i = 0; i < x.numel(); ++i) x.at(i) *= brightness;

    const scalar_t contrast = 1.0 + rng.uniform(-policy.contrast, policy.contrast);
    if (contrast != 1.0) {
        scalar_t mean = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) mean += x.at(i);
        mean /= static_cast<scalar_t>(x.numel());
        for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = (x.at(i) - mean) * contrast + mean;
    }

    const scalar_t saturation = 1.0 + rng.uniform(-policy.saturation, policy.saturation);
    if (saturation != 1.0) {
        for (int64_t p = 0; p < hw; ++p) {
            const scalar_t gray =
                0.299 * x.at(p) + 0.587 * x.at(hw + p) + 0.114 * x.at(2 * hw + p);
            for (int64_t c = 0; c < 3; ++c)
                x.at(c * hw + p) = (x.at(c * hw + p) - gray) * saturation + gray;
        }
    }

    const scalar_t hue_shift = rng.uniform(-policy.hue, policy.hue);
    if (hue_shift != 0.0) {
        for (int64_t p = 0; p < hw; ++p) {
            scalar_t r = std::clamp(x.at(p), 0.0, 1.0);
            scalar_t g = std::clamp(x.at(hw + p), 0.0, 1.0);
            scalar_t b = std::clamp(x.at(2 * hw + p), 0.0, 1.0);
            scalar_t h, s, v;
            rgb_to_hsv(r, g, b, h, s, v);
            hsv_to_rgb(h + hue_shift, s, v, r, g, b);
            x.at(p) = r;
            x.at(hw + p) = g;
            x.at(2 * hw + p) = b;
        }
    }

    for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = std::clamp(x.at(i), 0.0, 1.0);
    return x;
}

void AcaEncoder::build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng) {
    out_width_ = cfg.unet_widths[2];
    c1_ = make_conv(ps, Section::Aca, "aca.c1", cfg.channels, 32, 3, 2, 1, rng);
    c2_ = make_conv(ps, Section::Aca, "aca.c2", 32, 64, 3, 2, 1, rng);
    // Final conv starts at zero so injection begins as a no-op.
    c3_ = make_conv(ps, Section::Aca, "aca.c3", 64, out_width_, 3, 2, 1, rng, /*zero_init=*/true);
    param_count_ = ps.section_numel(Section::Aca);
}

Var AcaEncoder::encode(const Var& img01) const {
    if (!c1_.w) throw StateError("ACA encoder not built");
    if (img01->value.rank() != 4 || img01->value.dim(1) != 3)
        throw ShapeError("ACA encoder expects (N, 3, H, W)");
    if (img01->value.dim(2) % 8 != 0 || img01->value.dim(3) % 8 != 0)
        throw ShapeError("ACA input size must be divisible by the stride chain (8)");
    ++access_count_;
    return c3_(silu(c2_(silu(c1_(img01)))));
}

}  // namespace artadapter
