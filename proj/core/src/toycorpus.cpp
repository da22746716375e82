#include "artadapter/toycorpus.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "artadapter/common.hpp"
#include "artadapter/image.hpp"
#include "artadapter/rng.hpp"

namespace artadapter {

namespace {

struct Rgb {
    scalar_t r, g, b;
};

enum class Texture { DiagStripes, Waves, Dots, Checker, Rings, VertStripes, Gradient, HorzStripes };

struct Family {
    const char* name;
    Rgb bg, accent, fg;
    Texture texture;
};

const std::array<Family, 8> kFamilies = {{
    {"crimson", {0.55, 0.08, 0.10}, {0.82, 0.25, 0.20}, {0.95, 0.86, 0.74}, Texture::DiagStripes},
    {"ocean", {0.05, 0.20, 0.45}, {0.10, 0.45, 0.72}, {0.92, 0.96, 1.00}, Texture::Waves},
    {"forest", {0.07, 0.30, 0.12}, {0.16, 0.52, 0.22}, {0.95, 0.92, 0.70}, Texture::Dots},
    {"gold", {0.62, 0.48, 0.10}, {0.90, 0.74, 0.26}, {0.30, 0.16, 0.06}, Texture::Checker},
    {"violet", {0.30, 0.10, 0.45}, {0.56, 0.26, 0.72}, {0.95, 0.90, 1.00}, Texture::Rings},
    {"mono", {0.14, 0.14, 0.14}, {0.74, 0.74, 0.74}, {0.98, 0.98, 0.98}, Texture::VertStripes},
    {"rose", {0.85, 0.55, 0.65}, {0.96, 0.76, 0.82}, {0.38, 0.10, 0.24}, Texture::Gradient},
    {"teal", {0.05, 0.44, 0.44}, {0.16, 0.66, 0.60}, {0.95, 0.80, 0.30}, Texture::HorzStripes},
}};

scalar_t texture_mix(Texture t, scalar_t x, scalar_t y, scalar_t phase) {
    switch (t) {
        case Texture::DiagStripes:
            return std::fmod(std::abs((x + y) * 6.0 + phase), 1.0) < 0.5 ? 0.0 : 1.0;
        case Texture::Waves:
            return 0.5 + 0.5 * std::sin((y * 10.0 + std::sin(x * 9.0 + phase) * 1.2) * 2.0);
        case Texture::Dots: {
            const scalar_t fx = std::fmod(x * 8.0 + phase, 1.0) - 0.5;
            const scalar_t fy = std::fmod(y * 8.0 + phase, 1.0) - 0.5;
            return fx * fx + fy * fy < 0.06 ? 1.0 : 0.0;
        }
        case Texture::Checker:
            return (static_cast<int>(x * 8.0 + phase) + static_cast<int>(y * 8.0)) % 2 == 0 ? 0.0
                                                                                            : 1.0;
        case Texture::Rings: {
            const scalar_t d = std::hypot(x - 0.5, y - 0.5);
            return std::fmod(d * 9.0 + phase, 1.0) < 0.5 ? 0.0 : 1.0;
        }
        case Texture::VertStripes:
            return std::fmod(x * 9.0 + phase, 1.0) < 0.5 ? 0.0 : 1.0;
        case Texture::Gradient:
            return std::clamp(x * 0.7 + y * 0.3 + 0.15 * std::sin(phase + x * 5.0), 0.0, 1.0);
        case Texture::HorzStripes:
            return std::fmod(y * 9.0 + phase, 1.0) < 0.5 ? 0.0 : 1.0;
    }
    return 0.0;
}

struct Shape {
    int kind;  // 0 circle, 1 square, 2 triangle
    scalar_t cx, cy, radius;
};

bool inside(const Shape& s, scalar_t x, scalar_t y) {
    const scalar_t dx = x - s.cx;
    const scalar_t dy = y - s.cy;
    switch (s.kind) {
        case 0:
            return dx * dx + dy * dy <= s.radius * s.radius;
        case 1:
            return std::abs(dx) <= s.radius && std::abs(dy) <= s.radius;
        default: {
            // Upward triangle inscribed in the radius box.
            if (dy < -s.radius || dy > s.radius) return false;
            const scalar_t frac = (dy + s.radius) / (2.0 * s.radius);  // 0 at top, 1 at base
            return std::abs(dx) <= frac * s.radius;
        }
    }
}

const char* count_word(int n) {
    switch (n) {
        case 1: return "one";
        case 2: return "two";
        default: return "three";
    }
}

std::string caption_for(const std::vector<Shape>& shapes) {
    static const char* singular[3] = {"circle", "square", "triangle"};
    static const char* plural[3] = {"circles", "squares", "triangles"};
    int counts[3] = {0, 0, 0};
    for (const Shape& s : shapes) ++counts[s.kind];
    std::string caption;
    for (int k = 0; k < 3; ++k) {
        if (counts[k] == 0) continue;
        if (!caption.empty()) caption += " and ";
        caption += count_word(counts[k]);
        caption += " ";
        caption += counts[k] == 1 ? singular[k] : plural[k];
    }
    return caption;
}

Tensor render(const Family& fam, const std::vector<Shape>& shapes, int64_t size, Rng& rng) {
    const scalar_t phase = rng.uniform(0.0, 1.0);
    const scalar_t jr = rng.uniform(-0.05, 0.05);
    const scalar_t jg = rng.uniform(-0.05, 0.05);
    const scalar_t jb = rng.uniform(-0.05, 0.05);

    Tensor img({3, size, size});
    for (int64_t py = 0; py < size; ++py) {
        for (int64_t px = 0; px < size; ++px) {
            const scalar_t x = (px + 0.5) / static_cast<scalar_t>(size);
            const scalar_t y = (py + 0.5) / static_cast<scalar_t>(size);
            Rgb c;
            bool fg = false;
            for (const Shape& s : shapes)
                if (inside(s, x, y)) {
                    fg = true;
                    break;
                }
            if (fg) {
                c = fam.fg;
            } else {
                const scalar_t m = texture_mix(fam.texture, x, y, phase);
                c = {fam.bg.r + (fam.accent.r - fam.bg.r) * m + jr,
                     fam.bg.g + (fam.accent.g - fam.bg.g) * m + jg,
                     fam.bg.b + (fam.accent.b - fam.bg.b) * m + jb};
            }
            img.at((0 * size + py) * size + px) = std::clamp(c.r, 0.0, 1.0);
            img.at((1 * size + py) * size + px) = std::clamp(c.g, 0.0, 1.0);
            img.at((2 * size + py) * size + px) = std::clamp(c.b, 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace

const std::vector<std::string>& toy_style_families() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const Family& f : kFamilies) v.emplace_back(f.name);
        return v;
    }();
    return names;
}

ToyCorpusResult generate_toy_corpus(const ToyCorpusSpec& spec) {
    if (spec.train_count < 1 || spec.holdout_count < 0)
        throw ArgumentError("corpus counts must be positive");
    if (spec.image_size < 16 || spec.image_size % 8 != 0)
        throw ArgumentError("corpus image size must be a multiple of 8, at least 16");

    namespace fs = std::filesystem;
    const fs::path root(spec.out_dir);
    fs::create_directories(root / "images");

    Rng rng(spec.seed);
    nlohmann::ordered_json families_json;
    for (const Family& f : kFamilies) {
        families_json[f.name]["train"] = nlohmann::json::array();
        families_json[f.name]["holdout"] = nlohmann::json::array();
    }

    auto emit_split = [&](const char* split, int64_t count, const fs::path& manifest_path) {
        std::ofstream manifest(manifest_path);
        if (!manifest) throw IoError("cannot write manifest: " + manifest_path.string());
        for (int64_t i = 0; i < count; ++i) {
            const Family& fam = kFamilies[static_cast<size_t>(i % 8)];
            Rng img_rng = rng.derive(static_cast<uint64_t>(i), std::string(split) == "train" ? 0 : 1);

            const int n_shapes = static_cast<int>(img_rng.uniform_int(1, 3));
            std::vector<Shape> shapes;
            for (int s = 0; s < n_shapes; ++s) {
                Shape sh;
                sh.kind = static_cast<int>(img_rng.uniform_int(0, 2));
                sh.radius = img_rng.uniform(0.10, 0.22);
                sh.cx = img_rng.uniform(sh.radius, 1.0 - sh.radius);
                sh.cy = img_rng.uniform(sh.radius, 1.0 - sh.radius);
                shapes.push_back(sh);
            }

            char name[64];
            std::snprintf(name, sizeof name, "%s_%04lld.png", split,
                          static_cast<long long>(i));
            const std::string rel = std::string("images/") + name;
            const Tensor img = render(fam, shapes, spec.image_size, img_rng);
            write_png((root / rel).string(), tensor01_to_image(img),
                      {{"family", fam.name}, {"caption", caption_for(shapes)}});
            manifest << rel << '\t' << caption_for(shapes) << '\n';
            families_json[fam.name][split].push_back(rel);
        }
        if (!manifest) throw IoError("failed writing manifest: " + manifest_path.string());
    };

    ToyCorpusResult result;
    result.train_manifest = (root / "train.tsv").string();
    result.holdout_manifest = (root / "holdout.tsv").string();
    result.styles_json = (root / "styles.json").string();
    emit_split("train", spec.train_count, result.train_manifest);
    emit_split("holdout", spec.holdout_count, result.holdout_manifest);

    std::ofstream styles(result.styles_json);
    if (!styles) throw IoError("cannot write styles map: " + result.styles_json);
    styles << families_json.dump(2) << '\n';
    return result;
}

}  // namespace artadapter
