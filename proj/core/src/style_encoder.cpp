#include "artadapter/style_encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "artadapter/hash.hpp"
#include "artadapter/image.hpp"
#include "artadapter/ops.hpp"

namespace artadapter {

using namespace ops;

namespace {

constexpr scalar_t kStdEps = 1e-6;  // floor on the std; enters squared under the root

constexpr char kArchiveMagic[4] = {'A', 'A', 'F', 'W'};
constexpr uint32_t kArchiveVersion = 1;

}  // namespace

Tensor channel_statistics(const Tensor& activation) {
    if (activation.rank() != 3) throw ShapeError("channel_statistics expects (C, H, W)");
    const int64_t C = activation.dim(0);
    const int64_t HW = activation.dim(1) * activation.dim(2);
    if (HW < 1) throw ShapeError("channel_statistics needs at least one spatial element");
    Tensor out({2 * C});
    for (int64_t c = 0; c < C; ++c) {
        scalar_t sum = 0.0;
        for (int64_t p = 0; p < HW; ++p) sum += activation.at(c * HW + p);
        const scalar_t mean = sum / static_cast<scalar_t>(HW);
        scalar_t var = 0.0;
        for (int64_t p = 0; p < HW; ++p) {
            const scalar_t d = activation.at(c * HW + p) - mean;
            var += d * d;
        }
        var /= static_cast<scalar_t>(HW);
        out.at(c) = mean;
        out.at(C + c) = std::sqrt(var + kStdEps * kStdEps);
    }
    return out;
}

void save_feature_archive(const std::string& path,
                          const std::vector<std::pair<std::string, Tensor>>& entries) {
    nlohmann::ordered_json index = nlohmann::ordered_json::array();
    for (const auto& [name, t] : entries) {
        nlohmann::ordered_json e;
        e["name"] = name;
        e["shape"] = t.shape();
        index.push_back(e);
    }
    nlohmann::ordered_json header;
    header["tensors"] = index;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write feature archive: " + path);
    Fnv1a64 hash;
    auto emit = [&](const void* p, size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        hash.update(p, n);
    };
    emit(kArchiveMagic, 4);
    const uint32_t version = kArchiveVersion;
    emit(&version, sizeof version);
    const uint64_t hlen = htext.size();
    emit(&hlen, sizeof hlen);
    emit(htext.data(), htext.size());
    for (const auto& [name, t] : entries)
        emit(t.data(), static_cast<size_t>(t.numel()) * sizeof(scalar_t));
    const uint64_t digest = hash.digest();
    out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
    if (!out) throw IoError("failed writing feature archive: " + path);
}

std::map<std::string, Tensor> load_feature_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature archive: " + path);
    Fnv1a64 hash;
    auto pull = [&](void* p, size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in) throw LoadError("feature archive truncated: " + path);
        hash.update(p, n);
    };
    char magic[4];
    pull(magic, 4);
    if (std::memcmp(magic, kArchiveMagic, 4) != 0)
        throw LoadError("not a feature archive: " + path);
    uint32_t version = 0;
    pull(&version, sizeof version);
    if (version != kArchiveVersion) throw LoadError("unsupported feature archive version");
    uint64_t hlen = 0;
    pull(&hlen, sizeof hlen);
    std::string htext(hlen, '\0');
    pull(htext.data(), hlen);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception&) {
        throw LoadError("feature archive header is not valid JSON");
    }

    std::map<std::string, Tensor> out;
    for (const auto& e : header.at("tensors")) {
        const std::string name = e.at("name").get<std::string>();
        const std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
        Tensor t(shape);
        pull(t.data(), static_cast<size_t>(t.numel()) * sizeof(scalar_t));
        out.emplace(name, std::move(t));
    }
    const uint64_t expected = hash.digest();
    uint64_t stored = 0;
    in.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (!in || stored != expected) throw LoadError("feature archive checksum mismatch: " + path);
    return out;
}

void FeatureNet::build_desk(uint64_t seed) {
    arch_ = "desk";
    convs_.clear();
    Rng rng(seed);
    auto conv = [&](int64_t ci, int64_t co) {
        Conv c;
        c.w = Tensor({co, ci, 3, 3});
        rng.fill_gaussian(c.w, 0.0, std::sqrt(2.0 / static_cast<scalar_t>(ci * 9)));
        c.b = Tensor({co});
        rng.fill_gaussian(c.b, 0.0, 0.1);
        convs_.push_back(std::move(c));
    };
    conv(3, 64);
    conv(64, 128);
    conv(128, 128);
    conv(128, 256);
    conv(256, 256);
    conv(256, 512);
    conv(512, 512);
}

void FeatureNet::build_vgg16(const std::string& archive_path) {
    arch_ = "vgg16";
    convs_.clear();
    auto tensors = load_feature_archive(archive_path);
    static const struct {
        const char* name;
        int64_t ci, co;
    } defs[] = {
        {"conv1_1", 3, 64},    {"conv1_2", 64, 64},   {"conv2_1", 64, 128},
        {"conv2_2", 128, 128}, {"conv3_1", 128, 256}, {"conv3_2", 256, 256},
        {"conv3_3", 256, 256}, {"conv4_1", 256, 512}, {"conv4_2", 512, 512},
        {"conv4_3", 512, 512}, {"conv5_1", 512, 512}, {"conv5_2", 512, 512},
        {"conv5_3", 512, 512},
    };
    for (const auto& d : defs) {
        auto wi = tensors.find(std::string(d.name) + ".weight");
        auto bi = tensors.find(std::string(d.name) + ".bias");
        if (wi == tensors.end() || bi == tensors.end())
            throw LoadError(std::string("feature archive missing ") + d.name);
        const std::vector<int64_t> want{d.co, d.ci, 3, 3};
        if (wi->second.shape() != want || bi->second.shape() != std::vector<int64_t>{d.co})
            throw LoadError(std::string("feature archive shape mismatch for ") + d.name);
        Conv c;
        c.w = std::move(wi->second);
        c.b = std::move(bi->second);
        convs_.push_back(std::move(c));
    }
}

FeatureNet FeatureNet::from_config(const DiffusionConfig& cfg) {
    FeatureNet net;
    if (cfg.feature_arch == "vgg16")
        net.build_vgg16(cfg.feature_weights_path);
    else
        net.build_desk(cfg.feature_seed);
    return net;
}

std::array<int64_t, 3> FeatureNet::tap_channels() const {
    if (arch_ == "vgg16") return {256, 512, 512};
    return {128, 256, 512};
}

FeaturePyramid FeatureNet::extract(const Tensor& img01) const {
    if (convs_.empty()) throw StateError("feature net not built");
    if (img01.rank() != 3 || img01.dim(0) != 3)
        throw FormatError("feature input must be a 3-channel (3, H, W) tensor");

    Tensor x = img01;
    auto conv_relu = [&](int i) { x = relu_plain(conv2d_plain(x, convs_[i].w, convs_[i].b, 1, 1)); };

    FeaturePyramid pyr;
    if (arch_ == "vgg16") {
        // ImageNet channel normalization.
        static const scalar_t mean[3] = {0.485, 0.456, 0.406};
        static const scalar_t stddev[3] = {0.229, 0.224, 0.225};
        const int64_t hw = x.dim(1) * x.dim(2);
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t p = 0; p < hw; ++p)
                x.at(c * hw + p) = (x.at(c * hw + p) - mean[c]) / stddev[c];
        conv_relu(0);
        conv_relu(1);
        x = maxpool2_plain(x);
        conv_relu(2);
        conv_relu(3);
        x = maxpool2_plain(x);
        conv_relu(4);
        conv_relu(5);
        conv_relu(6);
        pyr.low = x;
        x = maxpool2_plain(x);
        conv_relu(7);
        conv_relu(8);
        conv_relu(9);
        pyr.mid = x;
        x = maxpool2_plain(x);
        conv_relu(10);
        conv_relu(11);
        conv_relu(12);
        pyr.high = x;
    } else {
        conv_relu(0);
        x = maxpool2_plain(x);
        conv_relu(1);
        x = maxpool2_plain(x);
        conv_relu(2);
        pyr.low = x;
        x = maxpool2_plain(x);
        conv_relu(3);
        conv_relu(4);
        pyr.mid = x;
        x = maxpool2_plain(x);
        conv_relu(5);
        conv_relu(6);
        pyr.high = x;
    }
    return pyr;
}

void StyleEncoder::build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng) {
    cfg_ = cfg;
    net_ = FeatureNet::from_config(cfg);
    const auto taps = net_.tap_channels();
    static const char* level_names[3] = {"low", "mid", "high"};
    const int64_t d = cfg.context_dim;
    for (int level = 0; level < 3; ++level) {
        const std::string p = std::string("style.") + level_names[level];
        mlps_[level].hidden = make_linear(ps, Section::StyleMlp, p + ".hidden",
                                          2 * taps[static_cast<size_t>(level)], 512, rng);
        mlps_[level].out = make_linear(ps, Section::StyleMlp, p + ".out", 512,
                                       cfg.style_tokens_per_level * d, rng, /*zero_init=*/true);
    }
    built_ = true;
}

std::array<Tensor, 3> StyleEncoder::level_statistics(const Tensor& img01) const {
    if (!built_) throw StateError("style encoder not built");
    const Tensor prepped = style_preprocess01(img01, 256);
    FeaturePyramid pyr = net_.extract(prepped);
    return {channel_statistics(pyr.low), channel_statistics(pyr.mid),
            channel_statistics(pyr.high)};
}

Var StyleEncoder::project_level(int level, const Tensor& stats) const {
    const LevelMlp& mlp = mlps_[static_cast<size_t>(level)];
    if (stats.numel() != mlp.hidden.w->value.dim(0))
        throw ConfigError("stat vector length does not match the level MLP input width");
    Var in = make_constant(stats.reshaped({1, stats.numel()}));
    Var out = mlp.out(silu(mlp.hidden(in)));
    return reshape(out, {cfg_.style_tokens_per_level, cfg_.context_dim});
}

Var StyleEncoder::encode_style_var(const Tensor& img01) const {
    auto stats = level_statistics(img01);
    Var low = project_level(0, stats[0]);
    Var mid = project_level(1, stats[1]);
    Var high = project_level(2, stats[2]);
    return concat_rows(concat_rows(low, mid), high);
}

StyleEmbedding StyleEncoder::encode_style(const Tensor& img01) const {
    NoGradGuard guard;
    StyleEmbedding e;
    e.tokens = encode_style_var(img01)->value;
    const uint64_t src = hash_tensor(img01);
    e.source_level_map = {src, src, src};
    return e;
}

StyleEmbedding average_style_embeddings(const std::vector<StyleEmbedding>& refs) {
    if (refs.empty()) throw ArgumentError("cannot average zero style embeddings");
    for (const StyleEmbedding& e : refs)
        if (!e.tokens.same_shape(refs[0].tokens))
            throw ArgumentError("style embedding shapes differ");
    Tensor acc = Tensor::zeros(refs[0].tokens.shape());
    for (const StyleEmbedding& e : refs) acc.add_(e.tokens);
    acc.scale_(1.0 / static_cast<scalar_t>(refs.size()));

    StyleEmbedding out;
    out.tokens = std::move(acc);
    for (int level = 0; level < 3; ++level) {
        Fnv1a64 h;
        for (const StyleEmbedding& e : refs)
            h.update_u64(e.source_level_map[static_cast<size_t>(level)]);
        out.source_level_map[static_cast<size_t>(level)] = h.digest();
    }
    return out;
}

StyleEmbedding mix_style_embeddings(const StyleEmbedding& low_src, const StyleEmbedding& mid_src,
                                    const StyleEmbedding& high_src) {
    if (!low_src.tokens.same_shape(mid_src.tokens) || !mid_src.tokens.same_shape(high_src.tokens))
        throw ArgumentError("style embedding shapes differ");
    if (low_src.tokens.rank() != 2 || low_src.tokens.dim(0) != 9)
        throw ArgumentError("style embeddings must be (9, d)");
    const int64_t d = low_src.tokens.dim(1);

    StyleEmbedding out;
    out.tokens = Tensor({9, d});
    const StyleEmbedding* sources[3] = {&low_src, &mid_src, &high_src};
    for (int level = 0; level < 3; ++level) {
        const Tensor& src = sources[level]->tokens;
        for (int64_t r = 3 * level; r < 3 * (level + 1); ++r)
            for (int64_t c = 0; c < d; ++c) out.tokens.at2(r, c) = src.at2(r, c);
        out.source_level_map[static_cast<size_t>(level)] =
            sources[level]->source_level_map[static_cast<size_t>(level)];
    }
    return out;
}

}  // namespace artadapter
