#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "artadapter/config.hpp"
#include "artadapter/nn.hpp"

namespace artadapter {

// Per-channel mean and population standard deviation of a (C, H, W)
// activation map, concatenated as [means; stds] of length 2C. The std is
// floored at 1e-6 (the epsilon enters squared inside the square root) so
// zero-variance channels stay finite and differentiable downstream.
Tensor channel_statistics(const Tensor& activation);

// Tap activations from the fixed feature network, shallow to deep.
struct FeaturePyramid {
    Tensor low, mid, high;
};

// The 9-token style summary: rows [low 1-3, mid 1-3, high 1-3], plus which
// source reference produced each level (mixing provenance).
struct StyleEmbedding {
    Tensor tokens;  // (9, d)
    std::array<uint64_t, 3> source_level_map{0, 0, 0};
};

// Raw named-tensor archive used to ship pretrained feature weights.
void save_feature_archive(const std::string& path,
                          const std::vector<std::pair<std::string, Tensor>>& entries);
std::map<std::string, Tensor> load_feature_archive(const std::string& path);

// Fixed (never trained) convolutional feature extractor. The "desk" variant
// regenerates its weights from a seed; the "vgg16" variant loads the 13-conv
// VGG-16 feature stack from an archive and expects ImageNet-normalized input.
class FeatureNet {
  public:
    void build_desk(uint64_t seed);
    void build_vgg16(const std::string& archive_path);
    static FeatureNet from_config(const DiffusionConfig& cfg);

    const std::string& arch() const { return arch_; }
    std::array<int64_t, 3> tap_channels() const;

    // img01 is a (3, 256, 256) tensor in [0, 1]; normalization for the
    // chosen architecture is applied internally.
    FeaturePyramid extract(const Tensor& img01) const;

  private:
    struct Conv {
        Tensor w, b;
    };
    std::string arch_;
    std::vector<Conv> convs_;
};

// Fixed feature taps feeding three per-level projection MLPs (one per
// hierarchy level, disjoint parameters, zero-initialized final layers).
class StyleEncoder {
  public:
    void build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng);

    // Preprocesses (shorter side to 256, center crop), extracts the pyramid
    // and returns the three level stat vectors.
    std::array<Tensor, 3> level_statistics(const Tensor& img01) const;

    // Differentiable path for training: the MLPs stay in the graph, the
    // fixed-feature statistics enter as constants. Returns (9, d).
    Var encode_style_var(const Tensor& img01) const;

    // Inference path; also records the reference hash for provenance.
    StyleEmbedding encode_style(const Tensor& img01) const;

    const FeatureNet& features() const { return net_; }

  private:
    struct LevelMlp {
        LinearLayer hidden, out;
    };
    Var project_level(int level, const Tensor& stats) const;

    DiffusionConfig cfg_;
    FeatureNet net_;
    std::array<LevelMlp, 3> mlps_;
    bool built_ = false;
};

// Elementwise mean over a non-empty list of embeddings.
StyleEmbedding average_style_embeddings(const std::vector<StyleEmbedding>& refs);

// Level-block selection: rows 1-3 from low_src, 4-6 from mid_src, 7-9 from
// high_src, copied bit-exactly.
StyleEmbedding mix_style_embeddings(const StyleEmbedding& low_src, const StyleEmbedding& mid_src,
                                    const StyleEmbedding& high_src);

}  // namespace artadapter
