#pragma once

#include <cstdint>
#include <vector>

#include "artadapter/adaptation.hpp"
#include "artadapter/config.hpp"
#include "artadapter/nn.hpp"
#include "artadapter/text_pipeline.hpp"

namespace artadapter {

// Largest divisor of `channels` that is at most 32.
int64_t norm_groups(int64_t channels);

// GroupNorm/silu/conv resnet block with an additive per-channel timestep
// bias; the second conv starts at zero so freshly built blocks are skips.
struct ResBlock {
    GroupNormLayer gn1, gn2;
    Conv2dLayer conv1, conv2;
    LinearLayer time_proj;
    Conv2dLayer skip;  // 1x1, only when the width changes

    Var operator()(const Var& x, const Var& temb) const;
};

// Pre-LN self-attention + adapted cross-attention + feed-forward over the
// flattened spatial tokens, wrapped in a zero-initialized projection so the
// whole block starts as identity.
struct SpatialTransformer {
    GroupNormLayer gn;
    LinearLayer proj_in;
    LayerNormLayer ln_self;
    LinearLayer sq, sk, sv, so;
    LayerNormLayer ln_cross;
    CrossAttnLayer cross;
    LayerNormLayer ln_ff;
    LinearLayer ff1, ff2;
    LinearLayer proj_out;
    int64_t heads = 4;
    bool present = false;

    Var operator()(const Var& x, const std::vector<EncodedContext>& contexts) const;
};

// Four-stage encoder/decoder UNet with cross-attention at the configured
// resolutions and skip concatenation between mirrored stages. The optional
// `aca` features are added to the deepest encoder block's input.
class Unet {
  public:
    void build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng);

    Var forward(const Var& x, const std::vector<int64_t>& ts,
                const std::vector<EncodedContext>& contexts, const Var& aca = nullptr) const;

    std::vector<AdaptedProjection*> adapted_projections();
    std::vector<const AdaptedProjection*> adapted_projections() const;
    int64_t time_dim() const { return time_dim_; }

  private:
    ResBlock make_res(ParamStore& ps, const std::string& prefix, int64_t ci, int64_t co,
                      Rng& rng);
    SpatialTransformer make_st(ParamStore& ps, const std::string& path, int64_t width, Rng& rng);

    DiffusionConfig cfg_;
    int64_t time_dim_ = 0;
    LinearLayer time1_, time2_;
    Conv2dLayer conv_in_;
    ResBlock enc0_, enc1_, enc2_, enc3_;
    SpatialTransformer st_enc2_, st_enc3_;
    Conv2dLayer down0_, down1_, down2_;
    ResBlock mid1_, mid2_;
    SpatialTransformer st_mid_;
    ResBlock dec3_, dec2_, dec1_, dec0_;
    SpatialTransformer st_dec3_, st_dec2_;
    Conv2dLayer up3_, up2_, up1_;
    GroupNormLayer out_gn_;
    Conv2dLayer out_conv_;
};

}  // namespace artadapter
