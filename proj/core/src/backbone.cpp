#include "artadapter/backbone.hpp"

#include <algorithm>

#include "artadapter/ops.hpp"

namespace artadapter {

using namespace ops;

int64_t norm_groups(int64_t channels) {
    for (int64_t g = std::min<int64_t>(32, channels); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

Var ResBlock::operator()(const Var& x, const Var& temb) const {
    Var h = conv1(silu(gn1(x)));
    h = add_channel_bias(h, time_proj(silu(temb)));
    h = conv2(silu(gn2(h)));
    Var base = skip.w ? skip(x) : x;
    return add(base, h);
}

Var SpatialTransformer::operator()(const Var& x,
                                   const std::vector<EncodedContext>& contexts) const {
    const int64_t H = x->value.dim(2);
    const int64_t W = x->value.dim(3);
    Var h = proj_in(nchw_to_nlc(gn(x)));
    Var s = ln_self(h);
    h = add(h, so(multihead_attention(sq(s), sk(s), sv(s), heads)));
    h = add(h, cross_attention(ln_cross(h), contexts, cross));
    Var f = ln_ff(h);
    h = add(h, ff2(silu(ff1(f))));
    return add(x, nlc_to_nchw(proj_out(h), H, W));
}

ResBlock Unet::make_res(ParamStore& ps, const std::string& prefix, int64_t ci, int64_t co,
                        Rng& rng) {
    ResBlock r;
    r.gn1 = make_group_norm(ps, Section::Backbone, prefix + ".gn1", ci, norm_groups(ci));
    r.conv1 = make_conv(ps, Section::Backbone, prefix + ".conv1", ci, co, 3, 1, 1, rng);
    r.time_proj = make_linear(ps, Section::Backbone, prefix + ".time", time_dim_, co, rng);
    r.gn2 = make_group_norm(ps, Section::Backbone, prefix + ".gn2", co, norm_groups(co));
    r.conv2 = make_conv(ps, Section::Backbone, prefix + ".conv2", co, co, 3, 1, 1, rng,
                        /*zero_init=*/true);
    if (ci != co) r.skip = make_conv(ps, Section::Backbone, prefix + ".skip", ci, co, 1, 1, 0, rng);
    return r;
}

SpatialTransformer Unet::make_st(ParamStore& ps, const std::string& path, int64_t width,
                                 Rng& rng) {
    const Section s = Section::Backbone;
    const std::string p = path + ".st";
    SpatialTransformer st;
    st.present = true;
    st.heads = cfg_.attention_heads;
    st.gn = make_group_norm(ps, s, p + ".gn", width, norm_groups(width));
    st.proj_in = make_linear(ps, s, p + ".proj_in", width, width, rng);
    st.ln_self = make_layer_norm(ps, s, p + ".ln_self", width);
    st.sq = make_linear(ps, s, p + ".sq", width, width, rng);
    st.sk = make_linear(ps, s, p + ".sk", width, width, rng);
    st.sv = make_linear(ps, s, p + ".sv", width, width, rng);
    st.so = make_linear(ps, s, p + ".so", width, width, rng);
    st.ln_cross = make_layer_norm(ps, s, p + ".ln_cross", width);
    st.cross.heads = cfg_.attention_heads;
    st.cross.q = make_linear(ps, s, p + ".cq", width, width, rng);
    st.cross.k = make_adapted_projection(ps, path, 'k', cfg_.context_dim, width, cfg_.lora_rank,
                                         rng);
    st.cross.v = make_adapted_projection(ps, path, 'v', cfg_.context_dim, width, cfg_.lora_rank,
                                         rng);
    st.cross.o = make_linear(ps, s, p + ".co", width, width, rng);
    st.ln_ff = make_layer_norm(ps, s, p + ".ln_ff", width);
    st.ff1 = make_linear(ps, s, p + ".ff1", width, 2 * width, rng);
    st.ff2 = make_linear(ps, s, p + ".ff2", 2 * width, width, rng);
    st.proj_out = make_linear(ps, s, p + ".proj_out", width, width, rng, /*zero_init=*/true);
    return st;
}

void Unet::build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng) {
    cfg_ = cfg;
    const int64_t w0 = cfg.unet_widths[0];
    const int64_t w1 = cfg.unet_widths[1];
    const int64_t w2 = cfg.unet_widths[2];
    const int64_t w3 = cfg.unet_widths[3];
    time_dim_ = 4 * w0;
    const Section s = Section::Backbone;

    auto attend_at = [&](int64_t res) {
        return std::find(cfg.cross_attention_resolutions.begin(),
                         cfg.cross_attention_resolutions.end(),
                         res) != cfg.cross_attention_resolutions.end();
    };
    const int64_t r0 = cfg.image_size;

    time1_ = make_linear(ps, s, "unet.time1", w0, time_dim_, rng);
    time2_ = make_linear(ps, s, "unet.time2", time_dim_, time_dim_, rng);
    conv_in_ = make_conv(ps, s, "unet.conv_in", cfg.channels, w0, 3, 1, 1, rng);

    enc0_ = make_res(ps, "unet.enc0.res", w0, w0, rng);
    down0_ = make_conv(ps, s, "unet.down0", w0, w0, 3, 2, 1, rng);
    enc1_ = make_res(ps, "unet.enc1.res", w0, w1, rng);
    down1_ = make_conv(ps, s, "unet.down1", w1, w1, 3, 2, 1, rng);
    enc2_ = make_res(ps, "unet.enc2.res", w1, w2, rng);
    if (attend_at(r0 / 4)) st_enc2_ = make_st(ps, "unet.enc2", w2, rng);
    down2_ = make_conv(ps, s, "unet.down2", w2, w2, 3, 2, 1, rng);
    enc3_ = make_res(ps, "unet.enc3.res", w2, w3, rng);
    if (attend_at(r0 / 8)) st_enc3_ = make_st(ps, "unet.enc3", w3, rng);

    mid1_ = make_res(ps, "unet.mid.res1", w3, w3, rng);
    if (attend_at(r0 / 8)) st_mid_ = make_st(ps, "unet.mid", w3, rng);
    mid2_ = make_res(ps, "unet.mid.res2", w3, w3, rng);

    dec3_ = make_res(ps, "unet.dec3.res", 2 * w3, w3, rng);
    if (attend_at(r0 / 8)) st_dec3_ = make_st(ps, "unet.dec3", w3, rng);
    up3_ = make_conv(ps, s, "unet.up3", w3, w2, 3, 1, 1, rng);
    dec2_ = make_res(ps, "unet.dec2.res", 2 * w2, w2, rng);
    if (attend_at(r0 / 4)) st_dec2_ = make_st(ps, "unet.dec2", w2, rng);
    up2_ = make_conv(ps, s, "unet.up2", w2, w1, 3, 1, 1, rng);
    dec1_ = make_res(ps, "unet.dec1.res", 2 * w1, w1, rng);
    up1_ = make_conv(ps, s, "unet.up1", w1, w0, 3, 1, 1, rng);
    dec0_ = make_res(ps, "unet.dec0.res", 2 * w0, w0, rng);

    out_gn_ = make_group_norm(ps, s, "unet.out_gn", w0, norm_groups(w0));
    out_conv_ = make_conv(ps, s, "unet.out_conv", w0, cfg.channels, 3, 1, 1, rng,
                          /*zero_init=*/true);
}

Var Unet::forward(const Var& x, const std::vector<int64_t>& ts,
                  const std::vector<EncodedContext>& contexts, const Var& aca) const {
    if (!conv_in_.w) throw StateError("UNet not built");
    if (x->value.rank() != 4 || x->value.dim(1) != cfg_.channels)
        throw ShapeError("UNet input must be (N, channels, H, W)");
    const int64_t N = x->value.dim(0);
    if (static_cast<int64_t>(ts.size()) != N)
        throw ShapeError("UNet needs one timestep per batch row");
    if (static_cast<int64_t>(contexts.size()) != N)
        throw ShapeError("UNet needs one context per batch row");
    for (const EncodedContext& c : contexts) {
        if (!c.tokens || c.tokens->value.rank() != 2 ||
            c.tokens->value.dim(1) != cfg_.context_dim)
            throw ConfigError("context width does not match context_dim");
    }
    if (x->value.dim(2) % 8 != 0 || x->value.dim(3) % 8 != 0)
        throw ShapeError("UNet input size must be divisible by 8");

    Var temb = time2_(silu(time1_(make_constant(time_embedding(ts, cfg_.unet_widths[0])))));

    Var h = conv_in_(x);
    Var s0 = enc0_(h, temb);
    Var s1 = enc1_(down0_(s0), temb);
    Var s2 = enc2_(down1_(s1), temb);
    if (st_enc2_.present) s2 = st_enc2_(s2, contexts);
    h = down2_(s2);
    if (aca) {
        if (!aca->value.same_shape(h->value))
            throw ShapeError("ACA features must match the deepest block input: expected " +
                             h->value.shape_str() + ", got " + aca->value.shape_str());
        h = add(h, aca);
    }
    Var s3 = enc3_(h, temb);
    if (st_enc3_.present) s3 = st_enc3_(s3, contexts);

    h = mid1_(s3, temb);
    if (st_mid_.present) h = st_mid_(h, contexts);
    h = mid2_(h, temb);

    h = dec3_(concat_channels(h, s3), temb);
    if (st_dec3_.present) h = st_dec3_(h, contexts);
    h = up3_(upsample_nearest2(h));
    h = dec2_(concat_channels(h, s2), temb);
    if (st_dec2_.present) h = st_dec2_(h, contexts);
    h = up2_(upsample_nearest2(h));
    h = dec1_(concat_channels(h, s1), temb);
    h = up1_(upsample_nearest2(h));
    h = dec0_(concat_channels(h, s0), temb);

    return out_conv_(silu(out_gn_(h)));
}

std::vector<AdaptedProjection*> Unet::adapted_projections() {
    std::vector<AdaptedProjection*> out;
    for (SpatialTransformer* st :
         {&st_enc2_, &st_enc3_, &st_mid_, &st_dec3_, &st_dec2_}) {
        if (!st->present) continue;
        out.push_back(&st->cross.k);
        out.push_back(&st->cross.v);
    }
    return out;
}

std::vector<const AdaptedProjection*> Unet::adapted_projections() const {
    std::vector<const AdaptedProjection*> out;
    for (const SpatialTransformer* st :
         {&st_enc2_, &st_enc3_, &st_mid_, &st_dec3_, &st_dec2_}) {
        if (!st->present) continue;
        out.push_back(&st->cross.k);
        out.push_back(&st->cross.v);
    }
    return out;
}

}  // namespace artadapter
