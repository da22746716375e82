#include "artadapter/adaptation.hpp"

#include <algorithm>
#include <cmath>

#include "artadapter/ops.hpp"

namespace artadapter {

using namespace ops;

Var AdaptedProjection::operator()(const Var& tokens, int64_t style_count) const {
    if (!w) throw StateError("adapted projection not built");
    if (tokens->value.rank() != 2)
        throw ShapeError("adapted projection expects a (S, d_in) sequence");
    if (tokens->value.dim(1) != w->value.dim(0))
        throw ShapeError("adapted projection width mismatch: sequence " +
                         tokens->value.shape_str() + " vs weight " + w->value.shape_str());
    const int64_t S = tokens->value.dim(0);
    if (style_count < 0 || style_count > S)
        throw ShapeError("style_count outside the sequence length");

    Var base = linear(tokens, w, bias);
    if (style_count == 0) return base;

    // Residual over the style rows only; text rows get a zero block so their
    // contribution is exact-zero by construction rather than by cancellation.
    Var style_rows = slice_rows(tokens, 0, style_count);
    Var residual = matmul(matmul(style_rows, delta_down), delta_up);
    residual = scalar_mul(residual, alpha);
    if (alpha_runtime_scale != 1.0) residual = scale(residual, alpha_runtime_scale);
    if (delta_h) residual = add_row_vector(residual, delta_h);

    if (style_count == S) return add(base, residual);
    Var zero_block = make_constant(Tensor::zeros({S - style_count, w->value.dim(1)}));
    return add(base, concat_rows(residual, zero_block));
}

AdaptedProjection make_adapted_projection(ParamStore& ps, const std::string& path, char kind,
                                          int64_t d_in, int64_t d_out, int64_t rank, Rng& rng) {
    if (rank < 1 || rank > std::min(d_in, d_out))
        throw ArgumentError("adapter rank must satisfy 1 <= r <= min(d_in, d_out)");
    if (kind != 'k' && kind != 'v') throw ArgumentError("projection kind must be 'k' or 'v'");

    AdaptedProjection p;
    p.path = path;
    p.kind = kind;
    const std::string prefix = p.param_prefix();

    Tensor w({d_in, d_out});
    rng.fill_gaussian(w, 0.0, std::sqrt(2.0 / static_cast<scalar_t>(d_in)));
    p.w = ps.add(Section::Backbone, prefix + ".weight", std::move(w));
    p.bias = ps.add(Section::Backbone, prefix + ".bias", Tensor::zeros({d_out}));

    Tensor down({d_in, rank});
    rng.fill_gaussian(down, 0.0, 0.01);
    p.delta_down = ps.add(Section::Adapter, prefix + ".delta_down", std::move(down));
    p.delta_up = ps.add(Section::Adapter, prefix + ".delta_up", Tensor::zeros({rank, d_out}));
    p.alpha = ps.add(Section::Adapter, prefix + ".alpha", Tensor::scalar(1.0));
    return p;
}

Var cross_attention(const Var& queries, const std::vector<EncodedContext>& contexts,
                    const CrossAttnLayer& layer) {
    if (queries->value.rank() != 3)
        throw ShapeError("cross_attention expects (N, L, width) queries");
    const int64_t N = queries->value.dim(0);
    const int64_t width = queries->value.dim(2);
    if (static_cast<int64_t>(contexts.size()) != N)
        throw ShapeError("cross_attention needs one context per batch row");
    if (layer.heads < 1 || width % layer.heads != 0)
        throw ConfigError("cross_attention heads must divide the layer width");

    std::vector<Var> ks, vs;
    ks.reserve(contexts.size());
    vs.reserve(contexts.size());
    for (const EncodedContext& ctx : contexts) {
        ks.push_back(layer.k(ctx.tokens, ctx.style_count));
        vs.push_back(layer.v(ctx.tokens, ctx.style_count));
    }
    std::vector<int64_t> lens;
    Var k = stack_rows_padded(ks, &lens);
    Var v = stack_rows_padded(vs, nullptr);

    Var q = layer.q(queries);
    Var attn = multihead_attention(q, k, v, layer.heads, &lens);
    return layer.o(attn);
}

}  // namespace artadapter
