#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artadapter/nn.hpp"
#include "artadapter/text_pipeline.hpp"

namespace artadapter {

// A cross-attention K or V projection with the style-only residual pathway:
//   h[i] = W x[i]                                   for every position i
//   h[i] += (alpha_runtime_scale * alpha) * DW x[i] for style positions only
//   h[i] += delta_h                                 for style positions, when present
// where DW = delta_down * delta_up. Text positions receive bit-exactly zero
// residual: the residual branch is computed on the style rows alone and
// concatenated with a zero block, never added as a masked full-width term.
struct AdaptedProjection {
    Var w;           // (d_in, d_out), frozen backbone weight
    Var bias;        // (d_out), frozen
    Var delta_down;  // (d_in, r), small random init
    Var delta_up;    // (r, d_out), zero init
    Var alpha;       // scalar, learnable, init 1.0
    Var delta_h;     // (d_out) finetune residual; null until allocated
    scalar_t alpha_runtime_scale = 1.0;  // sampling-time knob, never serialized
    std::string path;                    // e.g. "unet.enc2.cross"
    char kind = 'k';                     // 'k' or 'v'

    std::string param_prefix() const { return path + "." + kind; }

    // tokens is the (S, d_in) contextualized sequence; the first style_count
    // rows are style slots.
    Var operator()(const Var& tokens, int64_t style_count) const;
};

AdaptedProjection make_adapted_projection(ParamStore& ps, const std::string& path, char kind,
                                          int64_t d_in, int64_t d_out, int64_t rank, Rng& rng);

// One cross-attention layer: plain Q/output projections over image tokens,
// adapted K/V projections over the conditioning sequence.
struct CrossAttnLayer {
    LinearLayer q;  // (width, width)
    AdaptedProjection k, v;
    LinearLayer o;  // (width, width)
    int64_t heads = 4;
};

// queries: (N, L, width); contexts: one encoded sequence per batch row.
// Key/value projections run per sample in 2-D (preserving the exact-zero
// text residual), then stack with padding masked out of the softmax.
Var cross_attention(const Var& queries, const std::vector<EncodedContext>& contexts,
                    const CrossAttnLayer& layer);

// One optimizer group: parameters sharing a learning rate.
struct ParamGroup {
    std::vector<Var> params;
    scalar_t lr = 0.0;
};

enum class TrainPhase { Base, Adapter, Finetune };

}  // namespace artadapter
