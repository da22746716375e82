#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "artadapter/autograd.hpp"

namespace artadapter {
namespace ops {

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, scalar_t c);
Var scalar_mul(const Var& a, const Var& s);  // s holds a single element
Var silu(const Var& a);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);                       // (M,K)x(K,N)
Var linear(const Var& x, const Var& w, const Var& b = nullptr);  // rows x (K,N) [+ bias]
Var add_row_vector(const Var& x, const Var& v);               // broadcast v over rows
Var bmm(const Var& a, const Var& b);     // (B,M,K)x(B,K,N)
Var bmm_nt(const Var& a, const Var& b);  // (B,M,K)x(B,N,K)^T -> (B,M,N)

// ---- shape ----
Var reshape(const Var& x, std::vector<int64_t> shape);
Var permute_0213(const Var& x);               // (A,B,C,D) -> (A,C,B,D)
Var nchw_to_nlc(const Var& x);                // (N,C,H,W) -> (N,HW,C)
Var nlc_to_nchw(const Var& x, int64_t h, int64_t w);
Var slice_rows(const Var& x, int64_t r0, int64_t r1);
Var concat_rows(const Var& a, const Var& b);
Var concat_channels(const Var& a, const Var& b);
// Pads each (L_i,D) sequence with zero rows up to the longest and stacks to
// (N,S,D); writes per-sequence lengths to lens.
Var stack_rows_padded(const std::vector<Var>& seqs, std::vector<int64_t>* lens);
// Places rows of x at the given batch indices of a zeroed (n,...) tensor.
Var scatter_batch(const Var& x, const std::vector<int64_t>& indices, int64_t n);

// ---- normalization / activation over rows ----
Var softmax_lastdim(const Var& x);
// Softmax over the first row_lens[r] entries of each row; the rest are 0.
Var softmax_lastdim_len(const Var& x, const std::vector<int64_t>& row_lens);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, scalar_t eps = 1e-5);
Var group_norm(const Var& x, int64_t groups, const Var& gamma, const Var& beta,
               scalar_t eps = 1e-5);

// ---- conv / spatial ----
Var conv2d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t pad);
Var upsample_nearest2(const Var& x);
Var add_channel_bias(const Var& x, const Var& v);  // x(N,C,H,W) + v(N,C)

// ---- lookup ----
Var embedding(const Var& table, const std::vector<int64_t>& ids);

// ---- reductions ----
Var mean_all(const Var& x);
Var sum_all(const Var& x);
Var mse_loss(const Var& pred, const Var& target);

// ---- plain tensor helpers (no graph; used by fixed feature networks) ----
Tensor conv2d_plain(const Tensor& x, const Tensor& w, const Tensor& b,
                    int64_t stride, int64_t pad);  // x(C,H,W)
Tensor maxpool2_plain(const Tensor& x);
Tensor relu_plain(const Tensor& x);

// im2col for x(C,H,W): rows are (ci,ky,kx), columns are output positions.
void im2col(const scalar_t* x, int64_t c, int64_t h, int64_t w,
            int64_t kh, int64_t kw, int64_t stride, int64_t pad,
            scalar_t* col, int64_t ho, int64_t wo);
void col2im_add(const scalar_t* col, int64_t c, int64_t h, int64_t w,
                int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                scalar_t* x, int64_t ho, int64_t wo);

}  // namespace ops
}  // namespace artadapter
