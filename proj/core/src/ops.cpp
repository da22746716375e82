#include "artadapter/ops.hpp"

#include <algorithm>
#include <cmath>

#include "artadapter/gemm.hpp"

namespace artadapter {
namespace ops {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw ShapeError(std::string(op) + ": " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
}

void accumulate(Node& p, const Tensor& g) {
    if (!p.requires_grad) return;
    p.ensure_grad();
    p.grad.add_(g);
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    out.add_(b->value);
    return detail::make_result(std::move(out), {a, b}, [](Node& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    out.add_scaled_(b->value, -1.0);
    return detail::make_result(std::move(out), {a, b}, [](Node& self) {
        accumulate(*self.parents[0], self.grad);
        Node& p = *self.parents[1];
        if (p.requires_grad) {
            p.ensure_grad();
            p.grad.add_scaled_(self.grad, -1.0);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.at(i) = a->value.at(i) * b->value.at(i);
    return detail::make_result(std::move(out), {a, b}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        const int64_t n = self.grad.numel();
        if (a.requires_grad) {
            a.ensure_grad();
            for (int64_t i = 0; i < n; ++i) a.grad.at(i) += self.grad.at(i) * b.value.at(i);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (int64_t i = 0; i < n; ++i) b.grad.at(i) += self.grad.at(i) * a.value.at(i);
        }
    });
}

Var scale(const Var& a, scalar_t c) {
    Tensor out = a->value;
    out.scale_(c);
    return detail::make_result(std::move(out), {a}, [c](Node& self) {
        Node& p = *self.parents[0];
        if (p.requires_grad) {
            p.ensure_grad();
            p.grad.add_scaled_(self.grad, c);
        }
    });
}

Var scalar_mul(const Var& a, const Var& s) {
    if (s->value.numel() != 1) throw ShapeError("scalar_mul: scale must hold one element");
    Tensor out = a->value;
    out.scale_(s->value.at(0));
    return detail::make_result(std::move(out), {a, s}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& s = *self.parents[1];
        if (a.requires_grad) {
            a.ensure_grad();
            a.grad.add_scaled_(self.grad, s.value.at(0));
        }
        if (s.requires_grad) {
            s.ensure_grad();
            scalar_t acc = 0.0;
            const int64_t n = self.grad.numel();
            for (int64_t i = 0; i < n; ++i) acc += self.grad.at(i) * a.value.at(i);
            s.grad.at(0) += acc;
        }
    });
}

Var silu(const Var& a) {
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
        scalar_t x = a->value.at(i);
        out.at(i) = x / (1.0 + std::exp(-x));
    }
    return detail::make_result(std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const int64_t n = self.grad.numel();
        for (int64_t i = 0; i < n; ++i) {
            scalar_t x = p.value.at(i);
            scalar_t sg = 1.0 / (1.0 + std::exp(-x));
            p.grad.at(i) += self.grad.at(i) * sg * (1.0 + x * (1.0 - sg));
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
        throw ShapeError("matmul: " + a->value.shape_str() + " x " + b->value.shape_str());
    const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor out({m, n});
    gemm(a->value.data(), b->value.data(), out.data(), m, k, n);
    return detail::make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) {
            a.ensure_grad();
            gemm_bt(self.grad.data(), b.value.data(), a.grad.data(), m, n, k, true);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            gemm_at(a.value.data(), self.grad.data(), b.grad.data(), k, m, n, true);
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    if (x->value.rank() < 2 || w->value.rank() != 2)
        throw ShapeError("linear: need row tensor x (K,N) weight");
    const int64_t k = x->value.dim(-1);
    if (k != w->value.dim(0))
        throw ShapeError("linear: " + x->value.shape_str() + " x " + w->value.shape_str());
    const int64_t rows = x->value.numel() / k;
    const int64_t n = w->value.dim(1);
    if (b && b->value.numel() != n) throw ShapeError("linear: bias size mismatch");

    std::vector<int64_t> out_shape = x->value.shape();
    out_shape.back() = n;
    Tensor out(std::move(out_shape));
    gemm(x->value.data(), w->value.data(), out.data(), rows, k, n);
    if (b) {
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < n; ++j) out.at(r * n + j) += b->value.at(j);
    }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return detail::make_result(std::move(out), std::move(parents), [rows, k, n](Node& self) {
        Node& x = *self.parents[0];
        Node& w = *self.parents[1];
        if (x.requires_grad) {
            x.ensure_grad();
            gemm_bt(self.grad.data(), w.value.data(), x.grad.data(), rows, n, k, true);
        }
        if (w.requires_grad) {
            w.ensure_grad();
            gemm_at(x.value.data(), self.grad.data(), w.grad.data(), k, rows, n, true);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            Node& b = *self.parents[2];
            b.ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < n; ++j) b.grad.at(j) += self.grad.at(r * n + j);
        }
    });
}

Var add_row_vector(const Var& x, const Var& v) {
    const int64_t n = x->value.dim(-1);
    if (v->value.numel() != n) throw ShapeError("add_row_vector: width mismatch");
    const int64_t rows = x->value.numel() / n;
    Tensor out = x->value;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < n; ++j) out.at(r * n + j) += v->value.at(j);
    return detail::make_result(std::move(out), {x, v}, [rows, n](Node& self) {
        accumulate(*self.parents[0], self.grad);
        Node& v = *self.parents[1];
        if (v.requires_grad) {
            v.ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < n; ++j) v.grad.at(j) += self.grad.at(r * n + j);
        }
    });
}

Var bmm(const Var& a, const Var& b) {
    if (a->value.rank() != 3 || b->value.rank() != 3 || a->value.dim(0) != b->value.dim(0) ||
        a->value.dim(2) != b->value.dim(1))
        throw ShapeError("bmm: " + a->value.shape_str() + " x " + b->value.shape_str());
    const int64_t bs = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2),
                  n = b->value.dim(2);
    Tensor out({bs, m, n});
    for (int64_t i = 0; i < bs; ++i)
        gemm(a->value.data() + i * m * k, b->value.data() + i * k * n, out.data() + i * m * n,
             m, k, n);
    return detail::make_result(std::move(out), {a, b}, [bs, m, k, n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) a.ensure_grad();
        if (b.requires_grad) b.ensure_grad();
        for (int64_t i = 0; i < bs; ++i) {
            const scalar_t* g = self.grad.data() + i * m * n;
            if (a.requires_grad)
                gemm_bt(g, b.value.data() + i * k * n, a.grad.data() + i * m * k, m, n, k, true);
            if (b.requires_grad)
                gemm_at(a.value.data() + i * m * k, g, b.grad.data() + i * k * n, k, m, n, true);
        }
    });
}

Var bmm_nt(const Var& a, const Var& b) {
    if (a->value.rank() != 3 || b->value.rank() != 3 || a->value.dim(0) != b->value.dim(0) ||
        a->value.dim(2) != b->value.dim(2))
        throw ShapeError("bmm_nt: " + a->value.shape_str() + " x " + b->value.shape_str());
    const int64_t bs = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2),
                  n = b->value.dim(1);
    Tensor out({bs, m, n});
    for (int64_t i = 0; i < bs; ++i)
        gemm_bt(a->value.data() + i * m * k, b->value.data() + i * n * k,
                out.data() + i * m * n, m, k, n);
    return detail::make_result(std::move(out), {a, b}, [bs, m, k, n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) a.ensure_grad();
        if (b.requires_grad) b.ensure_grad();
        for (int64_t i = 0; i < bs; ++i) {
            const scalar_t* g = self.grad.data() + i * m * n;
            if (a.requires_grad)
                gemm(g, b.value.data() + i * n * k, a.grad.data() + i * m * k, m, n, k, true);
            if (b.requires_grad)
                gemm_at(g, a.value.data() + i * m * k, b.grad.data() + i * n * k, n, m, k, true);
        }
    });
}

Var reshape(const Var& x, std::vector<int64_t> shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return detail::make_result(std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        p.grad.add_(self.grad.reshaped(p.value.shape()));
    });
}

namespace {

void permute_0213_raw(const scalar_t* in, scalar_t* out, int64_t d0, int64_t d1, int64_t d2,
                      int64_t d3) {
    for (int64_t a = 0; a < d0; ++a)
        for (int64_t b = 0; b < d1; ++b)
            for (int64_t c = 0; c < d2; ++c) {
                const scalar_t* src = in + ((a * d1 + b) * d2 + c) * d3;
                scalar_t* dst = out + ((a * d2 + c) * d1 + b) * d3;
                std::copy(src, src + d3, dst);
            }
}

}  // namespace

Var permute_0213(const Var& x) {
    if (x->value.rank() != 4) throw ShapeError("permute_0213: need rank 4");
    const int64_t d0 = x->value.dim(0), d1 = x->value.dim(1), d2 = x->value.dim(2),
                  d3 = x->value.dim(3);
    Tensor out({d0, d2, d1, d3});
    permute_0213_raw(x->value.data(), out.data(), d0, d1, d2, d3);
    return detail::make_result(std::move(out), {x}, [d0, d1, d2, d3](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        Tensor tmp({d0, d1, d2, d3});
        permute_0213_raw(self.grad.data(), tmp.data(), d0, d2, d1, d3);
        p.grad.add_(tmp);
    });
}

Var nchw_to_nlc(const Var& x) {
    if (x->value.rank() != 4) throw ShapeError("nchw_to_nlc: need rank 4");
    const int64_t n = x->value.dim(0), c = x->value.dim(1);
    const int64_t l = x->value.dim(2) * x->value.dim(3);
    Tensor out({n, l, c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const scalar_t* src = x->value.data() + (i * c + ch) * l;
            scalar_t* dst = out.data() + i * l * c + ch;
            for (int64_t p = 0; p < l; ++p) dst[p * c] = src[p];
        }
    return detail::make_result(std::move(out), {x}, [n, c, l](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                const scalar_t* src = self.grad.data() + i * l * c + ch;
                scalar_t* dst = p.grad.data() + (i * c + ch) * l;
                for (int64_t q = 0; q < l; ++q) dst[q] += src[q * c];
            }
    });
}

Var nlc_to_nchw(const Var& x, int64_t h, int64_t w) {
    if (x->value.rank() != 3) throw ShapeError("nlc_to_nchw: need rank 3");
    const int64_t n = x->value.dim(0), l = x->value.dim(1), c = x->value.dim(2);
    if (l != h * w) throw ShapeError("nlc_to_nchw: sequence length is not h*w");
    Tensor out({n, c, h, w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const scalar_t* src = x->value.data() + i * l * c + ch;
            scalar_t* dst = out.data() + (i * c + ch) * l;
            for (int64_t p = 0; p < l; ++p) dst[p] = src[p * c];
        }
    return detail::make_result(std::move(out), {x}, [n, c, l](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                const scalar_t* src = self.grad.data() + (i * c + ch) * l;
                scalar_t* dst = p.grad.data() + i * l * c + ch;
                for (int64_t q = 0; q < l; ++q) dst[q * c] += src[q];
            }
    });
}

Var slice_rows(const Var& x, int64_t r0, int64_t r1) {
    if (x->value.rank() != 2) throw ShapeError("slice_rows: need rank 2");
    const int64_t rows = x->value.dim(0), c = x->value.dim(1);
    if (r0 < 0 || r1 > rows || r0 > r1) throw RangeError("slice_rows: bad row range");
    Tensor out({r1 - r0, c});
    std::copy(x->value.data() + r0 * c, x->value.data() + r1 * c, out.data());
    return detail::make_result(std::move(out), {x}, [r0, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const int64_t n = self.grad.numel();
        scalar_t* dst = p.grad.data() + r0 * c;
        for (int64_t i = 0; i < n; ++i) dst[i] += self.grad.at(i);
    });
}

Var concat_rows(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(1))
        throw ShapeError("concat_rows: " + a->value.shape_str() + " vs " + b->value.shape_str());
    const int64_t ra = a->value.dim(0), rb = b->value.dim(0), c = a->value.dim(1);
    Tensor out({ra + rb, c});
    std::copy(a->value.data(), a->value.data() + ra * c, out.data());
    std::copy(b->value.data(), b->value.data() + rb * c, out.data() + ra * c);
    return detail::make_result(std::move(out), {a, b}, [ra, rb, c](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (int64_t i = 0; i < ra * c; ++i) a.grad.at(i) += self.grad.at(i);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (int64_t i = 0; i < rb * c; ++i) b.grad.at(i) += self.grad.at(ra * c + i);
        }
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
        av.dim(3) != bv.dim(3))
        throw ShapeError("concat_channels: " + av.shape_str() + " vs " + bv.shape_str());
    const int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), hw = av.dim(2) * av.dim(3);
    Tensor out({n, ca + cb, av.dim(2), av.dim(3)});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(av.data() + i * ca * hw, av.data() + (i + 1) * ca * hw,
                  out.data() + i * (ca + cb) * hw);
        std::copy(bv.data() + i * cb * hw, bv.data() + (i + 1) * cb * hw,
                  out.data() + i * (ca + cb) * hw + ca * hw);
    }
    return detail::make_result(std::move(out), {a, b}, [n, ca, cb, hw](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) a.ensure_grad();
        if (b.requires_grad) b.ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            const scalar_t* g = self.grad.data() + i * (ca + cb) * hw;
            if (a.requires_grad) {
                scalar_t* dst = a.grad.data() + i * ca * hw;
                for (int64_t j = 0; j < ca * hw; ++j) dst[j] += g[j];
            }
            if (b.requires_grad) {
                scalar_t* dst = b.grad.data() + i * cb * hw;
                for (int64_t j = 0; j < cb * hw; ++j) dst[j] += g[ca * hw + j];
            }
        }
    });
}

Var stack_rows_padded(const std::vector<Var>& seqs, std::vector<int64_t>* lens) {
    if (seqs.empty()) throw ArgumentError("stack_rows_padded: no sequences");
    const int64_t d = seqs[0]->value.dim(1);
    int64_t smax = 0;
    for (const auto& s : seqs) {
        if (s->value.rank() != 2 || s->value.dim(1) != d)
            throw ShapeError("stack_rows_padded: inconsistent widths");
        smax = std::max(smax, s->value.dim(0));
    }
    const int64_t n = static_cast<int64_t>(seqs.size());
    if (lens) {
        lens->clear();
        for (const auto& s : seqs) lens->push_back(s->value.dim(0));
    }
    Tensor out({n, smax, d});
    for (int64_t i = 0; i < n; ++i) {
        const Tensor& v = seqs[i]->value;
        std::copy(v.data(), v.data() + v.numel(), out.data() + i * smax * d);
    }
    return detail::make_result(std::move(out), seqs, [smax, d](Node& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            Node& p = *self.parents[i];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            const scalar_t* g = self.grad.data() + static_cast<int64_t>(i) * smax * d;
            for (int64_t j = 0; j < p.value.numel(); ++j) p.grad.at(j) += g[j];
        }
    });
}

Var scatter_batch(const Var& x, const std::vector<int64_t>& indices, int64_t n) {
    if (x->value.rank() < 2) throw ShapeError("scatter_batch: need a batch dimension");
    const int64_t m = x->value.dim(0);
    if (static_cast<int64_t>(indices.size()) != m)
        throw ArgumentError("scatter_batch: index count does not match batch");
    const int64_t stride = m > 0 ? x->value.numel() / m : 0;
    std::vector<int64_t> out_shape = x->value.shape();
    out_shape[0] = n;
    Tensor out(std::move(out_shape));
    for (int64_t i = 0; i < m; ++i) {
        int64_t idx = indices[i];
        if (idx < 0 || idx >= n) throw RangeError("scatter_batch: index out of range");
        std::copy(x->value.data() + i * stride, x->value.data() + (i + 1) * stride,
                  out.data() + idx * stride);
    }
    return detail::make_result(std::move(out), {x}, [idx = indices, stride](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i) {
            const scalar_t* g = self.grad.data() + idx[i] * stride;
            scalar_t* dst = p.grad.data() + static_cast<int64_t>(i) * stride;
            for (int64_t j = 0; j < stride; ++j) dst[j] += g[j];
        }
    });
}

namespace {

void softmax_rows(const scalar_t* x, scalar_t* p, int64_t rows, int64_t s,
                  const int64_t* row_lens) {
    for (int64_t r = 0; r < rows; ++r) {
        const scalar_t* xr = x + r * s;
        scalar_t* pr = p + r * s;
        const int64_t len = row_lens ? row_lens[r] : s;
        scalar_t mx = xr[0];
        for (int64_t j = 1; j < len; ++j) mx = std::max(mx, xr[j]);
        scalar_t sum = 0.0;
        for (int64_t j = 0; j < len; ++j) {
            pr[j] = std::exp(xr[j] - mx);
            sum += pr[j];
        }
        for (int64_t j = 0; j < len; ++j) pr[j] /= sum;
        for (int64_t j = len; j < s; ++j) pr[j] = 0.0;
    }
}

Var softmax_impl(const Var& x, std::vector<int64_t> row_lens) {
    const int64_t s = x->value.dim(-1);
    const int64_t rows = x->value.numel() / s;
    if (!row_lens.empty() && static_cast<int64_t>(row_lens.size()) != rows)
        throw ShapeError("softmax: row length count mismatch");
    for (int64_t len : row_lens)
        if (len < 1 || len > s) throw RangeError("softmax: row length out of range");
    Tensor out(x->value.shape());
    softmax_rows(x->value.data(), out.data(), rows, s,
                 row_lens.empty() ? nullptr : row_lens.data());
    return detail::make_result(std::move(out), {x},
                               [rows, s, lens = std::move(row_lens)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const scalar_t* pr = self.value.data() + r * s;
            const scalar_t* gr = self.grad.data() + r * s;
            scalar_t* dx = p.grad.data() + r * s;
            const int64_t len = lens.empty() ? s : lens[r];
            scalar_t dot = 0.0;
            for (int64_t j = 0; j < len; ++j) dot += gr[j] * pr[j];
            for (int64_t j = 0; j < len; ++j) dx[j] += pr[j] * (gr[j] - dot);
        }
    });
}

}  // namespace

Var softmax_lastdim(const Var& x) { return softmax_impl(x, {}); }

Var softmax_lastdim_len(const Var& x, const std::vector<int64_t>& row_lens) {
    return softmax_impl(x, row_lens);
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, scalar_t eps) {
    const int64_t d = x->value.dim(-1);
    if (gamma->value.numel() != d || beta->value.numel() != d)
        throw ShapeError("layer_norm: affine parameter size mismatch");
    const int64_t rows = x->value.numel() / d;
    Tensor out(x->value.shape());
    Tensor mean({rows}), inv_std({rows});
    for (int64_t r = 0; r < rows; ++r) {
        const scalar_t* xr = x->value.data() + r * d;
        scalar_t m = 0.0;
        for (int64_t j = 0; j < d; ++j) m += xr[j];
        m /= static_cast<scalar_t>(d);
        scalar_t v = 0.0;
        for (int64_t j = 0; j < d; ++j) v += (xr[j] - m) * (xr[j] - m);
        v /= static_cast<scalar_t>(d);
        const scalar_t is = 1.0 / std::sqrt(v + eps);
        mean.at(r) = m;
        inv_std.at(r) = is;
        scalar_t* yr = out.data() + r * d;
        for (int64_t j = 0; j < d; ++j)
            yr[j] = gamma->value.at(j) * (xr[j] - m) * is + beta->value.at(j);
    }
    return detail::make_result(
        std::move(out), {x, gamma, beta},
        [rows, d, mean = std::move(mean), inv_std = std::move(inv_std)](Node& self) {
            Node& x = *self.parents[0];
            Node& gamma = *self.parents[1];
            Node& beta = *self.parents[2];
            if (x.requires_grad) x.ensure_grad();
            if (gamma.requires_grad) gamma.ensure_grad();
            if (beta.requires_grad) beta.ensure_grad();
            std::vector<scalar_t> xhat(static_cast<size_t>(d));
            std::vector<scalar_t> dxh(static_cast<size_t>(d));
            for (int64_t r = 0; r < rows; ++r) {
                const scalar_t* xr = x.value.data() + r * d;
                const scalar_t* gr = self.grad.data() + r * d;
                const scalar_t m = mean.at(r);
                const scalar_t is = inv_std.at(r);
                scalar_t sum_dxh = 0.0, sum_dxh_xhat = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    xhat[static_cast<size_t>(j)] = (xr[j] - m) * is;
                    dxh[static_cast<size_t>(j)] = gr[j] * gamma.value.at(j);
                    sum_dxh += dxh[static_cast<size_t>(j)];
                    sum_dxh_xhat += dxh[static_cast<size_t>(j)] * xhat[static_cast<size_t>(j)];
                }
                if (x.requires_grad) {
                    scalar_t* dx = x.grad.data() + r * d;
                    const scalar_t inv_d = 1.0 / static_cast<scalar_t>(d);
                    for (int64_t j = 0; j < d; ++j)
                        dx[j] += is * (dxh[static_cast<size_t>(j)] - inv_d * sum_dxh -
                                       xhat[static_cast<size_t>(j)] * inv_d * sum_dxh_xhat);
                }
                if (gamma.requires_grad)
                    for (int64_t j = 0; j < d; ++j)
                        gamma.grad.at(j) += gr[j] * xhat[static_cast<size_t>(j)];
                if (beta.requires_grad)
                    for (int64_t j = 0; j < d; ++j) beta.grad.at(j) += gr[j];
            }
        });
}

Var group_norm(const Var& x, int64_t groups, const Var& gamma, const Var& beta, scalar_t eps) {
    if (x->value.rank() != 4) throw ShapeError("group_norm: need NCHW input");
    const int64_t n = x->value.dim(0), c = x->value.dim(1);
    const int64_t hw = x->value.dim(2) * x->value.dim(3);
    if (groups < 1 || c % groups != 0)
        throw ArgumentError("group_norm: groups must divide channels");
    if (gamma->value.numel() != c || beta->value.numel() != c)
        throw ShapeError("group_norm: affine parameter size mismatch");
    const int64_t cg = c / groups;
    const int64_t block = cg * hw;
    Tensor out(x->value.shape());
    Tensor mean({n, groups}), inv_std({n, groups});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t g = 0; g < groups; ++g) {
            const scalar_t* xb = x->value.data() + (i * c + g * cg) * hw;
            scalar_t m = 0.0;
            for (int64_t j = 0; j < block; ++j) m += xb[j];
            m /= static_cast<scalar_t>(block);
            scalar_t v = 0.0;
            for (int64_t j = 0; j < block; ++j) v += (xb[j] - m) * (xb[j] - m);
            v /= static_cast<scalar_t>(block);
            const scalar_t is = 1.0 / std::sqrt(v + eps);
            mean.at2(i, g) = m;
            inv_std.at2(i, g) = is;
            scalar_t* yb = out.data() + (i * c + g * cg) * hw;
            for (int64_t ch = 0; ch < cg; ++ch) {
                const scalar_t ga = gamma->value.at(g * cg + ch);
                const scalar_t be = beta->value.at(g * cg + ch);
                for (int64_t p = 0; p < hw; ++p)
                    yb[ch * hw + p] = ga * (xb[ch * hw + p] - m) * is + be;
            }
        }
    return detail::make_result(
        std::move(out), {x, gamma, beta},
        [n, c, hw, groups, cg, block, mean = std::move(mean),
         inv_std = std::move(inv_std)](Node& self) {
            Node& x = *self.parents[0];
            Node& gamma = *self.parents[1];
            Node& beta = *self.parents[2];
            if (x.requires_grad) x.ensure_grad();
            if (gamma.requires_grad) gamma.ensure_grad();
            if (beta.requires_grad) beta.ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t g = 0; g < groups; ++g) {
                    const scalar_t* xb = x.value.data() + (i * c + g * cg) * hw;
                    const scalar_t* gb = self.grad.data() + (i * c + g * cg) * hw;
                    const scalar_t m = mean.at2(i, g);
                    const scalar_t is = inv_std.at2(i, g);
                    scalar_t sum_dxh = 0.0, sum_dxh_xhat = 0.0;
                    for (int64_t ch = 0; ch < cg; ++ch) {
                        const scalar_t ga = gamma.value.at(g * cg + ch);
                        for (int64_t p = 0; p < hw; ++p) {
                            const scalar_t xhat = (xb[ch * hw + p] - m) * is;
                            const scalar_t dxh = gb[ch * hw + p] * ga;
                            sum_dxh += dxh;
                            sum_dxh_xhat += dxh * xhat;
                        }
                    }
                    const scalar_t inv_b = 1.0 / static_cast<scalar_t>(block);
                    for (int64_t ch = 0; ch < cg; ++ch) {
                        const int64_t cc = g * cg + ch;
                        const scalar_t ga = gamma.value.at(cc);
                        scalar_t dga = 0.0, dbe = 0.0;
                        scalar_t* dx =
                            x.requires_grad ? x.grad.data() + (i * c + cc) * hw : nullptr;
                        for (int64_t p = 0; p < hw; ++p) {
                            const scalar_t xhat = (xb[ch * hw + p] - m) * is;
                            const scalar_t gr = gb[ch * hw + p];
                            if (dx)
                                dx[p] += is * (gr * ga - inv_b * sum_dxh -
                                               xhat * inv_b * sum_dxh_xhat);
                            dga += gr * xhat;
                            dbe += gr;
                        }
                        if (gamma.requires_grad) gamma.grad.at(cc) += dga;
                        if (beta.requires_grad) beta.grad.at(cc) += dbe;
                    }
                }
        });
}

void im2col(const scalar_t* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, scalar_t* col, int64_t ho, int64_t wo) {
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
                scalar_t* row = col + ((ci * kh + ky) * kw + kx) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride - pad + ky;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride - pad + kx;
                        row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                                ? x[(ci * h + iy) * w + ix]
                                                : 0.0;
                    }
                }
            }
}

void col2im_add(const scalar_t* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, scalar_t* x, int64_t ho, int64_t wo) {
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
                const scalar_t* row = col + ((ci * kh + ky) * kw + kx) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        x[(ci * h + iy) * w + ix] += row[oy * wo + ox];
                    }
                }
            }
}

namespace {

struct ConvDims {
    int64_t n, ci, h, w, co, kh, kw, stride, pad, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad) {
    if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: " + x.shape_str() + " with kernel " + w.shape_str());
    if (stride < 1 || pad < 0) throw ArgumentError("conv2d: bad stride or padding");
    ConvDims d;
    d.n = x.dim(0);
    d.ci = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.co = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.stride = stride;
    d.pad = pad;
    if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw)
        throw ShapeError("conv2d: kernel larger than padded input");
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t pad) {
    const ConvDims d = conv_dims(x->value, w->value, stride, pad);
    if (b && b->value.numel() != d.co) throw ShapeError("conv2d: bias size mismatch");
    const int64_t krows = d.ci * d.kh * d.kw;
    const int64_t cols = d.ho * d.wo;
    Tensor out({d.n, d.co, d.ho, d.wo});
    Tensor col({krows, cols});
    for (int64_t i = 0; i < d.n; ++i) {
        im2col(x->value.data() + i * d.ci * d.h * d.w, d.ci, d.h, d.w, d.kh, d.kw, d.stride,
               d.pad, col.data(), d.ho, d.wo);
        scalar_t* y = out.data() + i * d.co * cols;
        gemm(w->value.data(), col.data(), y, d.co, krows, cols);
        if (b)
            for (int64_t ch = 0; ch < d.co; ++ch)
                for (int64_t p = 0; p < cols; ++p) y[ch * cols + p] += b->value.at(ch);
    }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return detail::make_result(std::move(out), std::move(parents), [d](Node& self) {
        Node& x = *self.parents[0];
        Node& w = *self.parents[1];
        Node* b = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const int64_t krows = d.ci * d.kh * d.kw;
        const int64_t cols = d.ho * d.wo;
        if (x.requires_grad) x.ensure_grad();
        if (w.requires_grad) w.ensure_grad();
        if (b && b->requires_grad) b->ensure_grad();
        Tensor col({krows, cols});
        Tensor dcol({krows, cols});
        for (int64_t i = 0; i < d.n; ++i) {
            const scalar_t* g = self.grad.data() + i * d.co * cols;
            if (w.requires_grad) {
                im2col(x.value.data() + i * d.ci * d.h * d.w, d.ci, d.h, d.w, d.kh, d.kw,
                       d.stride, d.pad, col.data(), d.ho, d.wo);
                gemm_bt(g, col.data(), w.grad.data(), d.co, cols, krows, true);
            }
            if (b && b->requires_grad)
                for (int64_t ch = 0; ch < d.co; ++ch) {
                    scalar_t acc = 0.0;
                    for (int64_t p = 0; p < cols; ++p) acc += g[ch * cols + p];
                    b->grad.at(ch) += acc;
                }
            if (x.requires_grad) {
                gemm_at(w.value.data(), g, dcol.data(), krows, d.co, cols);
                col2im_add(dcol.data(), d.ci, d.h, d.w, d.kh, d.kw, d.stride, d.pad,
                           x.grad.data() + i * d.ci * d.h * d.w, d.ho, d.wo);
            }
        }
    });
}

Var upsample_nearest2(const Var& x) {
    if (x->value.rank() != 4) throw ShapeError("upsample_nearest2: need NCHW input");
    const int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2),
                  w = x->value.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const scalar_t* src = x->value.data() + nc * h * w;
        scalar_t* dst = out.data() + nc * 4 * h * w;
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                const scalar_t v = src[i * w + j];
                scalar_t* base = dst + 2 * i * 2 * w + 2 * j;
                base[0] = v;
                base[1] = v;
                base[2 * w] = v;
                base[2 * w + 1] = v;
            }
    }
    return detail::make_result(std::move(out), {x}, [n, c, h, w](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t nc = 0; nc < n * c; ++nc) {
            const scalar_t* g = self.grad.data() + nc * 4 * h * w;
            scalar_t* dst = p.grad.data() + nc * h * w;
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) {
                    const scalar_t* base = g + 2 * i * 2 * w + 2 * j;
                    dst[i * w + j] += base[0] + base[1] + base[2 * w] + base[2 * w + 1];
                }
        }
    });
}

Var add_channel_bias(const Var& x, const Var& v) {
    if (x->value.rank() != 4 || v->value.rank() != 2 || x->value.dim(0) != v->value.dim(0) ||
        x->value.dim(1) != v->value.dim(1))
        throw ShapeError("add_channel_bias: " + x->value.shape_str() + " vs " +
                         v->value.shape_str());
    const int64_t n = x->value.dim(0), c = x->value.dim(1);
    const int64_t hw = x->value.dim(2) * x->value.dim(3);
    Tensor out = x->value;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const scalar_t bias = v->value.at2(i, ch);
            scalar_t* dst = out.data() + (i * c + ch) * hw;
            for (int64_t p = 0; p < hw; ++p) dst[p] += bias;
        }
    return detail::make_result(std::move(out), {x, v}, [n, c, hw](Node& self) {
        accumulate(*self.parents[0], self.grad);
        Node& v = *self.parents[1];
        if (!v.requires_grad) return;
        v.ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
                const scalar_t* g = self.grad.data() + (i * c + ch) * hw;
                scalar_t acc = 0.0;
                for (int64_t p = 0; p < hw; ++p) acc += g[p];
                v.grad.at2(i, ch) += acc;
            }
    });
}

Var embedding(const Var& table, const std::vector<int64_t>& ids) {
    if (table->value.rank() != 2) throw ShapeError("embedding: table must be rank 2");
    const int64_t v = table->value.dim(0), d = table->value.dim(1);
    for (int64_t id : ids)
        if (id < 0 || id >= v) throw RangeError("embedding: id out of range");
    const int64_t l = static_cast<int64_t>(ids.size());
    Tensor out({l, d});
    for (int64_t i = 0; i < l; ++i)
        std::copy(table->value.data() + ids[static_cast<size_t>(i)] * d,
                  table->value.data() + (ids[static_cast<size_t>(i)] + 1) * d,
                  out.data() + i * d);
    return detail::make_result(std::move(out), {table}, [ids, d](Node& self) {
        Node& t = *self.parents[0];
        if (!t.requires_grad) return;
        t.ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            const scalar_t* g = self.grad.data() + static_cast<int64_t>(i) * d;
            scalar_t* dst = t.grad.data() + ids[i] * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += g[j];
        }
    });
}

Var mean_all(const Var& x) {
    const int64_t n = x->value.numel();
    if (n == 0) throw ShapeError("mean_all: empty tensor");
    scalar_t acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x->value.at(i);
    Tensor out = Tensor::scalar(acc / static_cast<scalar_t>(n));
    return detail::make_result(std::move(out), {x}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const scalar_t g = self.grad.at(0) / static_cast<scalar_t>(n);
        for (int64_t i = 0; i < n; ++i) p.grad.at(i) += g;
    });
}

Var sum_all(const Var& x) {
    const int64_t n = x->value.numel();
    scalar_t acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x->value.at(i);
    Tensor out = Tensor::scalar(acc);
    return detail::make_result(std::move(out), {x}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const scalar_t g = self.grad.at(0);
        for (int64_t i = 0; i < n; ++i) p.grad.at(i) += g;
    });
}

Var mse_loss(const Var& pred, const Var& target) {
    check_same_shape(pred, target, "mse_loss");
    const int64_t n = pred->value.numel();
    if (n == 0) throw ShapeError("mse_loss: empty tensors");
    scalar_t acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const scalar_t dlt = pred->value.at(i) - target->value.at(i);
        acc += dlt * dlt;
    }
    Tensor out = Tensor::scalar(acc / static_cast<scalar_t>(n));
    return detail::make_result(std::move(out), {pred, target}, [n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        const scalar_t g = self.grad.at(0) * 2.0 / static_cast<scalar_t>(n);
        if (a.requires_grad) {
            a.ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                a.grad.at(i) += g * (a.value.at(i) - b.value.at(i));
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                b.grad.at(i) -= g * (a.value.at(i) - b.value.at(i));
        }
    });
}

Tensor conv2d_plain(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride,
                    int64_t pad) {
    if (x.rank() != 3 || w.rank() != 4 || x.dim(0) != w.dim(1))
        throw ShapeError("conv2d_plain: " + x.shape_str() + " with kernel " + w.shape_str());
    if (stride < 1 || pad < 0) throw ArgumentError("conv2d_plain: bad stride or padding");
    const int64_t ci = x.dim(0), h = x.dim(1), iw = x.dim(2);
    const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (h + 2 * pad < kh || iw + 2 * pad < kw)
        throw ShapeError("conv2d_plain: kernel larger than padded input");
    const int64_t ho = (h + 2 * pad - kh) / stride + 1;
    const int64_t wo = (iw + 2 * pad - kw) / stride + 1;
    const int64_t krows = ci * kh * kw;
    const int64_t cols = ho * wo;
    if (!b.empty() && b.numel() != co) throw ShapeError("conv2d_plain: bias size mismatch");
    Tensor col({krows, cols});
    im2col(x.data(), ci, h, iw, kh, kw, stride, pad, col.data(), ho, wo);
    Tensor out({co, ho, wo});
    gemm(w.data(), col.data(), out.data(), co, krows, cols);
    if (!b.empty())
        for (int64_t ch = 0; ch < co; ++ch)
            for (int64_t p = 0; p < cols; ++p) out.at(ch * cols + p) += b.at(ch);
    return out;
}

Tensor maxpool2_plain(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("maxpool2_plain: need CHW input");
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t ho = h / 2, wo = w / 2;
    Tensor out({c, ho, wo});
    for (int64_t ch = 0; ch < c; ++ch) {
        const scalar_t* src = x.data() + ch * h * w;
        scalar_t* dst = out.data() + ch * ho * wo;
        for (int64_t i = 0; i < ho; ++i)
            for (int64_t j = 0; j < wo; ++j) {
                const scalar_t* base = src + 2 * i * w + 2 * j;
                dst[i * wo + j] =
                    std::max(std::max(base[0], base[1]), std::max(base[w], base[w + 1]));
            }
    }
    return out;
}

Tensor relu_plain(const Tensor& x) {
    Tensor out = x;
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out.at(i) < 0.0) out.at(i) = 0.0;
    return out;
}

}  // namespace ops
}  // namespace artadapter
