#include "artadapter/nn.hpp"

#include <cmath>

#include "artadapter/hash.hpp"
#include "artadapter/ops.hpp"

namespace artadapter {

using namespace ops;

const char* section_name(Section s) {
    switch (s) {
        case Section::Backbone: return "backbone";
        case Section::TextEncoder: return "text_encoder";
        case Section::StyleMlp: return "style_mlp";
        case Section::Adapter: return "adapter";
        case Section::Aca: return "aca";
        case Section::FinetuneResidual: return "finetune_residual";
    }
    throw ArgumentError("unknown section");
}

Section section_from_name(const std::string& name) {
    for (Section s : all_sections())
        if (name == section_name(s)) return s;
    throw KeyError("unknown section name: " + name);
}

std::vector<Section> all_sections() {
    return {Section::Backbone,  Section::TextEncoder, Section::StyleMlp,
            Section::Adapter,   Section::Aca,         Section::FinetuneResidual};
}

Var ParamStore::add(Section section, const std::string& name, Tensor init) {
    if (index_.count(name)) throw KeyError("duplicate parameter name: " + name);
    Var v = make_leaf(std::move(init), true, name);
    index_[name] = entries_.size();
    entries_.push_back({section, name, v});
    return v;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw KeyError("no parameter named: " + name);
    return entries_[it->second].var;
}

std::vector<Var> ParamStore::section_params(Section section) const {
    std::vector<Var> out;
    for (const Entry& e : entries_)
        if (e.section == section) out.push_back(e.var);
    return out;
}

std::vector<Var> ParamStore::all_params() const {
    std::vector<Var> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) out.push_back(e.var);
    return out;
}

int64_t ParamStore::section_numel(Section section) const {
    int64_t n = 0;
    for (const Entry& e : entries_)
        if (e.section == section) n += e.var->value.numel();
    return n;
}

uint64_t ParamStore::section_hash(Section section) const {
    Fnv1a64 h;
    for (const Entry& e : entries_) {
        if (e.section != section) continue;
        h.update_string(e.name);
        h.update_tensor(e.var->value);
    }
    return h.digest();
}

void ParamStore::zero_grads() const {
    for (const Entry& e : entries_) e.var->zero_grad();
}

void ParamStore::set_requires_grad(Section section, bool on) const {
    for (const Entry& e : entries_)
        if (e.section == section) e.var->requires_grad = on;
}

void ParamStore::remove_section(Section section) {
    std::vector<Entry> kept;
    kept.reserve(entries_.size());
    for (Entry& e : entries_)
        if (e.section != section) kept.push_back(std::move(e));
    entries_ = std::move(kept);
    index_.clear();
    for (size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].name] = i;
}

Var LinearLayer::operator()(const Var& x) const { return linear(x, w, b); }

Var Conv2dLayer::operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }

Var LayerNormLayer::operator()(const Var& x) const { return layer_norm(x, gamma, beta); }

Var GroupNormLayer::operator()(const Var& x) const { return group_norm(x, groups, gamma, beta); }

namespace {

Tensor gaussian_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const scalar_t stddev = std::sqrt(2.0 / static_cast<scalar_t>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.gaussian() * stddev;
    return t;
}

}  // namespace

LinearLayer make_linear(ParamStore& ps, Section s, const std::string& prefix, int64_t in,
                        int64_t out, Rng& rng, bool zero_init, bool bias) {
    LinearLayer l;
    Tensor w = zero_init ? Tensor::zeros({in, out}) : gaussian_init({in, out}, in, rng);
    l.w = ps.add(s, prefix + ".weight", std::move(w));
    if (bias) l.b = ps.add(s, prefix + ".bias", Tensor::zeros({out}));
    return l;
}

Conv2dLayer make_conv(ParamStore& ps, Section s, const std::string& prefix, int64_t ci, int64_t co,
                      int64_t kernel, int64_t stride, int64_t pad, Rng& rng, bool zero_init) {
    Conv2dLayer l;
    Tensor w = zero_init ? Tensor::zeros({co, ci, kernel, kernel})
                         : gaussian_init({co, ci, kernel, kernel}, ci * kernel * kernel, rng);
    l.w = ps.add(s, prefix + ".weight", std::move(w));
    l.b = ps.add(s, prefix + ".bias", Tensor::zeros({co}));
    l.stride = stride;
    l.pad = pad;
    return l;
}

LayerNormLayer make_layer_norm(ParamStore& ps, Section s, const std::string& prefix, int64_t dim) {
    LayerNormLayer l;
    l.gamma = ps.add(s, prefix + ".gamma", Tensor::full({dim}, 1.0));
    l.beta = ps.add(s, prefix + ".beta", Tensor::zeros({dim}));
    return l;
}

GroupNormLayer make_group_norm(ParamStore& ps, Section s, const std::string& prefix,
                               int64_t channels, int64_t groups) {
    if (groups < 1 || channels % groups != 0)
        throw ArgumentError("group_norm groups must divide channels");
    GroupNormLayer l;
    l.gamma = ps.add(s, prefix + ".gamma", Tensor::full({channels}, 1.0));
    l.beta = ps.add(s, prefix + ".beta", Tensor::zeros({channels}));
    l.groups = groups;
    return l;
}

Var multihead_attention(const Var& q, const Var& k, const Var& v, int64_t heads,
                        const std::vector<int64_t>* kv_lens) {
    if (q->value.rank() != 3 || k->value.rank() != 3 || v->value.rank() != 3)
        throw ShapeError("multihead_attention expects (B, L, D) tensors");
    const int64_t B = q->value.dim(0);
    const int64_t Lq = q->value.dim(1);
    const int64_t D = q->value.dim(2);
    const int64_t Lk = k->value.dim(1);
    if (k->value.dim(0) != B || v->value.dim(0) != B)
        throw ShapeError("multihead_attention batch mismatch");
    if (k->value.dim(2) != D || v->value.dim(2) != D || v->value.dim(1) != Lk)
        throw ShapeError("multihead_attention key/value shape mismatch");
    if (heads < 1 || D % heads != 0)
        throw ArgumentError("heads must divide the feature dimension");
    if (kv_lens && static_cast<int64_t>(kv_lens->size()) != B)
        throw ShapeError("kv_lens must hold one length per batch row");
    const int64_t dh = D / heads;

    auto split = [&](const Var& x, int64_t L) {
        return reshape(permute_0213(reshape(x, {B, L, heads, dh})), {B * heads, L, dh});
    };
    Var qh = split(q, Lq);
    Var kh = split(k, Lk);
    Var vh = split(v, Lk);

    Var scores = scale(bmm_nt(qh, kh), 1.0 / std::sqrt(static_cast<scalar_t>(dh)));
    Var attn;
    if (kv_lens) {
        std::vector<int64_t> row_lens;
        row_lens.reserve(static_cast<size_t>(B * heads * Lq));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < heads * Lq; ++i) row_lens.push_back((*kv_lens)[b]);
        attn = softmax_lastdim_len(scores, row_lens);
    } else {
        attn = softmax_lastdim(scores);
    }
    Var out = bmm(attn, vh);
    return reshape(permute_0213(reshape(out, {B, heads, Lq, dh})), {B, Lq, D});
}

Tensor time_embedding(const std::vector<int64_t>& ts, int64_t dim) {
    if (dim < 2 || dim % 2 != 0) throw ArgumentError("time embedding dim must be even");
    const int64_t N = static_cast<int64_t>(ts.size());
    const int64_t half = dim / 2;
    Tensor out({N, dim});
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t i = 0; i < half; ++i) {
            const scalar_t freq =
                std::exp(-std::log(10000.0) * static_cast<scalar_t>(i) /
                         static_cast<scalar_t>(half > 1 ? half - 1 : 1));
            const scalar_t arg = static_cast<scalar_t>(ts[n]) * freq;
            out.at(n * dim + i) = std::sin(arg);
            out.at(n * dim + half + i) = std::cos(arg);
        }
    }
    return out;
}

}  // namespace artadapter
