#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "artadapter/autograd.hpp"
#include "artadapter/rng.hpp"

namespace artadapter {

// Parameter sections. Freezing, learning-rate grouping, checkpoint layout and
// integrity hashes all key off these.
enum class Section {
    Backbone,
    TextEncoder,
    StyleMlp,
    Adapter,
    Aca,
    FinetuneResidual,
};

const char* section_name(Section s);
Section section_from_name(const std::string& name);
std::vector<Section> all_sections();

// Ordered parameter registry. Iteration order is insertion order, which fixes
// serialization layout and makes section hashes reproducible.
class ParamStore {
  public:
    struct Entry {
        Section section;
        std::string name;
        Var var;
    };

    Var add(Section section, const std::string& name, Tensor init);
    bool contains(const std::string& name) const;
    Var get(const std::string& name) const;
    const std::vector<Entry>& entries() const { return entries_; }

    std::vector<Var> section_params(Section section) const;
    std::vector<Var> all_params() const;
    int64_t section_numel(Section section) const;
    uint64_t section_hash(Section section) const;
    void zero_grads() const;
    void set_requires_grad(Section section, bool on) const;
    void remove_section(Section section);

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

struct LinearLayer {
    Var w;  // (in, out)
    Var b;  // (out) or null
    Var operator()(const Var& x) const;
};

struct Conv2dLayer {
    Var w;  // (co, ci, kh, kw)
    Var b;  // (co)
    int64_t stride = 1;
    int64_t pad = 0;
    Var operator()(const Var& x) const;
};

struct LayerNormLayer {
    Var gamma;
    Var beta;
    Var operator()(const Var& x) const;
};

struct GroupNormLayer {
    Var gamma;
    Var beta;
    int64_t groups = 32;
    Var operator()(const Var& x) const;
};

// Factories register the parameters under `prefix + ".weight"` etc. Weights
// draw from N(0, 2/fan_in) unless zero_init is set.
LinearLayer make_linear(ParamStore& ps, Section s, const std::string& prefix, int64_t in,
                        int64_t out, Rng& rng, bool zero_init = false, bool bias = true);
Conv2dLayer make_conv(ParamStore& ps, Section s, const std::string& prefix, int64_t ci, int64_t co,
                      int64_t kernel, int64_t stride, int64_t pad, Rng& rng,
                      bool zero_init = false);
LayerNormLayer make_layer_norm(ParamStore& ps, Section s, const std::string& prefix, int64_t dim);
GroupNormLayer make_group_norm(ParamStore& ps, Section s, const std::string& prefix,
                               int64_t channels, int64_t groups);

// Scaled dot-product attention over (B, L, D) tensors. When kv_lens is given
// it holds one valid key/value length per batch row; padded tail positions
// receive exactly zero attention.
Var multihead_attention(const Var& q, const Var& k, const Var& v, int64_t heads,
                        const std::vector<int64_t>* kv_lens = nullptr);

// Sinusoidal timestep features, (N, dim) for one t per batch row.
Tensor time_embedding(const std::vector<int64_t>& ts, int64_t dim);

}  // namespace artadapter
