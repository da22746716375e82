#include "artadapter/text_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "artadapter/ops.hpp"

namespace artadapter {

using namespace ops;

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Vocab Vocab::build(const std::vector<std::string>& captions) {
    std::map<std::string, int64_t> counts;
    for (const std::string& caption : captions)
        for (const std::string& w : split_words(caption)) ++counts[w];

    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    const size_t cap = static_cast<size_t>(kCap - kWordBase);
    std::vector<std::string> words;
    words.reserve(std::min(ranked.size(), cap));
    for (const auto& [w, n] : ranked) {
        if (words.size() >= cap) break;
        words.push_back(w);
    }
    return from_words(std::move(words));
}

Vocab Vocab::from_words(std::vector<std::string> words) {
    if (static_cast<int64_t>(words.size()) > kCap - kWordBase)
        throw ArgumentError("vocabulary exceeds its id cap");
    Vocab v;
    v.words_ = std::move(words);
    for (size_t i = 0; i < v.words_.size(); ++i) {
        if (!v.ids_.emplace(v.words_[i], kWordBase + static_cast<int64_t>(i)).second)
            throw ArgumentError("duplicate word in vocabulary: " + v.words_[i]);
    }
    return v;
}

std::vector<int64_t> Vocab::encode(const std::string& prompt, int64_t max_tokens) const {
    if (max_tokens < 2) throw ArgumentError("max_tokens must fit BOS and EOS");
    std::vector<int64_t> ids{kBos};
    for (const std::string& w : split_words(prompt)) {
        if (static_cast<int64_t>(ids.size()) >= max_tokens) break;
        auto it = ids_.find(w);
        if (it != ids_.end()) {
            ids.push_back(it->second);
        } else {
            for (unsigned char c : w) ids.push_back(kByteBase + static_cast<int64_t>(c));
        }
    }
    if (static_cast<int64_t>(ids.size()) >= max_tokens) ids.resize(max_tokens - 1);
    ids.push_back(kEos);
    return ids;
}

Var EncodedContext::style_part() const {
    if (!has_style()) throw StateError("context has no style slots");
    return slice_rows(tokens, 0, style_count);
}

Var EncodedContext::text_part() const { return slice_rows(tokens, style_count, length()); }

void TextPipeline::build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng) {
    cfg_ = cfg;
    const int64_t d = cfg.context_dim;
    const Section s = Section::TextEncoder;

    Tensor table({Vocab::kCap, d});
    rng.fill_gaussian(table, 0.0, 0.02);
    token_table_ = ps.add(s, "text.token_table", std::move(table));
    Tensor pos({cfg.context_slots(), d});
    rng.fill_gaussian(pos, 0.0, 0.02);
    pos_table_ = ps.add(s, "text.pos_table", std::move(pos));

    blocks_.clear();
    for (int64_t i = 0; i < cfg.text_blocks; ++i) {
        const std::string p = "text.block" + std::to_string(i);
        Block b;
        b.ln1 = make_layer_norm(ps, s, p + ".ln1", d);
        b.q = make_linear(ps, s, p + ".q", d, d, rng);
        b.k = make_linear(ps, s, p + ".k", d, d, rng);
        b.v = make_linear(ps, s, p + ".v", d, d, rng);
        b.o = make_linear(ps, s, p + ".o", d, d, rng);
        b.ln2 = make_layer_norm(ps, s, p + ".ln2", d);
        b.ff1 = make_linear(ps, s, p + ".ff1", d, 4 * d, rng);
        b.ff2 = make_linear(ps, s, p + ".ff2", 4 * d, d, rng);
        blocks_.push_back(std::move(b));
    }
    final_ln_ = make_layer_norm(ps, s, "text.final_ln", d);
}

std::vector<int64_t> TextPipeline::tokenize(const std::string& prompt) const {
    return vocab_.encode(prompt, cfg_.max_text_tokens);
}

Var TextPipeline::embed_tokens(const std::vector<int64_t>& ids) const {
    if (!token_table_) throw StateError("text pipeline not built");
    const int64_t L = static_cast<int64_t>(ids.size());
    if (L < 1) throw ArgumentError("token sequence must not be empty");
    if (L > cfg_.max_text_tokens) throw RangeError("token sequence exceeds max_text_tokens");
    for (int64_t id : ids)
        if (id < 0 || id >= vocab_.size()) throw RangeError("token id outside vocabulary");
    Var rows = embedding(token_table_, ids);
    const int64_t split = cfg_.style_token_count();
    Var pos = slice_rows(pos_table_, split, split + L);
    return add(rows, pos);
}

Var TextPipeline::run_encoder(const Var& seq) const {
    const int64_t S = seq->value.dim(0);
    const int64_t d = seq->value.dim(1);
    Var x = reshape(seq, {1, S, d});
    for (const Block& b : blocks_) {
        Var h = b.ln1(x);
        Var attn = multihead_attention(b.q(h), b.k(h), b.v(h), cfg_.attention_heads);
        x = add(x, b.o(attn));
        Var f = b.ln2(x);
        x = add(x, b.ff2(silu(b.ff1(f))));
    }
    return reshape(final_ln_(x), {S, d});
}

EncodedContext TextPipeline::encode_context(const std::optional<Var>& style,
                                            const Var& text) const {
    if (!token_table_) throw StateError("text pipeline not built");
    if (text->value.rank() != 2 || text->value.dim(1) != cfg_.context_dim)
        throw ShapeError("text embedding must be (L, context_dim)");
    const int64_t split = cfg_.style_token_count();
    Var seq = text;
    int64_t style_count = 0;
    if (style) {
        const Var& st = *style;
        if (st->value.rank() != 2 || st->value.dim(0) != split ||
            st->value.dim(1) != cfg_.context_dim)
            throw ShapeError("style embedding must be (9, context_dim)");
        Var st_pos = add(st, slice_rows(pos_table_, 0, split));
        seq = concat_rows(st_pos, text);
        style_count = split;
    }
    if (seq->value.dim(0) > cfg_.context_slots())
        throw RangeError("combined context exceeds encoder capacity");

    EncodedContext ctx;
    ctx.tokens = run_encoder(seq);
    ctx.style_count = style_count;
    ctx.style_mask.assign(static_cast<size_t>(seq->value.dim(0)), false);
    for (int64_t i = 0; i < style_count; ++i) ctx.style_mask[static_cast<size_t>(i)] = true;
    return ctx;
}

EncodedContext TextPipeline::encode_prompt(const std::string& prompt,
                                           const std::optional<Var>& style) const {
    return encode_context(style, embed_tokens(tokenize(prompt)));
}

}  // namespace artadapter
