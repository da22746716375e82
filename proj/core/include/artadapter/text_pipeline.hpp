#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "artadapter/config.hpp"
#include "artadapter/nn.hpp"

namespace artadapter {

// Word-level vocabulary with byte fallback. Ids 0/1 are the begin/end
// markers, 2..257 cover raw bytes, words start at 258. Words are ranked by
// descending caption frequency (ties broken alphabetically) and capped so the
// table never exceeds kCap ids.
class Vocab {
  public:
    static constexpr int64_t kBos = 0;
    static constexpr int64_t kEos = 1;
    static constexpr int64_t kByteBase = 2;
    static constexpr int64_t kWordBase = 258;
    static constexpr int64_t kCap = 2048;

    Vocab() = default;
    static Vocab build(const std::vector<std::string>& captions);
    static Vocab from_words(std::vector<std::string> words);

    const std::vector<std::string>& words() const { return words_; }
    int64_t size() const { return kWordBase + static_cast<int64_t>(words_.size()); }

    // BOS + word/byte ids + EOS, truncated to max_tokens with EOS kept last.
    std::vector<int64_t> encode(const std::string& prompt, int64_t max_tokens) const;

  private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int64_t> ids_;
};

// Lowercases and splits on whitespace.
std::vector<std::string> split_words(const std::string& text);

// A contextualized conditioning sequence: 9 style slots (when present)
// followed by the text tokens, already passed through the text encoder.
struct EncodedContext {
    Var tokens;  // (style_count + L, d)
    int64_t style_count = 0;
    std::vector<bool> style_mask;

    bool has_style() const { return style_count > 0; }
    int64_t length() const { return tokens ? tokens->value.dim(0) : 0; }
    Var style_part() const;  // rows [0, 9); StateError when absent
    Var text_part() const;   // rows [style_count, length)
};

// Tokenizer, token/position tables, and the small non-causal transformer that
// contextualizes [style ; text] sequences. Parameters live in the
// TextEncoder section and freeze after base pretraining.
class TextPipeline {
  public:
    void build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng);

    void set_vocab(Vocab v) { vocab_ = std::move(v); }
    const Vocab& vocab() const { return vocab_; }

    std::vector<int64_t> tokenize(const std::string& prompt) const;

    // Token-table rows plus learned positional offsets. Text positions use
    // table rows 9 onward; the first 9 rows are reserved for style slots.
    Var embed_tokens(const std::vector<int64_t>& ids) const;

    // Runs [style ; text] (or text alone) through the encoder and splits the
    // result at position 9. `style` must be a (9, d) token matrix.
    EncodedContext encode_context(const std::optional<Var>& style, const Var& text) const;

    EncodedContext encode_prompt(const std::string& prompt,
                                 const std::optional<Var>& style = std::nullopt) const;

  private:
    struct Block {
        LayerNormLayer ln1, ln2;
        LinearLayer q, k, v, o, ff1, ff2;
    };

    Var run_encoder(const Var& seq) const;

    DiffusionConfig cfg_;
    Vocab vocab_;
    Var token_table_;  // (vocab cap, d)
    Var pos_table_;    // (context slots, d)
    std::vector<Block> blocks_;
    LayerNormLayer final_ln_;
};

}  // namespace artadapter
