#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "artadapter/model.hpp"
#include "artadapter/sampler.hpp"

namespace artadapter {

// Concatenated three-level channel statistics of an image, in level order
// (low, mid, high), after style preprocessing. This is the coordinate space
// for style similarity.
Tensor style_stat_vector(const StyleEncoder& enc, const Tensor& img01);

// 1 / (1 + L2 distance). Symmetric, in (0, 1], exactly 1 for equal vectors.
scalar_t stat_similarity(const Tensor& a, const Tensor& b);

// Per-dimension standardization over a batch of equal-length vectors.
// Dimensions with zero spread across the batch are floored so in-batch
// vectors map to zero there.
std::vector<Tensor> standardize_stat_batch(const std::vector<Tensor>& vectors);

struct TestsetSpec {
    std::vector<std::string> prompts;
    std::vector<std::string> styles;  // image paths, resolved when loaded
};

// JSON file {"prompts": [...], "styles": [...]}; style paths are resolved
// relative to the file's directory.
TestsetSpec load_testset(const std::string& path);

struct EvalRow {
    std::string prompt;
    std::string style_ref;
    uint64_t seed = 0;
    scalar_t style_score = 0.0;
    std::optional<scalar_t> text_score;
};

struct EvalReport {
    std::vector<EvalRow> rows;  // prompt-major order
    scalar_t mean_style = 0.0;
    std::optional<scalar_t> mean_text;
    int64_t count = 0;
    bool standardized = true;  // false on the single-row fallback
};

// Generates every (prompt, style) pair at a derived per-pair seed, scores
// style similarity in the batch-standardized stat space, and optionally asks
// an external embedder subprocess (`cmd image_path prompt` printing one
// float) for a text score. Embedder failures leave text_score absent and the
// run continues. Generated images land in out_dir as pair_{p}_{s}.png.
EvalReport evaluate_testset(Model& model, const TestsetSpec& spec, const SampleOptions& base_opts,
                            const std::string& embedder_cmd, const std::string& out_dir);

std::string eval_report_to_json(const EvalReport& report);
void write_eval_report(const std::string& path, const EvalReport& report);

}  // namespace artadapter
