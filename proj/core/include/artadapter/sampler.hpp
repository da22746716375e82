#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "artadapter/checkpoint.hpp"
#include "artadapter/model.hpp"

namespace artadapter {

struct SampleOptions {
    int64_t steps = 50;
    scalar_t cfg_scale = 9.0;
    uint64_t seed = 0;
    scalar_t alpha_scale = 1.0;
    scalar_t eta = 0.0;  // 0 = deterministic DDIM

    void validate() const;
};

// eps_uncond + scale * (eps_cond - eps_uncond). The scale 0 and 1 endpoints
// return their operand bit-exactly.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, scalar_t scale);

// Deterministic (eta = 0) DDIM descent from pure noise. Each step runs the
// conditional and unconditional branches and combines them with
// cfg_combine. Returns a (3, H, W) image in [0, 1]. Non-finite intermediates
// raise NumericError naming the step.
Tensor ddim_sample(const Model& model, const EncodedContext& cond, const EncodedContext& uncond,
                   const SampleOptions& opts);

struct GenerateResult {
    Tensor image01;
    std::map<std::string, std::string> metadata;  // embedded in the output PNG
};

// Full generation: style embedding from 0, 1 or many references (averaged),
// optional finetune sidecar (applied for the call, then removed), runtime
// alpha scaling, then DDIM sampling. The model's stored weights are
// bit-identical before and after the call.
GenerateResult generate(Model& model, const std::string& prompt,
                        const std::vector<Tensor>& style_images, const SampleOptions& opts,
                        const std::string& sidecar_path = "");

// Style-mixing generation: level blocks from three references. A sidecar is
// applied only when all three sources are the same image and that image is
// among the sidecar's finetuning references, unless force_residual is set.
GenerateResult generate_mixed(Model& model, const std::string& prompt, const Tensor& low_img,
                              const Tensor& mid_img, const Tensor& high_img,
                              const SampleOptions& opts, const std::string& sidecar_path = "",
                              bool force_residual = false);

void write_generated_png(const std::string& path, const GenerateResult& result);

}  // namespace artadapter
