#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artadapter/schedule.hpp"

namespace artadapter {

// Model architecture and diffusion-process settings. Serialized inside
// checkpoints; a hash of the canonical serialization ties sidecars and
// resumed runs to the architecture they were produced with.
struct DiffusionConfig {
    int64_t image_size = 64;
    int64_t channels = 3;
    int64_t T = 1000;
    scalar_t beta_start = 1e-4;
    scalar_t beta_end = 2e-2;
    std::vector<int64_t> unet_widths{64, 128, 256, 256};
    int64_t context_dim = 256;
    std::vector<int64_t> cross_attention_resolutions{16, 8};
    int64_t attention_heads = 4;
    int64_t lora_rank = 4;
    int64_t max_text_tokens = 68;
    int64_t text_blocks = 4;
    int64_t style_tokens_per_level = 3;
    std::string feature_arch = "desk";  // "desk" or "vgg16"
    std::string feature_weights_path;   // required for "vgg16"
    uint64_t feature_seed = 2024;

    int64_t style_token_count() const { return 3 * style_tokens_per_level; }
    int64_t context_slots() const { return style_token_count() + max_text_tokens; }
    int64_t stages() const { return static_cast<int64_t>(unet_widths.size()); }
    int64_t deepest_resolution() const;

    NoiseSchedule schedule() const { return NoiseSchedule::linear(T, beta_start, beta_end); }
    void validate() const;
};

struct AugmentPolicy {
    scalar_t inversion_probability = 0.5;
    scalar_t brightness = 0.4;
    scalar_t contrast = 0.4;
    scalar_t saturation = 0.4;
    scalar_t hue = 0.1;

    void validate() const;
};

// Training-run settings for both phases. "base" pretrains the backbone and
// text encoder on captioned images alone; "adapter" freezes them and trains
// the style pathway.
struct TrainConfig {
    std::string phase = "adapter";  // "base" or "adapter"
    int64_t batch_size = 16;
    scalar_t lr_base = 1e-4;         // base-phase backbone/text-encoder rate
    scalar_t lr_encoder_aca = 1e-4;  // style MLPs and ACA
    scalar_t lr_explicit = 1e-7;     // delta factors and alpha
    scalar_t weight_decay = 0.01;
    scalar_t adam_beta1 = 0.9;
    scalar_t adam_beta2 = 0.999;
    int64_t max_steps = 2000;
    uint64_t seed = 1;
    scalar_t cfg_dropout_probability = 0.1;
    int64_t checkpoint_every = 1000;
    std::string init_checkpoint;  // adapter phase starts from a base checkpoint
    AugmentPolicy augment;
    DiffusionConfig model;

    void validate() const;
};

// JSON round trips. Loading rejects unknown keys so config typos fail loudly.
std::string diffusion_config_to_json(const DiffusionConfig& c);
DiffusionConfig diffusion_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::string& path);

uint64_t config_hash(const DiffusionConfig& c);

}  // namespace artadapter
