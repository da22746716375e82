#include "artadapter/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "artadapter/hash.hpp"

namespace artadapter {

using json = nlohmann::ordered_json;

int64_t DiffusionConfig::deepest_resolution() const {
    int64_t r = image_size;
    for (int64_t s = 1; s < stages(); ++s) r /= 2;
    return r;
}

void DiffusionConfig::validate() const {
    if (image_size < 8 || image_size % 8 != 0)
        throw ConfigError("image_size must be a positive multiple of 8");
    if (channels != 3) throw ConfigError("only 3-channel images are supported");
    if (T < 1) throw ConfigError("T must be at least 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_start <= beta_end))
        throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1");
    schedule().validate();
    if (unet_widths.size() != 4) throw ConfigError("unet_widths must list 4 stage widths");
    for (int64_t w : unet_widths)
        if (w < 1) throw ConfigError("unet_widths entries must be positive");
    if (context_dim < 1) throw ConfigError("context_dim must be positive");
    if (attention_heads < 1 || context_dim % attention_heads != 0)
        throw ConfigError("attention_heads must divide context_dim");
    for (int64_t s = 1; s < stages(); ++s) {
        if (unet_widths[s] % attention_heads != 0)
            throw ConfigError("attention stage widths must be divisible by attention_heads");
    }
    if (cross_attention_resolutions.empty())
        throw ConfigError("cross_attention_resolutions must not be empty");
    for (int64_t r : cross_attention_resolutions) {
        if (r < 1 || image_size % r != 0)
            throw ConfigError("cross_attention_resolutions must divide image_size");
    }
    if (lora_rank < 1) throw ConfigError("lora_rank must be positive");
    if (max_text_tokens < 2) throw ConfigError("max_text_tokens must fit BOS and EOS");
    if (text_blocks < 1) throw ConfigError("text_blocks must be positive");
    if (style_tokens_per_level != 3)
        throw ConfigError("style_tokens_per_level must be 3");
    if (feature_arch != "desk" && feature_arch != "vgg16")
        throw ConfigError("feature_arch must be 'desk' or 'vgg16'");
    if (feature_arch == "vgg16" && feature_weights_path.empty())
        throw ConfigError("feature_arch 'vgg16' requires feature_weights_path");
}

void AugmentPolicy::validate() const {
    if (inversion_probability < 0.0 || inversion_probability > 1.0)
        throw ConfigError("inversion_probability must lie in [0, 1]");
    if (brightness < 0.0 || contrast < 0.0 || saturation < 0.0 || hue < 0.0)
        throw ConfigError("jitter magnitudes must be non-negative");
    if (hue > 0.5) throw ConfigError("hue jitter must not exceed 0.5");
}

void TrainConfig::validate() const {
    if (phase != "base" && phase != "adapter")
        throw ConfigError("phase must be 'base' or 'adapter'");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(lr_base > 0.0) || !(lr_encoder_aca > 0.0) || !(lr_explicit > 0.0))
        throw ConfigError("learning rates must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (max_steps < 1) throw ConfigError("max_steps must be positive");
    if (cfg_dropout_probability < 0.0 || cfg_dropout_probability > 1.0)
        throw ConfigError("cfg_dropout_probability must lie in [0, 1]");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be positive");
    augment.validate();
    model.validate();
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key()))
            throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

json diffusion_to_json(const DiffusionConfig& c) {
    json j;
    j["image_size"] = c.image_size;
    j["channels"] = c.channels;
    j["T"] = c.T;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["unet_widths"] = c.unet_widths;
    j["context_dim"] = c.context_dim;
    j["cross_attention_resolutions"] = c.cross_attention_resolutions;
    j["attention_heads"] = c.attention_heads;
    j["lora_rank"] = c.lora_rank;
    j["max_text_tokens"] = c.max_text_tokens;
    j["text_blocks"] = c.text_blocks;
    j["style_tokens_per_level"] = c.style_tokens_per_level;
    j["feature_arch"] = c.feature_arch;
    j["feature_weights_path"] = c.feature_weights_path;
    j["feature_seed"] = c.feature_seed;
    return j;
}

DiffusionConfig diffusion_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"image_size", "channels", "T", "beta_start", "beta_end", "unet_widths",
                         "context_dim", "cross_attention_resolutions", "attention_heads",
                         "lora_rank", "max_text_tokens", "text_blocks", "style_tokens_per_level",
                         "feature_arch", "feature_weights_path", "feature_seed"},
                        "model config");
    DiffusionConfig c;
    read_field(j, "image_size", c.image_size);
    read_field(j, "channels", c.channels);
    read_field(j, "T", c.T);
    read_field(j, "beta_start", c.beta_start);
    read_field(j, "beta_end", c.beta_end);
    read_field(j, "unet_widths", c.unet_widths);
    read_field(j, "context_dim", c.context_dim);
    read_field(j, "cross_attention_resolutions", c.cross_attention_resolutions);
    read_field(j, "attention_heads", c.attention_heads);
    read_field(j, "lora_rank", c.lora_rank);
    read_field(j, "max_text_tokens", c.max_text_tokens);
    read_field(j, "text_blocks", c.text_blocks);
    read_field(j, "style_tokens_per_level", c.style_tokens_per_level);
    read_field(j, "feature_arch", c.feature_arch);
    read_field(j, "feature_weights_path", c.feature_weights_path);
    read_field(j, "feature_seed", c.feature_seed);
    return c;
}

json augment_to_json(const AugmentPolicy& a) {
    json j;
    j["inversion_probability"] = a.inversion_probability;
    j["brightness"] = a.brightness;
    j["contrast"] = a.contrast;
    j["saturation"] = a.saturation;
    j["hue"] = a.hue;
    return j;
}

AugmentPolicy augment_from_json(const json& j) {
    reject_unknown_keys(
        j, {"inversion_probability", "brightness", "contrast", "saturation", "hue"},
        "augment policy");
    AugmentPolicy a;
    read_field(j, "inversion_probability", a.inversion_probability);
    read_field(j, "brightness", a.brightness);
    read_field(j, "contrast", a.contrast);
    read_field(j, "saturation", a.saturation);
    read_field(j, "hue", a.hue);
    return a;
}

json train_to_json(const TrainConfig& c) {
    json j;
    j["phase"] = c.phase;
    j["batch_size"] = c.batch_size;
    j["lr_base"] = c.lr_base;
    j["lr_encoder_aca"] = c.lr_encoder_aca;
    j["lr_explicit"] = c.lr_explicit;
    j["weight_decay"] = c.weight_decay;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["max_steps"] = c.max_steps;
    j["seed"] = c.seed;
    j["cfg_dropout_probability"] = c.cfg_dropout_probability;
    j["checkpoint_every"] = c.checkpoint_every;
    j["init_checkpoint"] = c.init_checkpoint;
    j["augment"] = augment_to_json(c.augment);
    j["model"] = diffusion_to_json(c.model);
    return j;
}

TrainConfig train_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"phase", "batch_size", "lr_base", "lr_encoder_aca", "lr_explicit",
                         "weight_decay", "adam_beta1", "adam_beta2", "max_steps", "seed",
                         "cfg_dropout_probability", "checkpoint_every", "init_checkpoint",
                         "augment", "model"},
                        "train config");
    TrainConfig c;
    read_field(j, "phase", c.phase);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "lr_base", c.lr_base);
    read_field(j, "lr_encoder_aca", c.lr_encoder_aca);
    read_field(j, "lr_explicit", c.lr_explicit);
    read_field(j, "weight_decay", c.weight_decay);
    read_field(j, "adam_beta1", c.adam_beta1);
    read_field(j, "adam_beta2", c.adam_beta2);
    read_field(j, "max_steps", c.max_steps);
    read_field(j, "seed", c.seed);
    read_field(j, "cfg_dropout_probability", c.cfg_dropout_probability);
    read_field(j, "checkpoint_every", c.checkpoint_every);
    read_field(j, "init_checkpoint", c.init_checkpoint);
    if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
    if (j.contains("model")) c.model = diffusion_from_json(j.at("model"));
    return c;
}

json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace

std::string diffusion_config_to_json(const DiffusionConfig& c) {
    return diffusion_to_json(c).dump(2);
}

DiffusionConfig diffusion_config_from_json(const std::string& text) {
    return diffusion_from_json(parse_text(text));
}

std::string train_config_to_json(const TrainConfig& c) { return train_to_json(c).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
    return train_from_json(parse_text(text));
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return train_config_from_json(ss.str());
}

uint64_t config_hash(const DiffusionConfig& c) {
    // Compact canonical dump: fixed key order, no whitespace variance.
    Fnv1a64 h;
    h.update_string(diffusion_to_json(c).dump());
    return h.digest();
}

}  // namespace artadapter
