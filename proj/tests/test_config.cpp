#include <fstream>

#include "artadapter/config.hpp"
#include "doctest.h"

using namespace artadapter;

TEST_CASE("diffusion config defaults and helpers") {
    DiffusionConfig c;
    CHECK(c.image_size == 64);
    CHECK(c.T == 1000);
    CHECK(c.unet_widths == std::vector<int64_t>{64, 128, 256, 256});
    CHECK(c.context_dim == 256);
    CHECK(c.lora_rank == 4);
    CHECK(c.style_token_count() == 9);
    CHECK(c.context_slots() == 77);
    CHECK(c.deepest_resolution() == 8);
    CHECK_NOTHROW(c.validate());

    NoiseSchedule s = c.schedule();
    CHECK(s.T == 1000);
    CHECK(s.alpha_bar_at(1000) < 0.01);
}

TEST_CASE("diffusion config JSON round trip") {
    DiffusionConfig c;
    c.image_size = 32;
    c.unet_widths = {16, 32, 48, 48};
    c.cross_attention_resolutions = {8, 4};
    c.context_dim = 48;
    c.feature_seed = 99;

    DiffusionConfig back = diffusion_config_from_json(diffusion_config_to_json(c));
    CHECK(back.image_size == 32);
    CHECK(back.unet_widths == c.unet_widths);
    CHECK(back.cross_attention_resolutions == c.cross_attention_resolutions);
    CHECK(back.feature_seed == 99);
    CHECK(config_hash(back) == config_hash(c));

    // The hash distinguishes architectures.
    back.lora_rank = 8;
    CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("config validation rejects bad layouts") {
    DiffusionConfig c;
    c.image_size = 60;  // not a multiple of 8
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DiffusionConfig{};
    c.channels = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DiffusionConfig{};
    c.unet_widths = {8, 16};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DiffusionConfig{};
    c.attention_heads = 7;  // does not divide context_dim 256
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DiffusionConfig{};
    c.cross_attention_resolutions = {13};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = DiffusionConfig{};
    c.feature_arch = "vgg16";  // missing weights path
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.feature_weights_path = "weights.aafw";
    CHECK_NOTHROW(c.validate());
    c = DiffusionConfig{};
    c.feature_arch = "resnet";
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("unknown config keys fail loudly") {
    CHECK_THROWS_WITH_AS(diffusion_config_from_json(R"({"imge_size": 64})"),
                         doctest::Contains("unknown key 'imge_size'"), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(R"({"phse": "base"})"), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(R"({"model": {"unet_width": [1,2,3,4]}})"),
                    ConfigError);
    CHECK_THROWS_AS(train_config_from_json(R"({"augment": {"hue_shift": 0.1}})"), ConfigError);
    CHECK_THROWS_AS(diffusion_config_from_json("not json"), ConfigError);
}

TEST_CASE("train config round trip and partial files") {
    TrainConfig tc;
    CHECK(tc.phase == "adapter");
    CHECK(tc.batch_size == 16);
    CHECK(tc.lr_explicit == 1e-7);
    CHECK(tc.weight_decay == 0.01);
    CHECK(tc.max_steps == 2000);
    CHECK(tc.cfg_dropout_probability == 0.1);
    CHECK(tc.augment.inversion_probability == 0.5);
    CHECK(tc.augment.hue == 0.1);
    CHECK_NOTHROW(tc.validate());

    // Partial JSON keeps defaults for everything unspecified.
    TrainConfig partial = train_config_from_json(R"({"phase": "base", "max_steps": 7})");
    CHECK(partial.phase == "base");
    CHECK(partial.max_steps == 7);
    CHECK(partial.batch_size == 16);
    CHECK(partial.model.image_size == 64);

    TrainConfig back = train_config_from_json(train_config_to_json(partial));
    CHECK(back.phase == "base");
    CHECK(back.max_steps == 7);

    TrainConfig bad;
    bad.phase = "warmup";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.cfg_dropout_probability = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.augment.hue = 0.6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("load_train_config reads files") {
    const std::string path = "config_test_tmp.json";
    {
        std::ofstream out(path);
        out << R"({"phase": "base", "seed": 42, "model": {"image_size": 16,
                   "cross_attention_resolutions": [4, 2],
                   "unet_widths": [8, 8, 8, 8], "context_dim": 16,
                   "attention_heads": 2}})";
    }
    TrainConfig tc = load_train_config(path);
    CHECK(tc.seed == 42);
    CHECK(tc.model.image_size == 16);
    CHECK(tc.model.context_dim == 16);
    CHECK_NOTHROW(tc.validate());
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_train_config("does_not_exist.json"), IoError);
}
