#include <cstdio>
#include <fstream>

#include "artadapter/checkpoint.hpp"
#include "artadapter/rng.hpp"
#include "doctest.h"

using namespace artadapter;

namespace {

DiffusionConfig tiny_cfg() {
    DiffusionConfig cfg;
    cfg.image_size = 16;
    cfg.T = 20;
    cfg.unet_widths = {8, 8, 8, 8};
    cfg.context_dim = 16;
    cfg.cross_attention_resolutions = {4, 2};
    cfg.attention_heads = 2;
    cfg.max_text_tokens = 12;
    cfg.text_blocks = 1;
    return cfg;
}

Model make_model(uint64_t seed = 5) {
    Model m;
    m.build(tiny_cfg(), seed);
    m.text().set_vocab(Vocab::build({"one circle", "two squares"}));
    // Perturb a few tensors so the payload is not all init values.
    Rng rng(88);
    rng.fill_gaussian(m.params().get("unet.conv_in.weight")->value, 0.0, 0.1);
    rng.fill_gaussian(m.params().get("style.low.out.weight")->value, 0.0, 0.1);
    return m;
}

void corrupt_byte(const std::string& path, long offset_from_end, uint8_t flip) {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fseek(f, offset_from_end, SEEK_END);
    const int ch = std::fgetc(f);
    std::fseek(f, offset_from_end, SEEK_END);
    std::fputc(ch ^ flip, f);
    std::fclose(f);
}

}  // namespace

TEST_CASE("checkpoint round trip restores everything bit-exactly") {
    Model m = make_model();
    const std::string path = "ckpt_tmp.aack";
    save_checkpoint(m, 137, 5, path);

    Checkpoint back = load_checkpoint(path);
    CHECK(back.step == 137);
    CHECK(back.seed == 5);
    CHECK(back.model.built());
    CHECK(back.model.config().image_size == 16);
    CHECK(back.model.text().vocab().words() == m.text().vocab().words());

    const auto& ea = m.params().entries();
    const auto& eb = back.model.params().entries();
    REQUIRE(ea.size() == eb.size());
    for (size_t i = 0; i < ea.size(); ++i) {
        CHECK(ea[i].name == eb[i].name);
        CHECK(ea[i].var->value.bitwise_equal(eb[i].var->value));
    }
    for (Section s : all_sections()) CHECK(m.section_hash(s) == back.model.section_hash(s));
    std::remove(path.c_str());
}

TEST_CASE("checkpoints carry finetune residuals when present") {
    Model m = make_model();
    m.allocate_finetune_residuals();
    Rng rng(89);
    for (AdaptedProjection* p : m.adapted_projections())
        rng.fill_gaussian(p->delta_h->value, 0.0, 0.3);

    const std::string path = "ckpt_res_tmp.aack";
    save_checkpoint(m, 1, 5, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.model.has_finetune_residuals());
    CHECK(back.model.section_hash(Section::FinetuneResidual) ==
          m.section_hash(Section::FinetuneResidual));
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects corruption") {
    Model m = make_model();
    const std::string path = "ckpt_bad_tmp.aack";

    // Payload corruption: trailer check.
    save_checkpoint(m, 1, 5, path);
    corrupt_byte(path, -100, 0x01);
    CHECK_THROWS_AS(load_checkpoint(path), LoadError);

    // Magic corruption.
    save_checkpoint(m, 1, 5, path);
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), LoadError);

    // Truncation.
    save_checkpoint(m, 1, 5, path);
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 31));
    }
    CHECK_THROWS_AS(load_checkpoint(path), LoadError);

    // Trailing garbage after the trailer.
    save_checkpoint(m, 1, 5, path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << "extra";
    }
    CHECK_THROWS_AS(load_checkpoint(path), LoadError);

    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint("missing.aack"), IoError);
}

TEST_CASE("sidecar round trip and provenance") {
    Model m = make_model();
    m.allocate_finetune_residuals();
    Rng rng(90);
    std::vector<Tensor> residuals;
    for (AdaptedProjection* p : m.adapted_projections()) {
        rng.fill_gaussian(p->delta_h->value, 0.0, 0.2);
        residuals.push_back(p->delta_h->value);
    }

    SidecarMeta meta;
    meta.config_hash = config_hash(m.config());
    meta.style_hashes = {111, 222};
    meta.steps = 25;
    meta.lr = 0.02;
    const std::string path = "sidecar_tmp.aasc";
    save_finetune_sidecar(m, meta, path);

    // Header-only read.
    SidecarMeta head = read_sidecar_meta(path);
    CHECK(head.config_hash == meta.config_hash);
    CHECK(head.style_hashes == meta.style_hashes);
    CHECK(head.steps == 25);
    CHECK(head.lr == doctest::Approx(0.02));

    // Apply onto a fresh model of the same architecture.
    Model fresh = make_model();
    CHECK(!fresh.has_finetune_residuals());
    SidecarMeta applied = apply_finetune_sidecar(fresh, path);
    CHECK(applied.steps == 25);
    CHECK(fresh.has_finetune_residuals());
    std::vector<AdaptedProjection*> projs = fresh.adapted_projections();
    for (size_t i = 0; i < projs.size(); ++i)
        CHECK(projs[i]->delta_h->value.bitwise_equal(residuals[i]));

    // A different architecture refuses the sidecar.
    DiffusionConfig other_cfg = tiny_cfg();
    other_cfg.lora_rank = 2;
    Model other;
    other.build(other_cfg, 5);
    CHECK_THROWS_AS(apply_finetune_sidecar(other, path), LoadError);

    // Corruption is caught.
    corrupt_byte(path, -20, 0x10);
    CHECK_THROWS_AS(apply_finetune_sidecar(fresh, path), LoadError);
    std::remove(path.c_str());

    // Saving without residuals is an error.
    Model bare = make_model();
    CHECK_THROWS_AS(save_finetune_sidecar(bare, meta, "never.aasc"), StateError);
}

TEST_CASE("save requires a built model") {
    Model unbuilt;
    CHECK_THROWS_AS(save_checkpoint(unbuilt, 0, 0, "x.aack"), StateError);
}
