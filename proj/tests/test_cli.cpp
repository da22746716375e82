#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "artadapter/checkpoint.hpp"
#include "artadapter/config.hpp"
#include "artadapter/hash.hpp"
#include "artadapter/image.hpp"
#include "artadapter/model.hpp"
#include "artadapter/rng.hpp"
#include "artadapter/tensor.hpp"
#include "artadapter/toycorpus.hpp"

#include "doctest.h"

#ifndef ARTADAPTER_CLI_PATH
#error "ARTADAPTER_CLI_PATH must point at the command-line binary"
#endif

using namespace artadapter;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / "artadapter_test_cli_io";
    fs::create_directories(dir);
    const fs::path out = dir / ("out" + std::to_string(counter));
    const fs::path err = dir / ("err" + std::to_string(counter));
    ++counter;

    const std::string cmd = std::string(ARTADAPTER_CLI_PATH) + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string first_line(const std::string& s) {
    const size_t nl = s.find('\n');
    return nl == std::string::npos ? s : s.substr(0, nl);
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

DiffusionConfig tiny_config() {
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

// Shared workspace: a checkpoint, a style image, and a tiny corpus.
struct CliFixtures {
    fs::path dir;
    std::string ckpt;
    std::string style;
    std::string manifest;
};

const CliFixtures& fixtures() {
    static const CliFixtures fx = [] {
        CliFixtures f;
        f.dir = fs::temp_directory_path() / "artadapter_test_cli_fx";
        fs::remove_all(f.dir);
        fs::create_directories(f.dir);

        Model m;
        m.build(tiny_config(), 29);
        m.text().set_vocab(Vocab::build({"one circle", "two squares"}));
        f.ckpt = (f.dir / "model.aack").string();
        save_checkpoint(m, 0, 29, f.ckpt);

        Rng rng(5);
        Tensor img({3, 16, 16});
        for (int64_t i = 0; i < img.numel(); ++i) img.data()[i] = rng.uniform();
        f.style = (f.dir / "style.png").string();
        write_png(f.style, tensor01_to_image(img));

        ToyCorpusSpec spec;
        spec.out_dir = (f.dir / "corpus").string();
        spec.train_count = 4;
        spec.holdout_count = 0;
        spec.image_size = 16;
        spec.seed = 3;
        f.manifest = generate_toy_corpus(spec).train_manifest;
        return f;
    }();
    return fx;
}

}  // namespace

TEST_CASE("help exits cleanly and lists the subcommands") {
    const CliResult r = run_cli("--help");
    CHECK(r.exit_code == 0);
    for (const char* sub : {"train", "finetune", "sample", "mix", "eval"})
        CHECK(contains(r.out, sub));
}

TEST_CASE("usage problems exit with code one and a parsable first line") {
    SUBCASE("no subcommand") {
        const CliResult r = run_cli("");
        CHECK(r.exit_code == 1);
        CHECK(contains(first_line(r.err), "error: UsageError:"));
    }
    SUBCASE("unknown flag") {
        const CliResult r = run_cli("sample --ckpt x --no-such-flag");
        CHECK(r.exit_code == 1);
        CHECK(contains(first_line(r.err), "error: UsageError:"));
        const bool help_shown = contains(r.err, "Usage") || contains(r.err, "OPTIONS");
        CHECK(help_shown);
    }
    SUBCASE("missing required option") {
        const CliResult r = run_cli("sample --prompt hello");
        CHECK(r.exit_code == 1);
        CHECK(contains(first_line(r.err), "error: UsageError:"));
    }
}

TEST_CASE("sampling defaults surface in the resolved-config line") {
    // The resolved line prints before the checkpoint loads, so a missing
    // checkpoint still reveals the defaults and maps to exit code two.
    const CliResult r = run_cli("sample --ckpt /nonexistent.aack --prompt hi");
    CHECK(r.exit_code == 2);
    CHECK(contains(first_line(r.err), "error: IoError:"));
    CHECK(contains(r.out, "steps=50"));
    CHECK(contains(r.out, "cfg=9"));
    CHECK(contains(r.out, "eta=0"));
    CHECK(contains(r.out, "alpha-scale=1"));
}

TEST_CASE("argument errors from the library map to exit code one") {
    const CliFixtures& fx = fixtures();
    const std::string sidecar = (fx.dir / "zero_steps.aasc").string();
    const CliResult r = run_cli("finetune --ckpt " + fx.ckpt + " --style " + fx.style +
                                " --steps 0 --out " + sidecar);
    CHECK(r.exit_code == 1);
    CHECK(contains(first_line(r.err), "error: ArgumentError:"));
}

TEST_CASE("corrupt checkpoints map to exit code two") {
    const CliFixtures& fx = fixtures();
    const std::string junk = (fx.dir / "junk.aack").string();
    std::ofstream(junk, std::ios::binary) << "not a checkpoint";
    const CliResult r = run_cli("sample --ckpt " + junk + " --prompt hi --steps 2");
    CHECK(r.exit_code == 2);
    CHECK(contains(first_line(r.err), "error: LoadError:"));
}

TEST_CASE("sampling from the command line writes a reproducible image") {
    const CliFixtures& fx = fixtures();
    const std::string out_a = (fx.dir / "a.png").string();
    const std::string out_b = (fx.dir / "b.png").string();
    const std::string args = " --ckpt " + fx.ckpt + " --prompt \"one circle\" --style " +
                             fx.style + " --steps 3 --seed 4 --out ";

    const CliResult ra = run_cli("sample" + args + out_a);
    REQUIRE(ra.exit_code == 0);
    CHECK(contains(ra.out, "image written: " + out_a));
    REQUIRE(fs::exists(out_a));

    const Tensor img = image_to_tensor01(read_image(out_a));
    CHECK(img.shape() == std::vector<int64_t>({3, 16, 16}));
    const auto text = read_png_text(out_a);
    CHECK(text.at("prompt") == "one circle");
    CHECK(text.at("steps") == "3");

    // A second process run lands on identical bytes.
    const CliResult rb = run_cli("sample" + args + out_b);
    REQUIRE(rb.exit_code == 0);
    CHECK(hash_file_bytes(out_a) == hash_file_bytes(out_b));
}

TEST_CASE("mixing from the command line needs all three level sources") {
    const CliFixtures& fx = fixtures();
    const CliResult missing = run_cli("mix --ckpt " + fx.ckpt + " --prompt hi --low " + fx.style);
    CHECK(missing.exit_code == 1);
    CHECK(contains(first_line(missing.err), "error: UsageError:"));

    const std::string out = (fx.dir / "mix.png").string();
    const CliResult r = run_cli("mix --ckpt " + fx.ckpt + " --prompt \"one circle\" --low " +
                                fx.style + " --mid " + fx.style + " --high " + fx.style +
                                " --steps 2 --out " + out);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out));
}

TEST_CASE("training honors flag-over-file precedence") {
    const CliFixtures& fx = fixtures();
    TrainConfig tc;
    tc.phase = "base";
    tc.batch_size = 2;
    tc.max_steps = 9;
    tc.seed = 7;
    tc.cfg_dropout_probability = 0.0;
    tc.model = tiny_config();
    const std::string cfg_path = (fx.dir / "train.json").string();
    std::ofstream(cfg_path) << train_config_to_json(tc);

    const std::string out_dir = (fx.dir / "run").string();
    const CliResult r = run_cli("train --config " + cfg_path + " --data " + fx.manifest +
                                " --out " + out_dir + " --steps 2");
    REQUIRE(r.exit_code == 0);
    CHECK(contains(r.out, "\"max_steps\": 2"));  // flag beat the file's 9
    CHECK(contains(r.out, "\"seed\": 7"));       // file value kept without a flag
    CHECK(contains(r.out, "final checkpoint:"));

    std::string ckpt_path;
    std::istringstream lines(r.out);
    std::string line;
    while (std::getline(lines, line))
        if (line.rfind("final checkpoint: ", 0) == 0) ckpt_path = line.substr(18);
    REQUIRE(!ckpt_path.empty());
    CHECK(load_checkpoint(ckpt_path).step == 2);
}

TEST_CASE("config typos fail before any training work") {
    const CliFixtures& fx = fixtures();
    const std::string cfg_path = (fx.dir / "typo.json").string();
    std::ofstream(cfg_path) << R"({"phase": "base", "max_stepz": 3})";
    const CliResult r = run_cli("train --config " + cfg_path + " --data " + fx.manifest +
                                " --out " + (fx.dir / "typo_run").string());
    CHECK(r.exit_code == 1);
    CHECK(contains(first_line(r.err), "error: ConfigError:"));
    CHECK(contains(r.err, "max_stepz"));
}

TEST_CASE("evaluation requires a readable testset") {
    const CliFixtures& fx = fixtures();
    const CliResult r = run_cli("eval --ckpt " + fx.ckpt + " --testset /nonexistent.json");
    CHECK(r.exit_code == 2);
    CHECK(contains(first_line(r.err), "error: IoError:"));
}
