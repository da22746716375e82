// Command-line front end: train / finetune / sample / mix / eval over one
// shared checkpoint format. Exit codes: 0 success, 1 usage or configuration
// error, 2 runtime failure. The first stderr line of any failure is
// machine-parsable: "error: <Category>: <message>".

#include <cstdint>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "artadapter/checkpoint.hpp"
#include "artadapter/eval.hpp"
#include "artadapter/image.hpp"
#include "artadapter/sampler.hpp"
#include "artadapter/trainer.hpp"

namespace aa = artadapter;

namespace {

std::string one_line(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c == '\n' || c == '\r') c = ' ';
    return out;
}

void print_error(const std::string& category, const std::string& message) {
    std::cerr << "error: " << category << ": " << one_line(message) << "\n";
}

// Comma-separated and repeated flags both work for reference lists.
std::vector<std::string> split_paths(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const std::string& item : raw) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ','))
            if (!part.empty()) out.push_back(part);
    }
    return out;
}

std::vector<aa::Tensor> load_images(const std::vector<std::string>& paths) {
    std::vector<aa::Tensor> out;
    out.reserve(paths.size());
    for (const std::string& p : paths) out.push_back(aa::image_to_tensor01(aa::read_image(p)));
    return out;
}

void print_resolved(const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
    std::cout << "resolved config: command=" << command;
    for (const auto& [k, v] : kv) std::cout << " " << k << "=" << v;
    std::cout << "\n";
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

struct TrainArgs {
    std::string config_path;
    std::string data;
    std::string out = "runs";
    // Optional flag overrides (flag > file > default).
    CLI::Option* phase_opt = nullptr;
    CLI::Option* steps_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* init_opt = nullptr;
    std::string phase;
    int64_t steps = 0;
    uint64_t seed = 0;
    std::string init_checkpoint;
};

int run_train(const TrainArgs& a) {
    aa::TrainConfig tc = aa::load_train_config(a.config_path);
    if (a.phase_opt->count() > 0) tc.phase = a.phase;
    if (a.steps_opt->count() > 0) tc.max_steps = a.steps;
    if (a.seed_opt->count() > 0) tc.seed = a.seed;
    if (a.init_opt->count() > 0) tc.init_checkpoint = a.init_checkpoint;
    tc.validate();

    std::cout << "resolved config: command=train data=" << a.data << " out=" << a.out << "\n"
              << aa::train_config_to_json(tc) << "\n";
    aa::TrainResult r = aa::train(tc, a.data, a.out);
    std::cout << "final checkpoint: " << r.checkpoint_path << "\n"
              << "loss csv: " << r.loss_csv_path << "\n";
    if (!r.losses.empty())
        std::cout << "last loss: " << r.losses.back() << " over " << r.losses.size()
                  << " steps\n";
    return 0;
}

struct FinetuneArgs {
    std::string ckpt;
    std::vector<std::string> style_raw;
    int64_t steps = 25;
    double lr = 0.02;
    uint64_t seed = 1;
    std::string out;
};

int run_finetune(const FinetuneArgs& a) {
    const std::vector<std::string> paths = split_paths(a.style_raw);
    print_resolved("finetune", {{"ckpt", a.ckpt},
                                {"style", std::to_string(paths.size()) + " refs"},
                                {"steps", std::to_string(a.steps)},
                                {"lr", fmt(a.lr)},
                                {"seed", std::to_string(a.seed)},
                                {"out", a.out}});
    aa::Checkpoint ck = aa::load_checkpoint(a.ckpt);
    const std::vector<aa::Tensor> refs = load_images(paths);
    aa::fast_finetune(ck.model, refs, a.out, a.steps, a.lr, a.seed);
    std::cout << "sidecar written: " << a.out << "\n";
    return 0;
}

struct SampleArgs {
    std::string ckpt;
    std::string prompt;
    std::vector<std::string> style_raw;
    std::string residual;
    double alpha_scale = 1.0;
    int64_t steps = 50;
    double cfg = 9.0;
    double eta = 0.0;
    uint64_t seed = 0;
    std::string out = "out.png";
};

aa::SampleOptions to_options(const SampleArgs& a) {
    aa::SampleOptions opts;
    opts.steps = a.steps;
    opts.cfg_scale = a.cfg;
    opts.seed = a.seed;
    opts.alpha_scale = a.alpha_scale;
    opts.eta = a.eta;
    return opts;
}

int run_sample(const SampleArgs& a) {
    const std::vector<std::string> paths = split_paths(a.style_raw);
    print_resolved("sample", {{"ckpt", a.ckpt},
                              {"prompt", "\"" + a.prompt + "\""},
                              {"style", std::to_string(paths.size()) + " refs"},
                              {"residual", a.residual.empty() ? "none" : a.residual},
                              {"alpha-scale", fmt(a.alpha_scale)},
                              {"steps", std::to_string(a.steps)},
                              {"cfg", fmt(a.cfg)},
                              {"eta", fmt(a.eta)},
                              {"seed", std::to_string(a.seed)},
                              {"out", a.out}});
    aa::Checkpoint ck = aa::load_checkpoint(a.ckpt);
    const std::vector<aa::Tensor> refs = load_images(paths);
    aa::GenerateResult r = aa::generate(ck.model, a.prompt, refs, to_options(a), a.residual);
    aa::write_generated_png(a.out, r);
    std::cout << "image written: " << a.out << "\n";
    return 0;
}

struct MixArgs {
    SampleArgs base;
    std::string low, mid, high;
    bool force_residual = false;
};

int run_mix(const MixArgs& m) {
    const SampleArgs& a = m.base;
    print_resolved("mix", {{"ckpt", a.ckpt},
                           {"prompt", "\"" + a.prompt + "\""},
                           {"low", m.low},
                           {"mid", m.mid},
                           {"high", m.high},
                           {"residual", a.residual.empty() ? "none" : a.residual},
                           {"force-residual", m.force_residual ? "true" : "false"},
                           {"alpha-scale", fmt(a.alpha_scale)},
                           {"steps", std::to_string(a.steps)},
                           {"cfg", fmt(a.cfg)},
                           {"seed", std::to_string(a.seed)},
                           {"out", a.out}});
    aa::Checkpoint ck = aa::load_checkpoint(a.ckpt);
    const aa::Tensor low = aa::image_to_tensor01(aa::read_image(m.low));
    const aa::Tensor mid = aa::image_to_tensor01(aa::read_image(m.mid));
    const aa::Tensor high = aa::image_to_tensor01(aa::read_image(m.high));
    aa::GenerateResult r = aa::generate_mixed(ck.model, a.prompt, low, mid, high, to_options(a),
                                              a.residual, m.force_residual);
    aa::write_generated_png(a.out, r);
    std::cout << "image written: " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string testset;
    std::string embedder_cmd;
    std::string out = "eval_report.json";
    int64_t steps = 50;
    double cfg = 9.0;
    uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
    print_resolved("eval", {{"ckpt", a.ckpt},
                            {"testset", a.testset},
                            {"embedder-cmd", a.embedder_cmd.empty() ? "none" : a.embedder_cmd},
                            {"steps", std::to_string(a.steps)},
                            {"cfg", fmt(a.cfg)},
                            {"seed", std::to_string(a.seed)},
                            {"out", a.out}});
    aa::Checkpoint ck = aa::load_checkpoint(a.ckpt);
    const aa::TestsetSpec spec = aa::load_testset(a.testset);
    aa::SampleOptions opts;
    opts.steps = a.steps;
    opts.cfg_scale = a.cfg;
    opts.seed = a.seed;
    const aa::EvalReport report =
        aa::evaluate_testset(ck.model, spec, opts, a.embedder_cmd, a.out + ".images");
    aa::write_eval_report(a.out, report);
    std::cout << "report written: " << a.out << " (rows=" << report.count
              << ", mean_style=" << report.mean_style << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"artadapter: reference-driven style adaptation for a toy diffusion model"};
    app.require_subcommand(1);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Run a training phase from a config file");
    train->add_option("--config", train_args.config_path, "Training config JSON")->required();
    train->add_option("--data", train_args.data, "Dataset manifest (TSV: path<TAB>caption)")
        ->required();
    train->add_option("--out", train_args.out, "Output directory");
    train_args.phase_opt =
        train->add_option("--phase", train_args.phase, "Override phase (base|adapter)");
    train_args.steps_opt = train->add_option("--steps", train_args.steps, "Override max steps");
    train_args.seed_opt = train->add_option("--seed", train_args.seed, "Override seed");
    train_args.init_opt =
        train->add_option("--init-ckpt", train_args.init_checkpoint, "Override init checkpoint");

    FinetuneArgs ft_args;
    CLI::App* finetune = app.add_subcommand("finetune", "Fit per-reference residuals (sidecar)");
    finetune->add_option("--ckpt", ft_args.ckpt, "Model checkpoint")->required();
    finetune
        ->add_option("--style", ft_args.style_raw, "Style reference image(s), comma-separable")
        ->required();
    finetune->add_option("--steps", ft_args.steps, "Finetune steps");
    finetune->add_option("--lr", ft_args.lr, "Finetune learning rate");
    finetune->add_option("--seed", ft_args.seed, "Random seed");
    finetune->add_option("--out", ft_args.out, "Sidecar output path")->required();

    SampleArgs sample_args;
    CLI::App* sample = app.add_subcommand("sample", "Generate one image");
    sample->add_option("--ckpt", sample_args.ckpt, "Model checkpoint")->required();
    sample->add_option("--prompt", sample_args.prompt, "Text prompt");
    sample->add_option("--style", sample_args.style_raw,
                       "Style reference image(s); several are averaged");
    sample->add_option("--residual", sample_args.residual, "Finetune sidecar to apply");
    sample->add_option("--alpha-scale", sample_args.alpha_scale, "Runtime style strength");
    sample->add_option("--steps", sample_args.steps, "Denoising steps");
    sample->add_option("--cfg", sample_args.cfg, "Guidance scale");
    sample->add_option("--eta", sample_args.eta, "DDIM eta");
    sample->add_option("--seed", sample_args.seed, "Random seed");
    sample->add_option("--out", sample_args.out, "Output PNG path");

    MixArgs mix_args;
    CLI::App* mix = app.add_subcommand("mix", "Generate with per-level style mixing");
    mix->add_option("--ckpt", mix_args.base.ckpt, "Model checkpoint")->required();
    mix->add_option("--prompt", mix_args.base.prompt, "Text prompt");
    mix->add_option("--low", mix_args.low, "Reference for the low level")->required();
    mix->add_option("--mid", mix_args.mid, "Reference for the mid level")->required();
    mix->add_option("--high", mix_args.high, "Reference for the high level")->required();
    mix->add_option("--residual", mix_args.base.residual, "Finetune sidecar to consider");
    mix->add_flag("--force-residual", mix_args.force_residual,
                  "Apply the sidecar even for mixed sources");
    mix->add_option("--alpha-scale", mix_args.base.alpha_scale, "Runtime style strength");
    mix->add_option("--steps", mix_args.base.steps, "Denoising steps");
    mix->add_option("--cfg", mix_args.base.cfg, "Guidance scale");
    mix->add_option("--eta", mix_args.base.eta, "DDIM eta");
    mix->add_option("--seed", mix_args.base.seed, "Random seed");
    mix->add_option("--out", mix_args.base.out, "Output PNG path");

    EvalArgs eval_args;
    CLI::App* evalc = app.add_subcommand("eval", "Batch-evaluate a prompts x styles testset");
    evalc->add_option("--ckpt", eval_args.ckpt, "Model checkpoint")->required();
    evalc->add_option("--testset", eval_args.testset, "Testset JSON")->required();
    evalc->add_option("--embedder-cmd", eval_args.embedder_cmd,
                      "External text-similarity command (args: image_path prompt)");
    evalc->add_option("--out", eval_args.out, "Report output path");
    evalc->add_option("--steps", eval_args.steps, "Denoising steps");
    evalc->add_option("--cfg", eval_args.cfg, "Guidance scale");
    evalc->add_option("--seed", eval_args.seed, "Base seed for per-pair streams");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        print_error("UsageError", e.what());
        std::cerr << app.help();
        return 1;
    }

    try {
        if (train->parsed()) return run_train(train_args);
        if (finetune->parsed()) return run_finetune(ft_args);
        if (sample->parsed()) return run_sample(sample_args);
        if (mix->parsed()) return run_mix(mix_args);
        if (evalc->parsed()) return run_eval(eval_args);
        print_error("UsageError", "no subcommand given");
        return 1;
    } catch (const aa::ArgumentError& e) {
        print_error("ArgumentError", e.what());
        return 1;
    } catch (const aa::ConfigError& e) {
        print_error("ConfigError", e.what());
        return 1;
    } catch (const aa::LoadError& e) {
        print_error("LoadError", e.what());
        return 2;
    } catch (const aa::IoError& e) {
        print_error("IoError", e.what());
        return 2;
    } catch (const aa::FormatError& e) {
        print_error("FormatError", e.what());
        return 2;
    } catch (const aa::NumericError& e) {
        print_error("NumericError", e.what());
        return 2;
    } catch (const aa::StateError& e) {
        print_error("StateError", e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error("RuntimeError", e.what());
        return 2;
    }
}
