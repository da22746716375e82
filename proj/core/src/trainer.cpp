#include "artadapter/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "artadapter/aca.hpp"
#include "artadapter/hash.hpp"
#include "artadapter/ops.hpp"

namespace artadapter {

using namespace ops;

namespace {

// Sub-stream indices of the per-(step, slot) RNG family.
enum Stream : uint64_t { kPick = 0, kNoise = 1, kTimestep = 2, kDropout = 3, kAugment = 4 };

Tensor to_signed(const Tensor& img01) {
    Tensor x = img01;
    for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = x.at(i) * 2.0 - 1.0;
    return x;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    std::vector<int64_t> shape{static_cast<int64_t>(items.size())};
    for (int64_t d : items[0].shape()) shape.push_back(d);
    Tensor out(std::move(shape));
    const int64_t stride = items[0].numel();
    for (size_t n = 0; n < items.size(); ++n)
        for (int64_t i = 0; i < stride; ++i)
            out.at(static_cast<int64_t>(n) * stride + i) = items[n].at(i);
    return out;
}

}  // namespace

TrainPhase phase_from_string(const std::string& name) {
    if (name == "base") return TrainPhase::Base;
    if (name == "adapter") return TrainPhase::Adapter;
    if (name == "finetune") return TrainPhase::Finetune;
    throw ConfigError("unknown training phase: " + name);
}

scalar_t training_step(Model& model, const Dataset& data, const TrainConfig& tc,
                       TrainPhase phase, int64_t step, AdamW& opt) {
    const DiffusionConfig& cfg = model.config();
    const Rng root(tc.seed);
    const int64_t B = tc.batch_size;
    const int64_t T = model.schedule().T;

    std::vector<Tensor> xts, epss;
    std::vector<int64_t> ts;
    std::vector<EncodedContext> contexts;
    std::vector<Tensor> aca_images;
    std::vector<int64_t> aca_slots;

    for (int64_t s = 0; s < B; ++s) {
        const uint64_t us = static_cast<uint64_t>(s);
        const uint64_t ustep = static_cast<uint64_t>(step);
        const int64_t pick =
            root.derive(ustep, us, kPick).uniform_int(0, data.size() - 1);
        const Tensor& img01 = data.image01(pick);
        if (img01.dim(1) != cfg.image_size || img01.dim(2) != cfg.image_size)
            throw ConfigError("training image size does not match the model config: " +
                              data.record(pick).path);

        const int64_t t = root.derive(ustep, us, kTimestep).uniform_int(1, T);
        Rng noise_rng = root.derive(ustep, us, kNoise);
        const Tensor eps = noise_rng.gaussian_tensor(img01.shape());
        xts.push_back(add_noise(to_signed(img01), t, eps, model.schedule()));
        epss.push_back(eps);
        ts.push_back(t);

        const bool drop =
            root.derive(ustep, us, kDropout).uniform() < tc.cfg_dropout_probability;
        const std::string& caption = data.record(pick).caption;
        if (phase == TrainPhase::Base || drop) {
            contexts.push_back(model.text().encode_prompt(drop ? "" : caption));
        } else {
            Var style = model.style().encode_style_var(img01);
            contexts.push_back(
                model.text().encode_context(style, model.text().embed_tokens(
                                                        model.text().tokenize(caption))));
        }

        if (phase != TrainPhase::Base && gate_aca(t, T)) {
            const uint64_t aug_seed = root.derive(ustep, us, kAugment).next_u64();
            aca_images.push_back(augment_content(img01, tc.augment, aug_seed));
            aca_slots.push_back(s);
        }
    }

    Var x_t = make_constant(stack_batch(xts));
    Var eps_target = make_constant(stack_batch(epss));

    Var aca_features;
    if (!aca_images.empty()) {
        Var active = model.aca().encode(make_constant(stack_batch(aca_images)));
        aca_features = scatter_batch(active, aca_slots, B);
    }

    Var eps_hat = model.predict_noise(x_t, ts, contexts, aca_features);
    Var loss = mse_loss(eps_hat, eps_target);
    const scalar_t loss_value = loss->value.at(0);
    if (!std::isfinite(loss_value))
        throw NumericError("non-finite loss " + std::to_string(loss_value) + " at step " +
                           std::to_string(step) + " (eps_hat finite: " +
                           (eps_hat->value.all_finite() ? "yes" : "no") + ")");

    opt.zero_grad();
    backward(loss);
    opt.step();
    return loss_value;
}

TrainResult train(const TrainConfig& tc, const std::string& manifest_path,
                  const std::string& out_dir) {
    tc.validate();
    const TrainPhase phase = phase_from_string(tc.phase);
    if (phase == TrainPhase::Finetune)
        throw ConfigError("use fast_finetune for the finetune phase");

    // Manifest problems must surface before step 0.
    Dataset data = Dataset::from_manifest(manifest_path);
    std::filesystem::create_directories(out_dir);

    Model model;
    if (phase == TrainPhase::Base) {
        model.build(tc.model, tc.seed);
        std::vector<std::string> captions;
        for (int64_t i = 0; i < data.size(); ++i) captions.push_back(data.record(i).caption);
        model.text().set_vocab(Vocab::build(captions));
    } else {
        if (tc.init_checkpoint.empty())
            throw ConfigError("adapter phase requires init_checkpoint");
        Checkpoint ck = load_checkpoint(tc.init_checkpoint);
        if (config_hash(ck.model.config()) != config_hash(tc.model))
            throw ConfigError("init_checkpoint model config differs from the training config");
        model = std::move(ck.model);
    }

    AdamW opt(model.trainable_parameters(phase, tc), tc.adam_beta1, tc.adam_beta2, 1e-8,
              tc.weight_decay);

    const std::vector<Section> frozen =
        phase == TrainPhase::Base
            ? std::vector<Section>{Section::StyleMlp, Section::Adapter, Section::Aca}
            : std::vector<Section>{Section::Backbone, Section::TextEncoder};
    std::vector<uint64_t> frozen_hashes;
    for (Section s : frozen) frozen_hashes.push_back(model.section_hash(s));

    TrainResult result;
    result.loss_csv_path = (std::filesystem::path(out_dir) / "loss.csv").string();
    std::ofstream csv(result.loss_csv_path);
    if (!csv) throw IoError("cannot write loss curve: " + result.loss_csv_path);
    csv << "step,loss\n";

    for (int64_t step = 0; step < tc.max_steps; ++step) {
        const scalar_t loss = training_step(model, data, tc, phase, step, opt);
        result.losses.push_back(loss);
        csv << step << ',' << loss << '\n';
        if ((step + 1) % tc.checkpoint_every == 0 && step + 1 < tc.max_steps) {
            const std::string path =
                (std::filesystem::path(out_dir) /
                 ("checkpoint_step" + std::to_string(step + 1) + ".aack"))
                    .string();
            save_checkpoint(model, step + 1, tc.seed, path);
        }
    }
    csv.flush();
    if (!csv) throw IoError("failed writing loss curve: " + result.loss_csv_path);

    for (size_t i = 0; i < frozen.size(); ++i)
        if (model.section_hash(frozen[i]) != frozen_hashes[i])
            throw StateError(std::string("frozen section changed during training: ") +
                             section_name(frozen[i]));

    result.checkpoint_path = (std::filesystem::path(out_dir) / "checkpoint.aack").string();
    save_checkpoint(model, tc.max_steps, tc.seed, result.checkpoint_path);
    return result;
}

SidecarMeta fast_finetune(Model& model, const std::vector<Tensor>& style_refs,
                          const std::string& sidecar_path, int64_t steps, scalar_t lr,
                          uint64_t seed) {
    if (style_refs.empty()) throw ArgumentError("fast_finetune needs at least one reference");
    if (steps < 1) throw ArgumentError("fast_finetune needs at least one step");
    if (!(lr > 0.0)) throw ArgumentError("fast_finetune learning rate must be positive");
    const DiffusionConfig& cfg = model.config();
    for (const Tensor& r : style_refs)
        if (r.rank() != 3 || r.dim(0) != 3) throw ShapeError("style references must be (3, H, W)");

    // The style conditioning is frozen for the whole run: the averaged
    // embedding of all references.
    std::vector<StyleEmbedding> embeds;
    std::vector<uint64_t> ref_hashes;
    for (const Tensor& r : style_refs) {
        embeds.push_back(model.style().encode_style(r));
        ref_hashes.push_back(hash_tensor(r));
    }
    const StyleEmbedding style = average_style_embeddings(embeds);

    model.allocate_finetune_residuals();
    TrainConfig dummy;  // carries only the rates AdamW ignores for this phase
    AdamW opt(model.trainable_parameters(TrainPhase::Finetune, dummy, lr), 0.9, 0.999, 1e-8,
              /*weight_decay=*/0.0);

    const Rng root(seed);
    const int64_t B = 4;
    const int64_t T = model.schedule().T;
    const int64_t N = static_cast<int64_t>(style_refs.size());

    for (int64_t step = 0; step < steps; ++step) {
        std::vector<Tensor> xts, epss;
        std::vector<int64_t> ts;
        std::vector<EncodedContext> contexts;
        std::vector<Tensor> aca_images;
        std::vector<int64_t> aca_slots;
        for (int64_t s = 0; s < B; ++s) {
            const uint64_t us = static_cast<uint64_t>(s);
            const uint64_t ustep = static_cast<uint64_t>(step);
            const Tensor& img01 = style_refs[static_cast<size_t>((step * B + s) % N)];
            if (img01.dim(1) != cfg.image_size || img01.dim(2) != cfg.image_size)
                throw ShapeError("reference size does not match the model config");
            const int64_t t = root.derive(ustep, us, kTimestep).uniform_int(1, T);
            Rng noise_rng = root.derive(ustep, us, kNoise);
            const Tensor eps = noise_rng.gaussian_tensor(img01.shape());
            xts.push_back(add_noise(to_signed(img01), t, eps, model.schedule()));
            epss.push_back(eps);
            ts.push_back(t);
            contexts.push_back(model.text().encode_context(
                make_constant(style.tokens), model.text().embed_tokens(model.text().tokenize(""))));
            if (gate_aca(t, T)) {
                AugmentPolicy policy;  // defaults; ACA itself is frozen here
                const uint64_t aug_seed = root.derive(ustep, us, kAugment).next_u64();
                aca_images.push_back(augment_content(img01, policy, aug_seed));
                aca_slots.push_back(s);
            }
        }
        Var aca_features;
        if (!aca_images.empty()) {
            Var active = model.aca().encode(make_constant(stack_batch(aca_images)));
            aca_features = scatter_batch(active, aca_slots, B);
        }
        Var eps_hat = model.predict_noise(make_constant(stack_batch(xts)), ts, contexts,
                                          aca_features);
        Var loss = mse_loss(eps_hat, make_constant(stack_batch(epss)));
        if (!std::isfinite(loss->value.at(0)))
            throw NumericError("non-finite finetune loss at step " + std::to_string(step));
        opt.zero_grad();
        backward(loss);
        opt.step();
    }

    SidecarMeta meta;
    meta.config_hash = config_hash(cfg);
    meta.style_hashes = ref_hashes;
    meta.steps = steps;
    meta.lr = lr;
    save_finetune_sidecar(model, meta, sidecar_path);
    return meta;
}

}  // namespace artadapter
