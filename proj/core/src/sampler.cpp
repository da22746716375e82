#include "artadapter/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <sstream>

#include "artadapter/hash.hpp"
#include "artadapter/image.hpp"
#include "artadapter/rng.hpp"
#include "artadapter/schedule.hpp"

namespace artadapter {

void SampleOptions::validate() const {
    if (steps < 1) throw ArgumentError("sample steps must be >= 1");
    if (!std::isfinite(cfg_scale) || cfg_scale < 0.0)
        throw ArgumentError("cfg_scale must be finite and non-negative");
    if (!std::isfinite(alpha_scale) || alpha_scale < 0.0)
        throw ArgumentError("alpha_scale must be finite and non-negative");
    if (!std::isfinite(eta) || eta < 0.0 || eta > 1.0) throw ArgumentError("eta must be in [0, 1]");
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, scalar_t scale) {
    if (!eps_cond.same_shape(eps_uncond))
        throw ShapeError("cfg_combine: shape mismatch " + eps_cond.shape_str() + " vs " +
                         eps_uncond.shape_str());
    // The endpoints return their operand bit-exactly; u + 1 * (c - u) does
    // not always round back to c.
    if (scale == 1.0) return eps_cond;
    if (scale == 0.0) return eps_uncond;
    Tensor out(eps_cond.shape());
    const scalar_t* c = eps_cond.data();
    const scalar_t* u = eps_uncond.data();
    scalar_t* o = out.data();
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) o[i] = u[i] + scale * (c[i] - u[i]);
    return out;
}

namespace {

std::string format_scalar(scalar_t v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

Tensor ddim_sample(const Model& model, const EncodedContext& cond, const EncodedContext& uncond,
                   const SampleOptions& opts) {
    if (!model.built()) throw StateError("ddim_sample: model not built");
    opts.validate();
    NoGradGuard ng;

    const DiffusionConfig& cfg = model.config();
    const NoiseSchedule& s = model.schedule();
    const std::vector<int64_t> ts = ddim_timesteps(s.T, opts.steps);
    const int64_t n = static_cast<int64_t>(ts.size());
    const std::vector<int64_t> shape{cfg.channels, cfg.image_size, cfg.image_size};
    const std::vector<int64_t> batch_shape{1, cfg.channels, cfg.image_size, cfg.image_size};

    // One sequential stream: x_T first, then (for eta > 0) one draw per
    // noised transition, in step order.
    Rng rng(opts.seed);
    Tensor x = rng.gaussian_tensor(shape);

    for (int64_t i = 0; i < n; ++i) {
        const int64_t t = ts[i];
        const int64_t t_prev = (i + 1 < n) ? ts[i + 1] : 0;
        const Var xv = make_constant(x.reshaped(batch_shape));
        const Tensor eps_c = model.predict_noise(xv, {t}, {cond})->value.reshaped(shape);
        const Tensor eps_u = model.predict_noise(xv, {t}, {uncond})->value.reshaped(shape);
        const Tensor eps = cfg_combine(eps_c, eps_u, opts.cfg_scale);

        const scalar_t ab_t = s.alpha_bar_at(t);
        const scalar_t ab_p = s.alpha_bar_at(t_prev);
        const scalar_t sqrt_ab_t = std::sqrt(ab_t);
        const scalar_t sqrt_om_t = std::sqrt(1.0 - ab_t);
        const scalar_t sigma = opts.eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) *
                               std::sqrt(std::max(0.0, 1.0 - ab_t / ab_p));
        const scalar_t dir_coeff = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
        const scalar_t sqrt_ab_p = std::sqrt(ab_p);

        scalar_t* xd = x.data();
        const scalar_t* ed = eps.data();
        const int64_t numel = x.numel();
        for (int64_t j = 0; j < numel; ++j) {
            const scalar_t x0_hat = (xd[j] - sqrt_om_t * ed[j]) / sqrt_ab_t;
            xd[j] = sqrt_ab_p * x0_hat + dir_coeff * ed[j];
        }
        if (sigma > 0.0 && t_prev > 0) {
            const Tensor z = rng.gaussian_tensor(shape);
            x.add_scaled_(z, sigma);
        }
        if (!x.all_finite())
            throw NumericError("ddim_sample: non-finite state after step " + std::to_string(i) +
                               " (t=" + std::to_string(t) + ")");
    }

    // Model space is [-1, 1]; images are [0, 1].
    scalar_t* xd = x.data();
    for (int64_t j = 0; j < x.numel(); ++j)
        xd[j] = std::clamp(0.5 * (xd[j] + 1.0), 0.0, 1.0);
    return x;
}

namespace {

// Shared tail of both generation paths: contexts, optional sidecar for the
// duration of the call, runtime alpha scale, sampling, restoration.
GenerateResult run_generation(Model& model, const std::string& prompt,
                              const std::optional<StyleEmbedding>& emb, const SampleOptions& opts,
                              const std::string& sidecar_path,
                              std::map<std::string, std::string> metadata) {
    const uint64_t aca_before = model.aca().access_count();

    const bool had_residuals = model.has_finetune_residuals();
    std::vector<Tensor> saved_residuals;
    bool applied = false;
    if (!sidecar_path.empty()) {
        if (had_residuals)
            for (const AdaptedProjection* p : model.adapted_projections())
                saved_residuals.push_back(p->delta_h->value);
        apply_finetune_sidecar(model, sidecar_path);
        applied = true;
        metadata["sidecar"] = sidecar_path;
    }
    model.scale_alpha(opts.alpha_scale);

    std::exception_ptr err;
    Tensor img;
    try {
        NoGradGuard ng;
        EncodedContext cond =
            emb ? model.text().encode_prompt(prompt, make_constant(emb->tokens))
                : model.text().encode_prompt(prompt);
        EncodedContext uncond = model.text().encode_prompt("");
        img = ddim_sample(model, cond, uncond, opts);
    } catch (...) {
        err = std::current_exception();
    }

    // The call leaves the model's stored weights bit-identical in all cases.
    model.scale_alpha(1.0);
    if (applied) {
        if (had_residuals) {
            std::vector<AdaptedProjection*> projs = model.adapted_projections();
            for (size_t i = 0; i < projs.size(); ++i)
                projs[i]->delta_h->value = saved_residuals[i];
        } else {
            model.clear_finetune_residuals();
        }
    }
    if (err) std::rethrow_exception(err);
    if (model.aca().access_count() != aca_before)
        throw StateError("sampling must not read the content-alignment encoder");

    GenerateResult r;
    r.image01 = std::move(img);
    r.metadata = std::move(metadata);
    r.metadata["prompt"] = prompt;
    r.metadata["seed"] = std::to_string(opts.seed);
    r.metadata["steps"] = std::to_string(opts.steps);
    r.metadata["cfg_scale"] = format_scalar(opts.cfg_scale);
    r.metadata["alpha_scale"] = format_scalar(opts.alpha_scale);
    r.metadata["eta"] = format_scalar(opts.eta);
    return r;
}

}  // namespace

GenerateResult generate(Model& model, const std::string& prompt,
                        const std::vector<Tensor>& style_images, const SampleOptions& opts,
                        const std::string& sidecar_path) {
    if (!model.built()) throw StateError("generate: model not built");
    opts.validate();

    std::optional<StyleEmbedding> emb;
    std::map<std::string, std::string> md;
    if (!style_images.empty()) {
        std::vector<StyleEmbedding> embs;
        embs.reserve(style_images.size());
        std::string refs;
        for (const Tensor& img : style_images) {
            embs.push_back(model.style().encode_style(img));
            if (!refs.empty()) refs += ",";
            refs += hash_hex(hash_tensor(img));
        }
        emb = (embs.size() == 1) ? embs.front() : average_style_embeddings(embs);
        md["style_refs"] = refs;
    }
    return run_generation(model, prompt, emb, opts, sidecar_path, std::move(md));
}

GenerateResult generate_mixed(Model& model, const std::string& prompt, const Tensor& low_img,
                              const Tensor& mid_img, const Tensor& high_img,
                              const SampleOptions& opts, const std::string& sidecar_path,
                              bool force_residual) {
    if (!model.built()) throw StateError("generate_mixed: model not built");
    opts.validate();

    const StyleEmbedding e_low = model.style().encode_style(low_img);
    const StyleEmbedding e_mid = model.style().encode_style(mid_img);
    const StyleEmbedding e_high = model.style().encode_style(high_img);
    const StyleEmbedding mixed = mix_style_embeddings(e_low, e_mid, e_high);

    const uint64_t h_low = hash_tensor(low_img);
    const uint64_t h_mid = hash_tensor(mid_img);
    const uint64_t h_high = hash_tensor(high_img);

    std::map<std::string, std::string> md;
    md["mix_low"] = hash_hex(h_low);
    md["mix_mid"] = hash_hex(h_mid);
    md["mix_high"] = hash_hex(h_high);

    // A finetune residual is specific to one reference; under mixing it only
    // applies when every level comes from that same reference.
    std::string effective_sidecar;
    if (!sidecar_path.empty()) {
        bool apply = force_residual;
        if (!apply && h_low == h_mid && h_mid == h_high) {
            const SidecarMeta meta = read_sidecar_meta(sidecar_path);
            apply = std::find(meta.style_hashes.begin(), meta.style_hashes.end(), h_low) !=
                    meta.style_hashes.end();
        }
        if (apply)
            effective_sidecar = sidecar_path;
        else
            md["sidecar_skipped"] = sidecar_path;
    }
    return run_generation(model, prompt, mixed, opts, effective_sidecar, std::move(md));
}

void write_generated_png(const std::string& path, const GenerateResult& result) {
    write_png(path, tensor01_to_image(result.image01), result.metadata);
}

}  // namespace artadapter
