#include "artadapter/model.hpp"

namespace artadapter {

void Model::build(const DiffusionConfig& cfg, uint64_t seed) {
    cfg.validate();
    cfg_ = cfg;
    sched_ = cfg.schedule();
    params_ = ParamStore();
    Rng rng(seed);
    // Fixed build order: it defines both the RNG consumption and the
    // checkpoint tensor layout.
    text_.build(params_, cfg, rng);
    style_.build(params_, cfg, rng);
    aca_.build(params_, cfg, rng);
    unet_.build(params_, cfg, rng);
    built_ = true;
}

Var Model::predict_noise(const Var& x_t, const std::vector<int64_t>& ts,
                         const std::vector<EncodedContext>& contexts,
                         const Var& aca_features) const {
    if (!built_) throw StateError("model not built");
    return unet_.forward(x_t, ts, contexts, aca_features);
}

void Model::allocate_finetune_residuals() {
    if (!built_) throw StateError("model not built");
    for (AdaptedProjection* p : unet_.adapted_projections()) {
        const std::string name = p->param_prefix() + ".delta_h";
        if (params_.contains(name)) {
            p->delta_h = params_.get(name);
            continue;
        }
        p->delta_h = params_.add(Section::FinetuneResidual, name,
                                 Tensor::zeros({p->w->value.dim(1)}));
    }
}

void Model::clear_finetune_residuals() {
    for (AdaptedProjection* p : unet_.adapted_projections()) p->delta_h = nullptr;
    params_.remove_section(Section::FinetuneResidual);
}

bool Model::has_finetune_residuals() const {
    for (const AdaptedProjection* p : unet_.adapted_projections())
        if (p->delta_h) return true;
    return false;
}

void Model::scale_alpha(scalar_t factor) {
    if (factor < 0.0) throw ArgumentError("alpha scale must be non-negative");
    for (AdaptedProjection* p : unet_.adapted_projections()) p->alpha_runtime_scale = factor;
}

std::vector<ParamGroup> Model::trainable_parameters(TrainPhase phase, const TrainConfig& tc,
                                                    scalar_t finetune_lr) {
    if (!built_) throw StateError("model not built");
    for (Section s : all_sections()) params_.set_requires_grad(s, false);

    std::vector<ParamGroup> groups;
    auto group = [&](std::vector<Section> sections, scalar_t lr) {
        ParamGroup g;
        g.lr = lr;
        for (Section s : sections) {
            params_.set_requires_grad(s, true);
            for (Var v : params_.section_params(s)) g.params.push_back(std::move(v));
        }
        groups.push_back(std::move(g));
    };

    switch (phase) {
        case TrainPhase::Base:
            group({Section::Backbone, Section::TextEncoder}, tc.lr_base);
            break;
        case TrainPhase::Adapter:
            group({Section::StyleMlp, Section::Aca}, tc.lr_encoder_aca);
            group({Section::Adapter}, tc.lr_explicit);
            break;
        case TrainPhase::Finetune:
            if (!has_finetune_residuals())
                throw StateError("finetune residuals not allocated");
            group({Section::FinetuneResidual}, finetune_lr);
            break;
    }
    return groups;
}

}  // namespace artadapter
