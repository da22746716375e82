#pragma once

#include <cstdint>
#include <vector>

#include "artadapter/aca.hpp"
#include "artadapter/adaptation.hpp"
#include "artadapter/backbone.hpp"
#include "artadapter/config.hpp"
#include "artadapter/schedule.hpp"
#include "artadapter/style_encoder.hpp"
#include "artadapter/text_pipeline.hpp"

namespace artadapter {

// The assembled pipeline: text encoder, style encoder, ACA, UNet and the
// noise schedule, with every parameter registered in one ordered store.
class Model {
  public:
    void build(const DiffusionConfig& cfg, uint64_t seed);
    bool built() const { return built_; }

    const DiffusionConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    TextPipeline& text() { return text_; }
    const TextPipeline& text() const { return text_; }
    StyleEncoder& style() { return style_; }
    const StyleEncoder& style() const { return style_; }
    AcaEncoder& aca() { return aca_; }
    const AcaEncoder& aca() const { return aca_; }
    Unet& unet() { return unet_; }
    const Unet& unet() const { return unet_; }

    Var predict_noise(const Var& x_t, const std::vector<int64_t>& ts,
                      const std::vector<EncodedContext>& contexts,
                      const Var& aca_features = nullptr) const;

    uint64_t section_hash(Section s) const { return params_.section_hash(s); }

    std::vector<AdaptedProjection*> adapted_projections() { return unet_.adapted_projections(); }
    std::vector<const AdaptedProjection*> adapted_projections() const {
        return unet_.adapted_projections();
    }

    // Finetune residual lifecycle: one zeroed d_out vector per adapted
    // projection. Allocation is idempotent; clearing restores the zero-shot
    // model exactly.
    void allocate_finetune_residuals();
    void clear_finetune_residuals();
    bool has_finetune_residuals() const;

    // Sampling-time multiplier on every projection's alpha. Stored weights
    // are untouched.
    void scale_alpha(scalar_t factor);

    // Flips requires_grad so exactly the phase's parameters train, and
    // returns them grouped by learning rate.
    std::vector<ParamGroup> trainable_parameters(TrainPhase phase, const TrainConfig& tc,
                                                 scalar_t finetune_lr = 0.02);

  private:
    DiffusionConfig cfg_;
    NoiseSchedule sched_;
    ParamStore params_;
    TextPipeline text_;
    StyleEncoder style_;
    AcaEncoder aca_;
    Unet unet_;
    bool built_ = false;
};

}  // namespace artadapter
