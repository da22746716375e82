#pragma once

#include <cstdint>

#include "artadapter/config.hpp"
#include "artadapter/nn.hpp"

namespace artadapter {

// True iff timestep t falls in the earliest-denoising (highest-noise) band:
// t >= (1 - fraction) * T. Training injects ACA features only when true;
// sampling never constructs them at all.
bool gate_aca(int64_t t, int64_t T, scalar_t fraction = 0.2);

// Color-only augmentation: possible pixelwise inversion, then brightness,
// contrast, saturation and hue jitter sampled within the policy ranges.
// Deterministic in the seed; spatial structure untouched.
Tensor augment_content(const Tensor& img01, const AugmentPolicy& policy, uint64_t seed);

// Strided-conv content encoder landing at the deepest UNet resolution and the
// injection-point channel width. Forward passes count parameter reads so
// tests can prove the sampler never touches it.
class AcaEncoder {
  public:
    void build(ParamStore& ps, const DiffusionConfig& cfg, Rng& rng);

    // img01: (N, 3, H, W) in [0, 1] -> (N, width, H/8, W/8).
    Var encode(const Var& img01) const;

    int64_t param_count() const { return param_count_; }
    int64_t out_width() const { return out_width_; }
    uint64_t access_count() const { return access_count_; }
    void reset_access_count() { access_count_ = 0; }

  private:
    Conv2dLayer c1_, c2_, c3_;
    int64_t param_count_ = 0;
    int64_t out_width_ = 0;
    mutable uint64_t access_count_ = 0;
};

}  // namespace artadapter
