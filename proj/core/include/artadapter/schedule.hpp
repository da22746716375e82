#pragma once

#include <cstdint>
#include <vector>

#include "artadapter/tensor.hpp"

namespace artadapter {

// Forward-process noise schedule. beta[t-1] holds beta_t for t in [1, T];
// alpha_bar_at(0) is defined as 1 so a full DDIM jump can land on t = 0.
struct NoiseSchedule {
    int64_t T = 0;
    std::vector<scalar_t> beta;
    std::vector<scalar_t> alpha_bar;

    static NoiseSchedule linear(int64_t T, scalar_t beta_start = 1e-4,
                                scalar_t beta_end = 2e-2);

    scalar_t beta_at(int64_t t) const;       // t in [1, T]
    scalar_t alpha_bar_at(int64_t t) const;  // t in [0, T]

    // Enforces 0 < beta_1 < ... < beta_T < 1.
    void validate() const;
};

// x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
Tensor add_noise(const Tensor& x0, int64_t t, const Tensor& eps, const NoiseSchedule& s);

// The strided sampling subset: `steps` timesteps descending from T, evenly
// spaced, never touching 0 (t = 0 only appears as the final jump target).
std::vector<int64_t> ddim_timesteps(int64_t T, int64_t steps);

}  // namespace artadapter
