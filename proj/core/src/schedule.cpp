#include "artadapter/schedule.hpp"

#include <cmath>
#include <string>

namespace artadapter {

NoiseSchedule NoiseSchedule::linear(int64_t T, scalar_t beta_start, scalar_t beta_end) {
    if (T < 1) throw ArgumentError("schedule: T must be at least 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    scalar_t abar = 1.0;
    for (int64_t t = 0; t < T; ++t) {
        const scalar_t frac = T == 1 ? 0.0 : static_cast<scalar_t>(t) / static_cast<scalar_t>(T - 1);
        const scalar_t b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<size_t>(t)] = b;
        abar *= (1.0 - b);
        s.alpha_bar[static_cast<size_t>(t)] = abar;
    }
    s.validate();
    return s;
}

scalar_t NoiseSchedule::beta_at(int64_t t) const {
    if (t < 1 || t > T) throw RangeError("schedule: t=" + std::to_string(t) + " outside [1," +
                                         std::to_string(T) + "]");
    return beta[static_cast<size_t>(t - 1)];
}

scalar_t NoiseSchedule::alpha_bar_at(int64_t t) const {
    if (t < 0 || t > T) throw RangeError("schedule: t=" + std::to_string(t) + " outside [0," +
                                         std::to_string(T) + "]");
    if (t == 0) return 1.0;
    return alpha_bar[static_cast<size_t>(t - 1)];
}

void NoiseSchedule::validate() const {
    if (T < 1 || static_cast<int64_t>(beta.size()) != T ||
        static_cast<int64_t>(alpha_bar.size()) != T)
        throw ConfigError("schedule: inconsistent lengths");
    scalar_t prev = 0.0;
    for (int64_t t = 0; t < T; ++t) {
        const scalar_t b = beta[static_cast<size_t>(t)];
        if (!(b > prev) || !(b < 1.0))
            throw ConfigError("schedule: betas must be strictly increasing in (0,1); beta_" +
                              std::to_string(t + 1) + " = " + std::to_string(b));
        prev = b;
    }
}

Tensor add_noise(const Tensor& x0, int64_t t, const Tensor& eps, const NoiseSchedule& s) {
    if (!x0.same_shape(eps))
        throw ShapeError("add_noise: " + x0.shape_str() + " vs " + eps.shape_str());
    const scalar_t abar = s.alpha_bar_at(t);  // range-checks t; t = 0 not a training step
    if (t < 1) throw RangeError("add_noise: t must be at least 1");
    const scalar_t cs = std::sqrt(abar);
    const scalar_t cn = std::sqrt(1.0 - abar);
    Tensor out = x0;
    out.scale_(cs);
    out.add_scaled_(eps, cn);
    return out;
}

std::vector<int64_t> ddim_timesteps(int64_t T, int64_t steps) {
    if (steps < 1) throw ArgumentError("ddim_timesteps: steps must be at least 1");
    if (steps > T) throw ArgumentError("ddim_timesteps: steps cannot exceed T");
    std::vector<int64_t> ts;
    ts.reserve(static_cast<size_t>(steps));
    for (int64_t i = 0; i < steps; ++i) {
        const int64_t t = T - (i * T) / steps;
        if (!ts.empty() && ts.back() == t) continue;
        ts.push_back(t);
    }
    return ts;
}

}  // namespace artadapter
