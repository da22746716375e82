#include "artadapter/rng.hpp"

#include <cmath>

#include "artadapter/common.hpp"

namespace artadapter {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x8f1bbcdcbfa53e0bULL)) {}

uint64_t Rng::next_u64() {
    // xorshift64* step over a splitmix-initialized state.
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dULL;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ArgumentError("uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
}

double Rng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

Rng Rng::derive(uint64_t a, uint64_t b, uint64_t c) const {
    uint64_t s = state_;
    s = splitmix64(s ^ splitmix64(a ^ 0x517cc1b727220a95ULL));
    s = splitmix64(s ^ splitmix64(b ^ 0x6c62272e07bb0142ULL));
    s = splitmix64(s ^ splitmix64(c ^ 0xcbf29ce484222325ULL));
    return Rng(s);
}

Tensor Rng::gaussian_tensor(std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    fill_gaussian(t);
    return t;
}

void Rng::fill_gaussian(Tensor& t, double mean, double stddev) {
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = mean + stddev * gaussian();
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = uniform(lo, hi);
}

}  // namespace artadapter
