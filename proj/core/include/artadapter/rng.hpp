#pragma once

#include <cstdint>
#include <vector>

#include "artadapter/tensor.hpp"

namespace artadapter {

// Deterministic RNG with explicit stream derivation. Gaussian draws use
// Box-Muller over the raw 64-bit stream so sequences are identical across
// platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive bounds
    double gaussian();

    // Independent substream keyed by up to three indices.
    Rng derive(uint64_t a, uint64_t b = 0, uint64_t c = 0) const;

    Tensor gaussian_tensor(std::vector<int64_t> shape);
    void fill_gaussian(Tensor& t, double mean = 0.0, double stddev = 1.0);
    void fill_uniform(Tensor& t, double lo, double hi);

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

uint64_t splitmix64(uint64_t x);

}  // namespace artadapter
