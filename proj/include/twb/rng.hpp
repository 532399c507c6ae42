#pragma once

#include <array>
#include <cstdint>

#include "twb/types.hpp"

namespace twb {

// xoshiro256++ state. Streams are derived from (seed, stream) through
// splitmix64 so that every shot owns an independent substream and parallel
// schedules cannot change the results.
struct RngState {
    std::array<std::uint64_t, 4> s{1, 2, 3, 4};
};

std::uint64_t next_u64(RngState& st);

RngState substream(std::uint64_t seed, std::uint64_t stream);

// Uniform on [0,1) with 53 random bits.
double uniform01(RngState& st);

double sample_normal(RngState& st);

// Marsaglia-Tsang for shape >= 1; the boosting identity handles shape < 1
// (values underflowing to 0 are correct to double range for the tiny mode
// numbers this library meets).
double sample_gamma(RngState& st, double shape, double scale);

// Exact inversion, chunked through Poisson additivity so exp(-lambda) never
// underflows.
std::int64_t sample_poisson(RngState& st, double lambda);

std::int64_t sample_binomial(RngState& st, std::int64_t n, double eta);

// Gamma-Poisson mixture draw, exact for all real mu > 0.
std::int64_t sample_mandel_rice(RngState& st, const ModeParams& p);

} // namespace twb
