#include "twb/rng.hpp"

#include <cmath>

#include "twb/dist_core.hpp"

namespace twb {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

std::uint64_t next_u64(RngState& st) {
    auto& s = st.s;
    std::uint64_t result = rotl(s[0] + s[3], 23) + s[0];
    std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

RngState substream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    RngState st;
    st.s[0] = splitmix64(x);
    st.s[1] = splitmix64(x);
    st.s[2] = splitmix64(x);
    st.s[3] = splitmix64(x);
    if ((st.s[0] | st.s[1] | st.s[2] | st.s[3]) == 0) st.s[0] = 1;
    return st;
}

double uniform01(RngState& st) { return double(next_u64(st) >> 11) * 0x1.0p-53; }

double sample_normal(RngState& st) {
    // polar method, no cached second value so call sites stay stateless
    for (;;) {
        double u = 2.0 * uniform01(st) - 1.0;
        double v = 2.0 * uniform01(st) - 1.0;
        double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

double sample_gamma(RngState& st, double shape, double scale) {
    if (!(shape > 0.0) || !(scale >= 0.0)) throw DomainError("gamma sampler parameter domain");
    if (scale == 0.0) return 0.0;
    if (shape < 1.0) {
        double g = sample_gamma(st, shape + 1.0, 1.0);
        double u = uniform01(st);
        while (u <= 0.0) u = uniform01(st);
        return scale * g * std::exp(std::log(u) / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = sample_normal(st);
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform01(st);
        if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
}

std::int64_t sample_poisson(RngState& st, double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("Poisson mean must be nonnegative");
    std::int64_t total = 0;
    while (lambda > 400.0) {
        // additivity keeps exp(-chunk) well inside double range
        double chunk = 400.0;
        double limit = std::exp(-chunk);
        double prod = uniform01(st);
        std::int64_t k = 0;
        while (prod > limit) {
            prod *= uniform01(st);
            ++k;
        }
        total += k;
        lambda -= chunk;
    }
    if (lambda == 0.0) return total;
    double limit = std::exp(-lambda);
    double prod = uniform01(st);
    std::int64_t k = 0;
    while (prod > limit) {
        prod *= uniform01(st);
        ++k;
    }
    return total + k;
}

std::int64_t sample_binomial(RngState& st, std::int64_t n, double eta) {
    if (n < 0) throw DomainError("binomial trials must be nonnegative");
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("efficiency outside [0,1]");
    if (eta == 0.0) return 0;
    if (eta == 1.0) return n;
    std::int64_t m = 0;
    for (std::int64_t t = 0; t < n; ++t)
        if (uniform01(st) < eta) ++m;
    return m;
}

std::int64_t sample_mandel_rice(RngState& st, const ModeParams& p) {
    validate(p);
    if (p.b == 0.0) return 0;
    double intensity = sample_gamma(st, p.mu, p.b);
    return sample_poisson(st, intensity);
}

} // namespace twb
