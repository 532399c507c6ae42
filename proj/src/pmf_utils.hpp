#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "twb/dist_core.hpp"

namespace twb::detail {

inline std::vector<double> pmf_vector(const ModeParams& p, double tail_tol) {
    std::size_t n = mandel_rice_cutoff(p, tail_tol);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = mandel_rice_pmf(std::int64_t(i), p);
    return v;
}

// rows k=0..kmax of B(k, n) for fixed eta over n=0..nmax, by the stable
// forward ratio from n = k
inline std::vector<std::vector<double>> bernoulli_rows(std::size_t kmax, std::size_t nmax,
                                                       double eta) {
    std::vector<std::vector<double>> rows(kmax + 1, std::vector<double>(nmax + 1, 0.0));
    double log_eta = eta > 0.0 ? std::log(eta) : 0.0;
    for (std::size_t k = 0; k <= kmax; ++k) {
        if (k > nmax) continue;
        double v = eta > 0.0 ? std::exp(double(k) * log_eta) : (k == 0 ? 1.0 : 0.0);
        rows[k][k] = v;
        for (std::size_t n = k; n < nmax; ++n) {
            // B(k, n+1) = B(k, n) * (1-eta) * (n+1) / (n+1-k)
            v *= (1.0 - eta) * double(n + 1) / double(n + 1 - k);
            rows[k][n + 1] = v;
        }
    }
    return rows;
}

inline std::size_t marginal_cutoff(const std::vector<double>& pmf, double tail_tol) {
    double cum = 0.0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
        cum += pmf[i];
        if (1.0 - cum < tail_tol) return i + 1;
    }
    return pmf.size();
}

} // namespace twb::detail
