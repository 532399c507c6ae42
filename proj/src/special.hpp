#pragma once

// Internal numeric helpers. Not installed.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "twb/errors.hpp"

namespace twb::detail {

inline double log_binomial(std::int64_t n, std::int64_t k) {
    return std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
           std::lgamma(double(n - k) + 1.0);
}

// Pascal-triangle table C[k][j], j <= min(k, jmax). Doubles hold these
// exactly up to C(57, 28) and to ~1e-16 relative beyond; the transforms that
// consume them tolerate that.
inline std::vector<std::vector<double>> binomial_table(int kmax, int jmax) {
    std::vector<std::vector<double>> c(std::size_t(kmax) + 1);
    for (int k = 0; k <= kmax; ++k) {
        int m = std::min(k, jmax);
        c[std::size_t(k)].assign(std::size_t(m) + 1, 0.0);
        c[std::size_t(k)][0] = 1.0;
        for (int j = 1; j <= m; ++j) {
            double left = (j <= std::min(k - 1, jmax)) ? c[std::size_t(k) - 1][std::size_t(j)] : 0.0;
            c[std::size_t(k)][std::size_t(j)] = left + c[std::size_t(k) - 1][std::size_t(j) - 1];
        }
    }
    return c;
}

// Regularized lower incomplete gamma P(a, x); series for x < a+1, continued
// fraction otherwise.
inline double gamma_p(double a, double x) {
    if (a <= 0.0) throw DomainError("gamma_p: shape must be positive");
    if (x < 0.0) throw DomainError("gamma_p: negative argument");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < 1000; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction for Q(a, x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

// Kummer 1F1(alpha, 2, z) for z >= 0: all terms positive, plain series.
inline double hyp1f1_2(double alpha, double z) {
    double term = 1.0;
    double sum = 1.0;
    for (int r = 1; r < 100000; ++r) {
        term *= (alpha + double(r) - 1.0) / ((2.0 + double(r) - 1.0)) * z / double(r);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

struct KahanSum {
    double sum = 0.0;
    double c = 0.0;
    void add(double x) {
        double y = x - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

inline bool nearly_normalized(double total, double slack = 1e-6) {
    return total > 1.0 - slack && total < 1.0 + slack;
}

} // namespace twb::detail
