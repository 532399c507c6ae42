#include "twb/intensity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <type_traits>
#include <utility>

#include "parallel.hpp"
#include "pmf_utils.hpp"
#include "special.hpp"
#include "twb/dist_core.hpp"

namespace twb {

namespace {

constexpr double kSingularThreshold = 0.5;
constexpr double kCoeffRelTol = 1e-6;
constexpr double kKernelTailTol = 1e-8;

std::size_t last_nonzero(const std::vector<double>& v) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] != 0.0) idx = i;
    return idx;
}

void require_normalized(double total) {
    if (!detail::nearly_normalized(total))
        throw DomainError("distribution is not normalized within tolerance");
}

void check_order(int K, std::size_t support_last) {
    if (K < 0) throw DomainError("series order K must be nonnegative");
    // beyond ~4x the support the transform only extrapolates noise
    if (std::size_t(K) > 4 * support_last + 64)
        throw DomainError("series order K far exceeds the distribution support");
}

// Signed and positive binomial transforms of a 1D pmf, in the given float type.
// a[k] = sum_j C(k,j)(-1)^j p(j), s[k] = sum_j C(k,j) p(j).
template <typename F>
void transform_1d(const std::vector<double>& p, int K, std::vector<F>& a, std::vector<F>& s) {
    std::size_t n = p.size();
    a.assign(std::size_t(K) + 1, F(0));
    s.assign(std::size_t(K) + 1, F(0));
    std::vector<F> row(n, F(0)), prev(n, F(0));
    for (int k = 0; k <= K; ++k) {
        std::size_t jmax = std::min(std::size_t(k), n - 1);
        if (k == 0) {
            row[0] = F(1);
        } else {
            for (std::size_t j = std::min(std::size_t(k), n - 1); j >= 1; --j)
                row[j] = prev[j] + prev[j - 1];
            row[0] = F(1);
        }
        F acc_a = F(0), acc_s = F(0);
        for (std::size_t j = 0; j <= jmax; ++j) {
            F t = row[j] * F(p[j]);
            acc_s += t;
            acc_a += (j % 2 == 0) ? t : -t;
        }
        a[std::size_t(k)] = acc_a;
        s[std::size_t(k)] = acc_s;
        prev = row;
    }
}

// 2D transform: a[k][l] = sum_{j,m} C(k,j) C(l,m) (-1)^{j+m} p(j,m).
// The positive companion s[k][l] tracks the cancellation budget.
template <typename F>
void transform_2d(const std::vector<double>& p, std::size_t rows, std::size_t cols, int K,
                  std::vector<F>& a, std::vector<F>& s) {
    std::size_t nk = std::size_t(K) + 1;
    // binomial tables as flat row-major [k * width + j]
    auto binom_rows = [](int kmax, std::size_t jcount) {
        std::vector<F> b(std::size_t(kmax + 1) * jcount, F(0));
        for (int k = 0; k <= kmax; ++k) {
            F* cur = &b[std::size_t(k) * jcount];
            cur[0] = F(1);
            if (k == 0) continue;
            const F* prev = &b[std::size_t(k - 1) * jcount];
            std::size_t jmax = std::min(std::size_t(k), jcount - 1);
            for (std::size_t j = jmax; j >= 1; --j) cur[j] = prev[j] + prev[j - 1];
        }
        return b;
    };
    std::vector<F> bs = binom_rows(K, rows);
    std::vector<F> bi = binom_rows(K, cols);

    // t_a[k][m] = sum_j C(k,j) (-1)^j p(j,m); t_s positive companion
    std::vector<F> ta(nk * cols, F(0)), ts(nk * cols, F(0));
    detail::parallel_for(nk, [&](std::size_t k) {
        const F* bk = &bs[k * rows];
        std::size_t jmax = std::min(k, rows - 1);
        for (std::size_t m = 0; m < cols; ++m) {
            F acc_a = F(0), acc_s = F(0);
            for (std::size_t j = 0; j <= jmax; ++j) {
                F t = bk[j] * F(p[j * cols + m]);
                acc_s += t;
                acc_a += (j % 2 == 0) ? t : -t;
            }
            ta[k * cols + m] = acc_a;
            ts[k * cols + m] = acc_s;
        }
    });
    a.assign(nk * nk, F(0));
    s.assign(nk * nk, F(0));
    detail::parallel_for(nk, [&](std::size_t k) {
        for (std::size_t l = 0; l < nk; ++l) {
            const F* bl = &bi[l * cols];
            std::size_t mmax = std::min(l, cols - 1);
            F acc_a = F(0), acc_s = F(0);
            for (std::size_t m = 0; m <= mmax; ++m) {
                F t = ta[k * cols + m] * bl[m];
                acc_a += (m % 2 == 0) ? t : -t;
                acc_s += ts[k * cols + m] * bl[m];
            }
            a[k * nk + l] = acc_a;
            s[k * nk + l] = acc_s;
        }
    });
}

// Damping-aware acceptance: error estimates are compared after the q^k
// attenuation they receive in the evaluated series.
template <typename F>
bool coeffs_acceptable(const std::vector<F>& a, const std::vector<F>& s,
                       const std::vector<F>& damp_weight) {
    F eps = std::numeric_limits<F>::epsilon();
    F max_mag = F(0), max_err = F(0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        F mag = std::abs(a[i]) * damp_weight[i];
        F err = s[i] * eps * damp_weight[i];
        max_mag = std::max(max_mag, mag);
        max_err = std::max(max_err, err);
    }
    return double(max_err) <= kCoeffRelTol * std::max(1.0, double(max_mag));
}

std::vector<long double> damp_weights_1d(int K, double q) {
    std::vector<long double> w(std::size_t(K) + 1);
    long double v = 1.0L;
    for (int k = 0; k <= K; ++k) {
        w[std::size_t(k)] = v;
        v *= (long double)(q);
    }
    return w;
}

std::vector<long double> damp_weights_2d(int K, double q) {
    std::vector<long double> one = damp_weights_1d(K, q);
    std::size_t nk = std::size_t(K) + 1;
    std::vector<long double> w(nk * nk);
    for (std::size_t k = 0; k < nk; ++k)
        for (std::size_t l = 0; l < nk; ++l) w[k * nk + l] = one[k] * one[l];
    return w;
}

// 1D coefficients with the double -> long double retry policy, returned
// already in long double.
std::vector<long double> coeffs_1d_internal(const std::vector<double>& p, int K, double q) {
    std::vector<long double> wts = damp_weights_1d(K, q);
    std::vector<double> wtsd(wts.begin(), wts.end());
    std::vector<double> ad, sd;
    transform_1d(p, K, ad, sd);
    if (coeffs_acceptable(ad, sd, wtsd)) return std::vector<long double>(ad.begin(), ad.end());
    std::vector<long double> al, sl;
    transform_1d(p, K, al, sl);
    if (!coeffs_acceptable(al, sl, wts))
        throw PrecisionError(
            "alternating binomial transform lost all precision; reduce K or add damping");
    return al;
}

std::vector<long double> coeffs_2d_internal(const std::vector<double>& p, std::size_t rows,
                                            std::size_t cols, int K, double q) {
    std::vector<long double> wts = damp_weights_2d(K, q);
    std::vector<double> wtsd(wts.begin(), wts.end());
    std::vector<double> ad, sd;
    transform_2d(p, rows, cols, K, ad, sd);
    if (coeffs_acceptable(ad, sd, wtsd)) return std::vector<long double>(ad.begin(), ad.end());
    std::vector<long double> al, sl;
    transform_2d(p, rows, cols, K, al, sl);
    if (!coeffs_acceptable(al, sl, wts))
        throw PrecisionError(
            "alternating binomial transform lost all precision; reduce K or add damping");
    return al;
}

void check_singular_1d(const std::vector<long double>& a, double q) {
    int K = int(a.size()) - 1;
    double boundary = double(std::abs(a[std::size_t(K)]) * std::pow((long double)(q), K));
    if (boundary > kSingularThreshold) {
        std::ostringstream msg;
        msg << "coefficient sequence does not decay (|a_K| q^K = " << boundary
            << " at K = " << K << "): quasi-distribution singular or near-singular";
        throw SingularError(msg.str());
    }
}

double boundary_max_2d(const std::vector<long double>& a, int K, double q) {
    std::size_t nk = std::size_t(K) + 1;
    std::vector<long double> w = damp_weights_1d(K, q);
    long double worst = 0.0L;
    for (std::size_t k = 0; k < nk; ++k) {
        worst = std::max(worst, std::abs(a[k * nk + (nk - 1)]) * w[k] * w[nk - 1]);
        worst = std::max(worst, std::abs(a[(nk - 1) * nk + k]) * w[nk - 1] * w[k]);
    }
    return double(worst);
}

void check_singular_2d(const std::vector<long double>& a, int K, double q,
                       std::vector<std::string>* flags) {
    double boundary = boundary_max_2d(a, K, q);
    if (boundary > kSingularThreshold) {
        std::ostringstream msg;
        msg << "coefficient sequence does not decay (boundary max |a_kl| q^(k+l) = " << boundary
            << " at K = " << K << "): quasi-distribution singular or near-singular";
        throw SingularError(msg.str());
    }
    if (flags && boundary > 0.5 * kSingularThreshold) flags->push_back("near-singular");
}

// L_k(W) for k = 0..K by the three-term recurrence, one column per grid point.
std::vector<long double> laguerre_rows(int K, const std::vector<double>& axis) {
    std::size_t g = axis.size();
    std::size_t nk = std::size_t(K) + 1;
    std::vector<long double> rows(nk * g);
    for (std::size_t j = 0; j < g; ++j) {
        long double w = axis[j];
        rows[j] = 1.0L;
        if (K >= 1) rows[g + j] = 1.0L - w;
        for (int k = 1; k < K; ++k)
            rows[std::size_t(k + 1) * g + j] =
                ((2.0L * k + 1.0L - w) * rows[std::size_t(k) * g + j] -
                 (long double)(k)*rows[std::size_t(k - 1) * g + j]) /
                (long double)(k + 1);
    }
    return rows;
}

void check_finite(const std::vector<double>& values) {
    for (double v : values)
        if (!std::isfinite(v))
            throw PrecisionError("non-finite grid value: series truncation insufficient");
}

// values[gs][gi] = sum_{k,l} a[k][l] q^{k+l} L_k(Ws) L_l(Wi)
std::vector<double> eval_grid_2d(const std::vector<long double>& a, int K, double q,
                                 const std::vector<double>& axis_s,
                                 const std::vector<double>& axis_i) {
    std::size_t nk = std::size_t(K) + 1;
    std::size_t gs = axis_s.size(), gi = axis_i.size();
    std::vector<long double> wts = damp_weights_1d(K, q);
    std::vector<long double> ls = laguerre_rows(K, axis_s);
    std::vector<long double> li = laguerre_rows(K, axis_i);

    std::vector<long double> t(nk * gi, 0.0L);
    detail::parallel_for(nk, [&](std::size_t k) {
        for (std::size_t j = 0; j < gi; ++j) {
            long double acc = 0.0L;
            for (std::size_t l = 0; l < nk; ++l)
                acc += a[k * nk + l] * wts[l] * li[l * gi + j];
            t[k * gi + j] = acc * wts[k];
        }
    });
    std::vector<double> out(gs * gi, 0.0);
    detail::parallel_for(gs, [&](std::size_t i) {
        for (std::size_t j = 0; j < gi; ++j) {
            long double acc = 0.0L;
            for (std::size_t k = 0; k < nk; ++k) acc += ls[k * gs + i] * t[k * gi + j];
            out[i * gi + j] = double(acc);
        }
    });
    return out;
}

std::vector<double> make_axis(double w_max, std::size_t points, double mean) {
    if (points < 2) throw DomainError("grid needs at least 2 points per axis");
    double top = w_max > 0.0 ? w_max : 5.0 * (mean + 1.0);
    if (!(top > 0.0) || !std::isfinite(top)) throw DomainError("invalid grid extent");
    std::vector<double> axis(points);
    for (std::size_t i = 0; i < points; ++i)
        axis[i] = top * double(i) / double(points - 1);
    return axis;
}

double table_axis_mean(const std::vector<double>& p, std::size_t rows, std::size_t cols,
                       bool along_rows) {
    double m = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m += p[i * cols + j] * double(along_rows ? i : j);
    return m;
}

double uniform_step(const std::vector<double>& axis) {
    double h = axis[1] - axis[0];
    for (std::size_t i = 1; i + 1 < axis.size(); ++i)
        if (std::abs((axis[i + 1] - axis[i]) - h) > 1e-9 * std::max(1.0, h))
            throw DomainError("operation requires a uniform grid");
    return h;
}

// Mass of Gamma(shape mu, scale b) in cells centred on the grid points; the
// first cell owns [0, h/2). Tail beyond the grid is truncated.
std::vector<double> gamma_cell_masses(double mu, double b, const std::vector<double>& axis) {
    std::vector<double> m(axis.size(), 0.0);
    if (b == 0.0) {
        m[0] = 1.0;
        return m;
    }
    double h = uniform_step(axis);
    double prev_cdf = 0.0;
    for (std::size_t i = 0; i < axis.size(); ++i) {
        double hi = (i + 1 < axis.size()) ? 0.5 * (axis[i] + axis[i + 1]) : axis.back() + h / 2.0;
        double cdf = detail::gamma_p(mu, hi / b);
        m[i] = cdf - prev_cdf;
        prev_cdf = cdf;
    }
    return m;
}

double simpson_adaptive(const std::function<double(double)>& f, double lo, double hi, double flo,
                        double fmid, double fhi, double acc, double tol, int depth) {
    double m1 = 0.5 * (lo + 0.5 * (lo + hi));
    double m2 = 0.5 * (0.5 * (lo + hi) + hi);
    double f1 = f(m1), f2 = f(m2);
    double mid = 0.5 * (lo + hi);
    double left = (mid - lo) / 6.0 * (flo + 4.0 * f1 + fmid);
    double right = (hi - mid) / 6.0 * (fmid + 4.0 * f2 + fhi);
    double whole = left + right;
    if (depth <= 0 || std::abs(whole - acc) < 15.0 * tol) return whole + (whole - acc) / 15.0;
    return simpson_adaptive(f, lo, mid, flo, f1, fmid, left, tol / 2.0, depth - 1) +
           simpson_adaptive(f, mid, hi, fmid, f2, fhi, right, tol / 2.0, depth - 1);
}

double integrate_cell(const std::function<double(double)>& f, double lo, double hi, double tol) {
    double flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
    double acc = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    return simpson_adaptive(f, lo, hi, flo, fmid, fhi, acc, tol, 28);
}

// Damping multiplier of one Mandel-Rice noise factor: in the Laplace domain
// Abel damping is a Moebius substitution, and the factor's multiplier
// M(s) = ((1 + beta2 s)/(1 + beta1 s))^mu with beta1 = (1+b-q)/q,
// beta2 = (1-q)/q. As a measure on W this is an atom c0 = (beta2/beta1)^mu at
// the origin plus the density c0 mu x e^{-a w} 1F1(1+mu, 2, x w),
// a = 1/beta2, x = a - 1/beta1 (Kummer-transformed: all series terms
// positive). At q = 1 it degenerates to the plain Gamma(mu, b) masses.
std::vector<double> multiplier_masses(double mu, double b, double q,
                                      const std::vector<double>& axis) {
    if (b == 0.0 || q >= 1.0) return gamma_cell_masses(mu, b, axis);
    double beta1 = (1.0 + b - q) / q;
    double beta2 = (1.0 - q) / q;
    double a = 1.0 / beta2;
    double x = a - 1.0 / beta1;
    double c0 = std::pow(beta2 / beta1, mu);
    double lgmu1 = std::lgamma(1.0 + mu);
    std::function<double(double)> f = [=](double w) {
        double z = x * w;
        if (z > 600.0) {
            // leading asymptotic term of 1F1(1+mu, 2, z), valid to ~1e-12 here
            double lg = z + (mu - 1.0) * std::log(z) - lgmu1;
            return c0 * mu * x * std::exp(-a * w + lg);
        }
        return c0 * mu * x * std::exp(-a * w) * detail::hyp1f1_2(1.0 + mu, z);
    };
    double h = uniform_step(axis);
    std::vector<double> m(axis.size(), 0.0);
    double lo = 0.0;
    for (std::size_t i = 0; i < axis.size(); ++i) {
        double hi = (i + 1 < axis.size()) ? 0.5 * (axis[i] + axis[i + 1]) : axis.back() + h / 2.0;
        m[i] = integrate_cell(f, lo, hi, 1e-13);
        lo = hi;
    }
    m[0] += c0;
    return m;
}

// Truncated axis convolution with cell masses: out[i] = sum_c mass[c] in[i-c].
void convolve_axis_s(std::vector<double>& g, std::size_t rows, std::size_t cols,
                     const std::vector<double>& mass) {
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t c = 0; c < std::min(mass.size(), rows); ++c) {
        if (mass[c] < 1e-16) continue;
        for (std::size_t i = c; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += mass[c] * g[(i - c) * cols + j];
    }
    g.swap(out);
}

void convolve_axis_i(std::vector<double>& g, std::size_t rows, std::size_t cols,
                     const std::vector<double>& mass) {
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t c = 0; c < std::min(mass.size(), cols); ++c) {
        if (mass[c] < 1e-16) continue;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = c; j < cols; ++j) out[i * cols + j] += mass[c] * g[i * cols + (j - c)];
    }
    g.swap(out);
}

// beta[k][n] = transform coefficient of Binomial(n, eta):
// (1-eta)^n sum_m (-1)^m C(k,m) C(n,m) rho^m, rho = eta/(1-eta). The m-sum
// has small dynamic range for the efficiencies of interest; eta = 1
// degenerates to (-1)^n C(k,n). Positive companion in *abs for the
// cancellation budget.
void beta_tables(int K, std::size_t nmax, double eta, std::vector<long double>& val,
                 std::vector<long double>& abs_sum) {
    std::size_t nk = std::size_t(K) + 1;
    val.assign(nk * (nmax + 1), 0.0L);
    abs_sum.assign(nk * (nmax + 1), 0.0L);
    if (eta == 1.0) {
        auto bt = detail::binomial_table(K, int(nmax));
        for (std::size_t k = 0; k < nk; ++k)
            for (std::size_t n = 0; n <= std::min(std::size_t(K), nmax); ++n) {
                if (n >= bt[k].size()) continue;
                long double c = bt[k][n];
                val[k * (nmax + 1) + n] = (n % 2 == 0) ? c : -c;
                abs_sum[k * (nmax + 1) + n] = c;
            }
        return;
    }
    long double rho = (long double)(eta) / (1.0L - (long double)(eta));
    for (std::size_t n = 0; n <= nmax; ++n) {
        long double pref = std::pow(1.0L - (long double)(eta), (long double)(n));
        for (std::size_t k = 0; k < nk; ++k) {
            long double term = 1.0L, acc = 1.0L, pos = 1.0L;
            std::size_t mtop = std::min(k, n);
            for (std::size_t m = 1; m <= mtop; ++m) {
                term *= (long double)(k - m + 1) * (long double)(n - m + 1) /
                        ((long double)(m) * (long double)(m)) * rho;
                pos += term;
                acc += (m % 2 == 0) ? term : -term;
            }
            val[k * (nmax + 1) + n] = pref * acc;
            abs_sum[k * (nmax + 1) + n] = pref * pos;
        }
    }
}

IntensityGrid assemble_grid(std::vector<double> axis_s, std::vector<double> axis_i,
                            std::vector<double> values, int K, double q,
                            std::vector<std::string> flags) {
    check_finite(values);
    IntensityGrid g;
    g.axis_s = std::move(axis_s);
    g.axis_i = std::move(axis_i);
    g.values = std::move(values);
    g.order = K;
    g.damping = q;
    g.flags = std::move(flags);
    return g;
}

void check_damping(double q) {
    if (!(q > 0.0) || q > 1.0) throw DomainError("damping must lie in (0, 1]");
}

// ---- forward Mandel quadrature helpers ----

std::vector<double> quad_weights(const std::vector<double>& axis) {
    std::size_t n = axis.size();
    if (n < 3) throw DomainError("forward check needs at least 3 grid points");
    double h = uniform_step(axis);
    std::vector<double> w(n, 0.0);
    std::size_t simpson_end = (n % 2 == 1) ? n - 1 : n - 2; // last index of the Simpson block
    for (std::size_t i = 0; i < simpson_end; i += 2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if (n % 2 == 0) { // trapezoid on the final interval
        w[n - 2] += h / 2.0;
        w[n - 1] += h / 2.0;
    }
    return w;
}

double kernel_value(int n, double w) {
    if (w == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::exp(-w + double(n) * std::log(w) - std::lgamma(double(n) + 1.0));
}

// literal coverage rule: the Poisson kernel for count n must leave no more
// than 1e-8 of its mass past the grid; tail negligibility of the
// quasi-distribution itself is the caller's precondition
int resolve_n_max(int requested, double w_max) {
    if (requested >= 0) {
        if (detail::gamma_q(double(requested) + 1.0, w_max) > kKernelTailTol) {
            std::ostringstream msg;
            msg << "kernel mass for n = " << requested << " beyond W_max = " << w_max
                << " exceeds " << kKernelTailTol << "; widen the grid";
            throw CoverageError(msg.str());
        }
        return requested;
    }
    int n = -1;
    while (n < 100000 && detail::gamma_q(double(n) + 2.0, w_max) <= kKernelTailTol) ++n;
    if (n < 0)
        throw CoverageError("grid W_max covers no count kernel to the required tail tolerance");
    return n;
}

} // namespace

std::vector<double> laguerre_series_coeffs_1d(const Distribution1D& p, int K) {
    if (p.probs.empty()) throw DomainError("empty distribution");
    if (p.offset != 0) throw DomainError("intensity inversion requires counts starting at 0");
    require_normalized(p.sum());
    std::size_t support = last_nonzero(p.probs);
    if (K < 0) K = int(support);
    check_order(K, support);

    // strict undamped contract: per-order relative error estimate <= 1e-6
    auto strict_ok = [&](const auto& a, const auto& s) {
        using F = std::decay_t<decltype(a[0])>;
        F eps = std::numeric_limits<F>::epsilon();
        for (std::size_t k = 0; k < a.size(); ++k) {
            double rel = double(s[k] * eps) / std::max(std::abs(double(a[k])), 1e-9);
            if (rel > kCoeffRelTol) return false;
        }
        return true;
    };
    std::vector<double> ad, sd;
    transform_1d(p.probs, K, ad, sd);
    if (strict_ok(ad, sd)) return ad;
    std::vector<long double> al, sl;
    transform_1d(p.probs, K, al, sl);
    if (!strict_ok(al, sl))
        throw PrecisionError(
            "alternating binomial transform: relative error estimate above 1e-6; reduce K");
    return std::vector<double>(al.begin(), al.end());
}

std::vector<double> invert_mandel_1d(const Distribution1D& p, int K,
                                     const std::vector<double>& axis, double damping) {
    if (p.probs.empty()) throw DomainError("empty distribution");
    if (p.offset != 0) throw DomainError("intensity inversion requires counts starting at 0");
    if (axis.empty()) throw DomainError("empty axis");
    for (std::size_t i = 0; i + 1 < axis.size(); ++i)
        if (!(axis[i + 1] > axis[i])) throw DomainError("axis must be strictly increasing");
    if (axis.front() < 0.0) throw DomainError("axis must be nonnegative");
    check_damping(damping);
    require_normalized(p.sum());
    std::size_t support = last_nonzero(p.probs);
    if (K < 0) K = int(support);
    check_order(K, support);

    std::vector<long double> a = coeffs_1d_internal(p.probs, K, damping);
    check_singular_1d(a, damping);
    std::vector<long double> wts = damp_weights_1d(K, damping);
    std::vector<long double> rows = laguerre_rows(K, axis);
    std::vector<double> out(axis.size(), 0.0);
    for (std::size_t j = 0; j < axis.size(); ++j) {
        long double acc = 0.0L;
        for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * wts[k] * rows[k * axis.size() + j];
        out[j] = double(acc);
    }
    check_finite(out);
    return out;
}

IntensityGrid invert_mandel_2d(const JointDistribution& p, int K, const GridSpec& spec,
                               double damping) {
    if (p.rows == 0 || p.cols == 0) throw DomainError("empty distribution");
    check_damping(damping);
    require_normalized(p.sum());

    std::size_t support = 0;
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j)
            if (p.probs[i * p.cols + j] != 0.0) support = std::max(support, std::max(i, j));
    if (K < 0) K = int(support);
    check_order(K, support);

    std::vector<double> axis_s =
        make_axis(spec.w_max_s, spec.points, table_axis_mean(p.probs, p.rows, p.cols, true));
    std::vector<double> axis_i =
        make_axis(spec.w_max_i, spec.points, table_axis_mean(p.probs, p.rows, p.cols, false));

    std::vector<long double> a = coeffs_2d_internal(p.probs, p.rows, p.cols, K, damping);
    std::vector<std::string> flags;
    check_singular_2d(a, K, damping, &flags);
    std::vector<double> values = eval_grid_2d(a, K, damping, axis_s, axis_i);
    return assemble_grid(std::move(axis_s), std::move(axis_i), std::move(values), K, damping,
                         std::move(flags));
}

IntensityGrid detected_intensity_quasi(const JointHistogram& h, int K, const GridSpec& spec,
                                       double damping) {
    if (h.counts.empty() || h.shots <= 0.0) throw DomainError("empty histogram");
    JointDistribution p;
    p.rows = h.rows;
    p.cols = h.cols;
    p.label = CountLabel::detected;
    p.probs.resize(h.counts.size());
    double total = 0.0;
    for (double c : h.counts) {
        if (c < 0.0 || !std::isfinite(c)) throw DomainError("negative or non-finite count");
        total += c;
    }
    if (!(total > 0.0)) throw DomainError("histogram has no counts");
    for (std::size_t i = 0; i < h.counts.size(); ++i) p.probs[i] = h.counts[i] / total;
    IntensityGrid g = invert_mandel_2d(p, K, spec, damping);
    g.flags.push_back("detected-field");
    return g;
}

IntensityGrid model_quasi_convolution(const TwbModel& m, int K, const GridSpec& spec,
                                      double damping, CountLabel level) {
    validate(m);
    check_damping(damping);
    if (K < 0) throw DomainError("series order K must be nonnegative");

    double eta_s = level == CountLabel::detected ? m.eta_s : 1.0;
    double eta_i = level == CountLabel::detected ? m.eta_i : 1.0;
    double mean_s = eta_s * (m.paired.mu * m.paired.b + m.noise_s.mu * m.noise_s.b);
    double mean_i = eta_i * (m.paired.mu * m.paired.b + m.noise_i.mu * m.noise_i.b);
    std::vector<double> axis_s = make_axis(spec.w_max_s, spec.points, mean_s);
    std::vector<double> axis_i = make_axis(spec.w_max_i, spec.points, mean_i);

    // paired-part coefficients through the regrouped thinned form: the direct
    // alternating transform is unusable at the orders the damped detected
    // series needs
    std::vector<double> pair = detail::pmf_vector(m.paired, 1e-13);
    std::size_t nmax = pair.size() - 1;
    std::size_t nk = std::size_t(K) + 1;
    std::vector<long double> bs, bs_abs, bi, bi_abs;
    beta_tables(K, nmax, eta_s, bs, bs_abs);
    beta_tables(K, nmax, eta_i, bi, bi_abs);

    std::vector<long double> a(nk * nk, 0.0L), s(nk * nk, 0.0L);
    detail::parallel_for(nk, [&](std::size_t k) {
        for (std::size_t l = 0; l < nk; ++l) {
            long double acc = 0.0L, pos = 0.0L;
            for (std::size_t n = 0; n <= nmax; ++n) {
                long double w = pair[n];
                if (w == 0.0L) continue;
                acc += w * bs[k * (nmax + 1) + n] * bi[l * (nmax + 1) + n];
                pos += w * bs_abs[k * (nmax + 1) + n] * bi_abs[l * (nmax + 1) + n];
            }
            a[k * nk + l] = acc;
            s[k * nk + l] = pos;
        }
    });
    if (!coeffs_acceptable(a, s, damp_weights_2d(K, damping)))
        throw PrecisionError("paired-part coefficients lost all precision; reduce K or damping");
    std::vector<std::string> flags;
    check_singular_2d(a, K, damping, &flags);

    std::vector<double> values = eval_grid_2d(a, K, damping, axis_s, axis_i);

    std::vector<double> mass_s =
        multiplier_masses(m.noise_s.mu, eta_s * m.noise_s.b, damping, axis_s);
    std::vector<double> mass_i =
        multiplier_masses(m.noise_i.mu, eta_i * m.noise_i.b, damping, axis_i);
    convolve_axis_s(values, axis_s.size(), axis_i.size(), mass_s);
    convolve_axis_i(values, axis_s.size(), axis_i.size(), mass_i);

    if (level == CountLabel::detected) flags.push_back("detected-field");
    return assemble_grid(std::move(axis_s), std::move(axis_i), std::move(values), K, damping,
                         std::move(flags));
}

Distribution1D forward_mandel_check_1d(const std::vector<double>& axis,
                                       const std::vector<double>& values, int n_max) {
    if (axis.size() != values.size()) throw DomainError("axis/value size mismatch");
    if (axis.empty() || axis.front() != 0.0)
        throw DomainError("forward check requires a grid starting at 0");
    std::vector<double> w = quad_weights(axis);
    int top = resolve_n_max(n_max, axis.back());

    Distribution1D out;
    out.probs.assign(std::size_t(top) + 1, 0.0);
    for (int n = 0; n <= top; ++n) {
        detail::KahanSum acc;
        for (std::size_t j = 0; j < axis.size(); ++j)
            acc.add(w[j] * kernel_value(n, axis[j]) * values[j]);
        out.probs[std::size_t(n)] = acc.sum;
    }
    return out;
}

JointDistribution forward_mandel_check(const IntensityGrid& g, int n_max_s, int n_max_i) {
    if (g.axis_s.empty() || g.axis_i.empty()) throw DomainError("empty grid");
    if (g.axis_s.front() != 0.0 || g.axis_i.front() != 0.0)
        throw DomainError("forward check requires grids starting at 0");
    std::vector<double> ws = quad_weights(g.axis_s);
    std::vector<double> wi = quad_weights(g.axis_i);
    std::size_t rows = g.axis_s.size(), cols = g.axis_i.size();
    int top_s = resolve_n_max(n_max_s, g.axis_s.back());
    int top_i = resolve_n_max(n_max_i, g.axis_i.back());

    // cache kernels: ks[n][gs], ki[n][gi]
    std::vector<double> ks(std::size_t(top_s + 1) * rows), ki(std::size_t(top_i + 1) * cols);
    for (int n = 0; n <= top_s; ++n)
        for (std::size_t j = 0; j < rows; ++j)
            ks[std::size_t(n) * rows + j] = ws[j] * kernel_value(n, g.axis_s[j]);
    for (int n = 0; n <= top_i; ++n)
        for (std::size_t j = 0; j < cols; ++j)
            ki[std::size_t(n) * cols + j] = wi[j] * kernel_value(n, g.axis_i[j]);

    // contract the signal axis first: t[ns][gi]
    std::vector<double> t(std::size_t(top_s + 1) * cols, 0.0);
    detail::parallel_for(std::size_t(top_s) + 1, [&](std::size_t n) {
        for (std::size_t j = 0; j < cols; ++j) {
            detail::KahanSum acc;
            for (std::size_t i = 0; i < rows; ++i)
                acc.add(ks[n * rows + i] * g.values[i * cols + j]);
            t[n * cols + j] = acc.sum;
        }
    });
    JointDistribution out;
    out.rows = std::size_t(top_s) + 1;
    out.cols = std::size_t(top_i) + 1;
    out.label = std::find(g.flags.begin(), g.flags.end(), "detected-field") != g.flags.end()
                    ? CountLabel::detected
                    : CountLabel::photons;
    out.probs.assign(out.rows * out.cols, 0.0);
    detail::parallel_for(out.rows, [&](std::size_t n) {
        for (std::size_t mcol = 0; mcol < out.cols; ++mcol) {
            detail::KahanSum acc;
            for (std::size_t j = 0; j < cols; ++j) acc.add(ki[mcol * cols + j] * t[n * cols + j]);
            out.probs[n * out.cols + mcol] = acc.sum;
        }
    });
    return out;
}

namespace {

struct Segment {
    double x0, y0, x1, y1;
};

// zero crossing between two corner values of opposite sign
double cross_t(double va, double vb) { return va / (va - vb); }

void cell_segments(double ws0, double ws1, double wi0, double wi1, double v00, double v01,
                   double v10, double v11, std::vector<Segment>& segs) {
    // corner layout: v[s][i]; edges: bottom (i fixed at wi0), top, left, right
    auto pos = [](double v) { return v > 0.0; };
    int mask = (pos(v00) ? 1 : 0) | (pos(v10) ? 2 : 0) | (pos(v11) ? 4 : 0) | (pos(v01) ? 8 : 0);
    if (mask == 0 || mask == 15) return;

    // interpolated crossing points on the four cell edges
    auto bottom = [&] { return std::pair<double, double>(ws0 + cross_t(v00, v10) * (ws1 - ws0), wi0); };
    auto top = [&] { return std::pair<double, double>(ws0 + cross_t(v01, v11) * (ws1 - ws0), wi1); };
    auto left = [&] { return std::pair<double, double>(ws0, wi0 + cross_t(v00, v01) * (wi1 - wi0)); };
    auto right = [&] { return std::pair<double, double>(ws1, wi0 + cross_t(v10, v11) * (wi1 - wi0)); };

    auto add = [&](std::pair<double, double> a, std::pair<double, double> b) {
        segs.push_back({a.first, a.second, b.first, b.second});
    };
    switch (mask) {
        case 1: case 14: add(bottom(), left()); break;
        case 2: case 13: add(bottom(), right()); break;
        case 3: case 12: add(left(), right()); break;
        case 4: case 11: add(top(), right()); break;
        case 6: case 9: add(bottom(), top()); break;
        case 7: case 8: add(top(), left()); break;
        case 5: case 10: {
            // saddle: split by the sign of the cell centre
            double centre = 0.25 * (v00 + v01 + v10 + v11);
            bool centre_pos = centre > 0.0;
            if ((mask == 5) == centre_pos) {
                add(left(), top());
                add(bottom(), right());
            } else {
                add(left(), bottom());
                add(top(), right());
            }
            break;
        }
        default: break;
    }
}

std::vector<ZeroContour> chain_segments(std::vector<Segment> segs, double scale) {
    // merge endpoints on a quantized lattice
    auto key = [scale](double x, double y) {
        return std::pair<std::int64_t, std::int64_t>(std::llround(x / scale * 1e7),
                                                     std::llround(y / scale * 1e7));
    };
    std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> ends;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        ends[key(segs[i].x0, segs[i].y0)].push_back(i);
        ends[key(segs[i].x1, segs[i].y1)].push_back(i);
    }
    std::vector<bool> used(segs.size(), false);
    std::vector<ZeroContour> out;
    for (std::size_t start = 0; start < segs.size(); ++start) {
        if (used[start]) continue;
        used[start] = true;
        std::vector<std::pair<double, double>> pts{{segs[start].x0, segs[start].y0},
                                                   {segs[start].x1, segs[start].y1}};
        // extend forward from the tail, then backward from the head
        for (int dir = 0; dir < 2; ++dir) {
            for (;;) {
                auto tail = dir == 0 ? pts.back() : pts.front();
                auto it = ends.find(key(tail.first, tail.second));
                std::size_t next = segs.size();
                if (it != ends.end())
                    for (std::size_t cand : it->second)
                        if (!used[cand]) {
                            next = cand;
                            break;
                        }
                if (next == segs.size()) break;
                used[next] = true;
                auto a = std::pair<double, double>(segs[next].x0, segs[next].y0);
                auto b = std::pair<double, double>(segs[next].x1, segs[next].y1);
                auto joint = key(tail.first, tail.second) == key(a.first, a.second) ? b : a;
                if (dir == 0)
                    pts.push_back(joint);
                else
                    pts.insert(pts.begin(), joint);
            }
        }
        ZeroContour c;
        c.points = std::move(pts);
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace

NegativityReport negativity_report(const IntensityGrid& g, double eps_neg) {
    if (g.axis_s.empty() || g.axis_i.empty() || g.values.empty())
        throw DomainError("empty grid");
    check_finite(g.values);
    NegativityReport rep;
    rep.eps_neg = eps_neg;
    rep.min_value = std::numeric_limits<double>::infinity();
    std::size_t rows = g.axis_s.size(), cols = g.axis_i.size();
    std::size_t below = 0;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            double v = g.at(i, j);
            if (v < rep.min_value) {
                rep.min_value = v;
                rep.min_location = {g.axis_s[i], g.axis_i[j]};
            }
            if (v < -eps_neg) ++below;
        }
    rep.negative_fraction = double(below) / double(rows * cols);

    std::vector<Segment> segs;
    for (std::size_t i = 0; i + 1 < rows; ++i)
        for (std::size_t j = 0; j + 1 < cols; ++j)
            cell_segments(g.axis_s[i], g.axis_s[i + 1], g.axis_i[j], g.axis_i[j + 1], g.at(i, j),
                          g.at(i, j + 1), g.at(i + 1, j), g.at(i + 1, j + 1), segs);
    double scale = std::max(g.axis_s.back() - g.axis_s.front(), g.axis_i.back() - g.axis_i.front());
    if (!segs.empty()) rep.zero_contours = chain_segments(std::move(segs), scale);
    return rep;
}

} // namespace twb
