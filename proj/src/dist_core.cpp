#include "twb/dist_core.hpp"

#include <algorithm>
#include <cmath>

#include "pmf_utils.hpp"
#include "special.hpp"

namespace twb {

double JointDistribution::sum() const {
    detail::KahanSum k;
    for (double v : probs) k.add(v);
    return k.sum;
}

double Distribution1D::sum() const {
    detail::KahanSum k;
    for (double v : probs) k.add(v);
    return k.sum;
}

double Distribution1D::mean() const {
    detail::KahanSum k;
    for (std::size_t i = 0; i < probs.size(); ++i)
        k.add((double(i) - double(offset)) * probs[i]);
    return k.sum;
}

double Distribution1D::variance() const {
    double m = mean();
    detail::KahanSum k;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double d = double(i) - double(offset) - m;
        k.add(d * d * probs[i]);
    }
    return k.sum;
}

void validate(const ModeParams& p) {
    if (!(p.mu > 0.0) || !std::isfinite(p.mu)) throw DomainError("mode number mu must be positive");
    if (!(p.b >= 0.0) || !std::isfinite(p.b)) throw DomainError("per-mode mean b must be nonnegative");
}

void validate(const TwbModel& m) {
    validate(m.paired);
    validate(m.noise_s);
    validate(m.noise_i);
    if (!(m.eta_s >= 0.0 && m.eta_s <= 1.0)) throw DomainError("eta_s outside [0,1]");
    if (!(m.eta_i >= 0.0 && m.eta_i <= 1.0)) throw DomainError("eta_i outside [0,1]");
}

double mandel_rice_pmf(std::int64_t n, const ModeParams& p) {
    validate(p);
    if (n < 0) return 0.0;
    if (p.b == 0.0) return n == 0 ? 1.0 : 0.0;
    // log form keeps mu as small as 1e-4 and n in the hundreds in range
    double nn = double(n);
    double lg = std::lgamma(nn + p.mu) - std::lgamma(nn + 1.0) - std::lgamma(p.mu) +
                nn * std::log(p.b) - (nn + p.mu) * std::log1p(p.b);
    return std::exp(lg);
}

double multithermal_pmf(std::int64_t n, double mean, double mu) {
    if (!(mean >= 0.0)) throw DomainError("mean photon number must be nonnegative");
    if (mean == 0.0) {
        if (!(mu > 0.0)) throw DomainError("mode number mu must be positive");
        return n == 0 ? 1.0 : 0.0; // vacuum by definition
    }
    return mandel_rice_pmf(n, ModeParams{mu, mean / mu});
}

std::size_t mandel_rice_cutoff(const ModeParams& p, double tail_tol) {
    validate(p);
    if (!(tail_tol > 0.0)) throw DomainError("tail tolerance must be positive");
    if (p.b == 0.0) return 1;
    double ratio_base = p.b / (1.0 + p.b);
    double pn = std::pow(1.0 + p.b, -p.mu); // p(0)
    double cum = pn;
    std::size_t n = 0;
    for (;;) {
        double r = (double(n) + p.mu) / (double(n) + 1.0) * ratio_base;
        // for mu < 1 the term ratios increase toward ratio_base, so the
        // geometric bound must use the larger of the two
        double rb = std::max(r, ratio_base);
        if (rb < 1.0) {
            double tail_bound = pn * rb / (1.0 - rb);
            if (tail_bound < tail_tol || 1.0 - cum < tail_tol) return n + 1;
        }
        pn *= r;
        cum += pn;
        ++n;
        if (n > 50000000) throw DomainError("cutoff search exceeded bounds");
    }
}

using detail::pmf_vector;

double joint_twb_pmf(std::int64_t n_s, std::int64_t n_i, const TwbModel& m) {
    validate(m);
    if (n_s < 0 || n_i < 0) return 0.0;
    std::int64_t top = std::min(n_s, n_i);
    detail::KahanSum acc;
    for (std::int64_t n = 0; n <= top; ++n) {
        double pp = mandel_rice_pmf(n, m.paired);
        if (pp == 0.0) continue;
        acc.add(pp * mandel_rice_pmf(n_s - n, m.noise_s) * mandel_rice_pmf(n_i - n, m.noise_i));
    }
    return acc.sum;
}

JointDistribution joint_distribution(const TwbModel& m, double tail_tol) {
    validate(m);
    // per-axis cutoff of the component sum via the union bound
    std::vector<double> pair = pmf_vector(m.paired, tail_tol / 4.0);
    std::vector<double> ns = pmf_vector(m.noise_s, tail_tol / 4.0);
    std::vector<double> ni = pmf_vector(m.noise_i, tail_tol / 4.0);

    JointDistribution out;
    out.rows = pair.size() + ns.size() - 1;
    out.cols = pair.size() + ni.size() - 1;
    out.label = CountLabel::photons;
    out.probs.assign(out.rows * out.cols, 0.0);
    for (std::size_t n = 0; n < pair.size(); ++n) {
        double pp = pair[n];
        if (pp == 0.0) continue;
        for (std::size_t a = 0; a < ns.size(); ++a) {
            double w = pp * ns[a];
            if (w == 0.0) continue;
            double* row = &out.at(n + a, n);
            for (std::size_t c = 0; c < ni.size(); ++c) row[c] += w * ni[c];
        }
    }
    return out;
}

double bernoulli_coefficient(std::int64_t m, std::int64_t n, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("efficiency outside [0,1]");
    if (m < 0 || n < 0 || m > n) return 0.0;
    if (eta == 0.0) return m == 0 ? 1.0 : 0.0;
    if (eta == 1.0) return m == n ? 1.0 : 0.0;
    double lg = detail::log_binomial(n, m) + double(m) * std::log(eta) +
                double(n - m) * std::log1p(-eta);
    return std::exp(lg);
}

namespace {

using detail::bernoulli_rows;
using detail::marginal_cutoff;

std::vector<double> thin_vector(const std::vector<double>& p, double eta) {
    std::vector<double> out(p.size(), 0.0);
    auto rows = bernoulli_rows(p.size() - 1, p.size() - 1, eta);
    for (std::size_t k = 0; k < out.size(); ++k) {
        detail::KahanSum acc;
        for (std::size_t n = k; n < p.size(); ++n) acc.add(rows[k][n] * p[n]);
        out[k] = acc.sum;
    }
    return out;
}

} // namespace

JointDistribution detect_transform(const JointDistribution& p, double eta_s, double eta_i) {
    if (!(eta_s >= 0.0 && eta_s <= 1.0) || !(eta_i >= 0.0 && eta_i <= 1.0))
        throw DomainError("efficiency outside [0,1]");
    if (p.rows == 0 || p.cols == 0) throw DomainError("empty distribution");

    if (eta_s == 1.0 && eta_i == 1.0) {
        JointDistribution out = p;
        out.label = CountLabel::detected;
        return out;
    }

    // output cutoffs from the thinned marginals, same tail rule
    Distribution1D ms = signal_marginal(p);
    Distribution1D mi = idler_marginal(p);
    std::vector<double> ts = thin_vector(ms.probs, eta_s);
    std::vector<double> ti = thin_vector(mi.probs, eta_i);
    double slack = std::max(1e-12, 1.0 - p.sum());
    std::size_t rows_d = marginal_cutoff(ts, kTailTol + slack);
    std::size_t cols_d = marginal_cutoff(ti, kTailTol + slack);

    auto bs = bernoulli_rows(rows_d - 1, p.rows - 1, eta_s);
    auto bi = bernoulli_rows(cols_d - 1, p.cols - 1, eta_i);

    // T1(j_s, l) = sum_{j_i} p(j_s, j_i) B(l, j_i)
    std::vector<double> t1(p.rows * cols_d, 0.0);
    for (std::size_t js = 0; js < p.rows; ++js) {
        const double* row = &p.probs[js * p.cols];
        for (std::size_t l = 0; l < cols_d; ++l) {
            detail::KahanSum acc;
            const std::vector<double>& bl = bi[l];
            for (std::size_t ji = l; ji < p.cols; ++ji) acc.add(row[ji] * bl[ji]);
            t1[js * cols_d + l] = acc.sum;
        }
    }
    JointDistribution out;
    out.rows = rows_d;
    out.cols = cols_d;
    out.label = CountLabel::detected;
    out.probs.assign(rows_d * cols_d, 0.0);
    for (std::size_t k = 0; k < rows_d; ++k) {
        const std::vector<double>& bk = bs[k];
        for (std::size_t l = 0; l < cols_d; ++l) {
            detail::KahanSum acc;
            for (std::size_t js = k; js < p.rows; ++js) acc.add(bk[js] * t1[js * cols_d + l]);
            out.at(k, l) = acc.sum;
        }
    }
    return out;
}

Distribution1D signal_marginal(const JointDistribution& p) {
    Distribution1D d;
    d.probs.assign(p.rows, 0.0);
    for (std::size_t i = 0; i < p.rows; ++i) {
        detail::KahanSum acc;
        for (std::size_t j = 0; j < p.cols; ++j) acc.add(p.at(i, j));
        d.probs[i] = acc.sum;
    }
    return d;
}

Distribution1D idler_marginal(const JointDistribution& p) {
    Distribution1D d;
    d.probs.assign(p.cols, 0.0);
    for (std::size_t j = 0; j < p.cols; ++j) {
        detail::KahanSum acc;
        for (std::size_t i = 0; i < p.rows; ++i) acc.add(p.at(i, j));
        d.probs[j] = acc.sum;
    }
    return d;
}

Distribution1D sum_marginal(const JointDistribution& p) {
    Distribution1D d;
    d.probs.assign(p.rows + p.cols - 1, 0.0);
    d.offset = 0;
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j) d.probs[i + j] += p.at(i, j);
    return d;
}

Distribution1D difference_marginal(const JointDistribution& p) {
    Distribution1D d;
    d.offset = std::int64_t(p.cols) - 1;
    d.probs.assign(p.rows + p.cols - 1, 0.0);
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j)
            d.probs[std::size_t(std::int64_t(i) - std::int64_t(j) + d.offset)] += p.at(i, j);
    return d;
}

namespace {

std::vector<double> poisson_vector(double mean, double tail_tol) {
    if (!(mean >= 0.0)) throw DomainError("Poisson mean must be nonnegative");
    if (mean == 0.0) return {1.0};
    std::vector<double> v;
    double pn = std::exp(-mean);
    double cum = 0.0;
    std::size_t n = 0;
    for (;;) {
        v.push_back(pn);
        cum += pn;
        double r = mean / double(n + 1);
        if (r < 1.0) {
            double tail_bound = pn * r / (1.0 - r);
            if (tail_bound < tail_tol || 1.0 - cum < tail_tol) break;
        }
        pn *= r;
        ++n;
    }
    return v;
}

} // namespace

JointDistribution poisson_reference(double mean_s, double mean_i, double tail_tol) {
    std::vector<double> ps = poisson_vector(mean_s, tail_tol / 2.0);
    std::vector<double> pi = poisson_vector(mean_i, tail_tol / 2.0);
    JointDistribution out;
    out.rows = ps.size();
    out.cols = pi.size();
    out.label = CountLabel::detected;
    out.probs.assign(out.rows * out.cols, 0.0);
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) = ps[i] * pi[j];
    return out;
}

double fidelity(const Distribution1D& p, const Distribution1D& q) {
    if (!detail::nearly_normalized(p.sum()) || !detail::nearly_normalized(q.sum()))
        throw DomainError("fidelity inputs must be normalized");
    std::int64_t lo = std::max(-p.offset, -q.offset);
    std::int64_t hi = std::min(std::int64_t(p.probs.size()) - p.offset,
                               std::int64_t(q.probs.size()) - q.offset);
    detail::KahanSum acc;
    for (std::int64_t v = lo; v < hi; ++v) {
        double a = p.probs[std::size_t(v + p.offset)];
        double b = q.probs[std::size_t(v + q.offset)];
        if (a > 0.0 && b > 0.0) acc.add(std::sqrt(a * b));
    }
    return acc.sum;
}

} // namespace twb
