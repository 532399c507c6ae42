#include "twb/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "parallel.hpp"
#include "twb/rng.hpp"

namespace twb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_shots(const JointHistogram& h) {
    if (h.shots <= 0.0 || h.counts.empty())
        throw UndefinedStatisticError("empty histogram");
}

// raw moment sums up to the orders H needs, one histogram pass
struct RawMoments {
    double n = 0;
    double s10 = 0, s01 = 0;
    double s20 = 0, s02 = 0, s11 = 0;
    double s12 = 0, s21 = 0;
    double s13 = 0, s31 = 0, s22 = 0;
    double sdiff2 = 0; // sum of (m_s - m_i)^2

    double m(int j, int k) const {
        if (j == 0 && k == 0) return 1.0;
        if (j == 1 && k == 0) return s10 / n;
        if (j == 0 && k == 1) return s01 / n;
        if (j == 2 && k == 0) return s20 / n;
        if (j == 0 && k == 2) return s02 / n;
        if (j == 1 && k == 1) return s11 / n;
        if (j == 1 && k == 2) return s12 / n;
        if (j == 2 && k == 1) return s21 / n;
        if (j == 1 && k == 3) return s13 / n;
        if (j == 3 && k == 1) return s31 / n;
        if (j == 2 && k == 2) return s22 / n;
        throw DomainError("moment order outside the supported set");
    }
};

RawMoments accumulate(const JointHistogram& h) {
    RawMoments r;
    // long double keeps third and fourth order products of counts exact
    long double n = 0, s10 = 0, s01 = 0, s20 = 0, s02 = 0, s11 = 0;
    long double s12 = 0, s21 = 0, s13 = 0, s31 = 0, s22 = 0, sdiff2 = 0;
    for (std::size_t i = 0; i < h.rows; ++i) {
        for (std::size_t j = 0; j < h.cols; ++j) {
            double c = h.at(i, j);
            if (c == 0.0) continue;
            long double ms = (long double)(i), mi = (long double)(j), w = c;
            n += w;
            s10 += w * ms;
            s01 += w * mi;
            s20 += w * ms * ms;
            s02 += w * mi * mi;
            s11 += w * ms * mi;
            s12 += w * ms * mi * mi;
            s21 += w * ms * ms * mi;
            s13 += w * ms * mi * mi * mi;
            s31 += w * ms * ms * ms * mi;
            s22 += w * ms * ms * mi * mi;
            long double d = ms - mi;
            sdiff2 += w * d * d;
        }
    }
    r.n = double(n);
    r.s10 = double(s10);
    r.s01 = double(s01);
    r.s20 = double(s20);
    r.s02 = double(s02);
    r.s11 = double(s11);
    r.s12 = double(s12);
    r.s21 = double(s21);
    r.s13 = double(s13);
    r.s31 = double(s31);
    r.s22 = double(s22);
    r.sdiff2 = double(sdiff2);
    return r;
}

double corr_from(const RawMoments& r) {
    double ms = r.m(1, 0), mi = r.m(0, 1);
    double vs = r.m(2, 0) - ms * ms;
    double vi = r.m(0, 2) - mi * mi;
    if (!(vs > 0.0) || !(vi > 0.0))
        throw UndefinedStatisticError("correlation undefined: zero marginal variance");
    return (r.m(1, 1) - ms * mi) / std::sqrt(vs * vi);
}

double noise_reduction_from(const RawMoments& r) {
    double ms = r.m(1, 0), mi = r.m(0, 1);
    double total = ms + mi;
    if (!(total > 0.0)) throw UndefinedStatisticError("noise reduction undefined: zero total mean");
    double d = ms - mi;
    double var_diff = r.sdiff2 / r.n - d * d;
    return var_diff / total;
}

double schwarz_from(const RawMoments& r) {
    double f20 = r.m(2, 0) - r.m(1, 0); // <m(m-1)>
    double f02 = r.m(0, 2) - r.m(0, 1);
    if (!(f20 > 0.0) || !(f02 > 0.0))
        throw UndefinedStatisticError("Schwarz ratio undefined: vanishing normally ordered moment");
    return r.m(1, 1) / std::sqrt(f20 * f02);
}

double h_from(const RawMoments& r) {
    double ms = r.m(1, 0), mi = r.m(0, 1);
    double g11 = r.m(1, 1) / (ms * mi);
    if (!std::isfinite(g11) || !(r.m(1, 1) > 0.0))
        throw UndefinedStatisticError("H undefined: vanishing cross moment");
    double g22 = r.m(2, 2) / (ms * ms * mi * mi);
    double g13 = r.m(1, 3) / (ms * mi * mi * mi);
    double g31 = r.m(3, 1) / (ms * ms * ms * mi);
    double g12 = r.m(1, 2) / (ms * mi * mi);
    double g21 = r.m(2, 1) / (ms * ms * mi);
    double g13s = 0.5 * (g13 + g31);
    double g12s = 0.5 * (g12 + g21);
    return ms * mi * (g22 - g13s) / g11 + std::sqrt(ms * mi) * g12s / g11;
}

Verdict verdict_less(double value, double threshold) {
    if (value < threshold) return Verdict::nonclassical;
    if (value > threshold) return Verdict::classical;
    return Verdict::inconclusive;
}

Verdict verdict_greater(double value, double threshold) {
    if (value > threshold) return Verdict::nonclassical;
    if (value < threshold) return Verdict::classical;
    return Verdict::inconclusive;
}

// Walker alias table over the occupied bins
struct AliasTable {
    std::vector<double> prob;
    std::vector<std::uint32_t> alias;
    std::vector<std::uint32_t> bin_ms, bin_mi;

    explicit AliasTable(const JointHistogram& h) {
        std::vector<double> w;
        for (std::size_t i = 0; i < h.rows; ++i)
            for (std::size_t j = 0; j < h.cols; ++j)
                if (h.at(i, j) > 0.0) {
                    w.push_back(h.at(i, j) / h.shots);
                    bin_ms.push_back(std::uint32_t(i));
                    bin_mi.push_back(std::uint32_t(j));
                }
        std::size_t n = w.size();
        prob.assign(n, 0.0);
        alias.assign(n, 0);
        std::vector<std::uint32_t> small, large;
        std::vector<double> scaled(n);
        for (std::size_t k = 0; k < n; ++k) {
            scaled[k] = w[k] * double(n);
            (scaled[k] < 1.0 ? small : large).push_back(std::uint32_t(k));
        }
        while (!small.empty() && !large.empty()) {
            std::uint32_t s = small.back();
            small.pop_back();
            std::uint32_t l = large.back();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (std::uint32_t k : large) prob[k] = 1.0;
        for (std::uint32_t k : small) prob[k] = 1.0;
    }

    std::size_t draw(RngState& rng) const {
        double u = uniform01(rng) * double(prob.size());
        std::size_t k = std::min(prob.size() - 1, std::size_t(u));
        return (u - double(k) < prob[k]) ? k : alias[k];
    }
};

struct BootErrors {
    double se_C = kNaN, se_R = kNaN, se_S = kNaN, se_H = kNaN;
};

BootErrors bootstrap_errors(const JointHistogram& h, int resamples, std::uint64_t seed) {
    BootErrors out;
    if (resamples < 2) return out;
    AliasTable table(h);
    std::size_t nbins = table.prob.size();
    if (nbins == 0) return out;
    std::int64_t draws = std::llround(h.shots);
    if (draws < 2) return out;

    std::vector<double> cs(resamples, kNaN), rs(resamples, kNaN), ss(resamples, kNaN),
        hs(resamples, kNaN);
    detail::parallel_for(std::size_t(resamples), [&](std::size_t rep) {
        RngState rng = substream(seed, rep);
        std::vector<double> counts(nbins, 0.0);
        for (std::int64_t t = 0; t < draws; ++t) counts[table.draw(rng)] += 1.0;
        JointHistogram hb;
        hb.rows = h.rows;
        hb.cols = h.cols;
        hb.shots = double(draws);
        hb.counts.assign(h.rows * h.cols, 0.0);
        for (std::size_t k = 0; k < nbins; ++k)
            hb.counts[std::size_t(table.bin_ms[k]) * h.cols + table.bin_mi[k]] = counts[k];
        RawMoments rm = accumulate(hb);
        try { cs[rep] = corr_from(rm); } catch (const Error&) {}
        try { rs[rep] = noise_reduction_from(rm); } catch (const Error&) {}
        try { ss[rep] = schwarz_from(rm); } catch (const Error&) {}
        try { hs[rep] = h_from(rm); } catch (const Error&) {}
    });

    auto sd = [](const std::vector<double>& v) {
        double n = 0, mean = 0;
        for (double x : v)
            if (std::isfinite(x)) {
                ++n;
                mean += x;
            }
        if (n < 2) return kNaN;
        mean /= n;
        double ss2 = 0;
        for (double x : v)
            if (std::isfinite(x)) ss2 += (x - mean) * (x - mean);
        return std::sqrt(ss2 / (n - 1));
    };
    out.se_C = sd(cs);
    out.se_R = sd(rs);
    out.se_S = sd(ss);
    out.se_H = sd(hs);
    return out;
}

} // namespace

double joint_moments(const JointHistogram& h, int j, int k) {
    require_shots(h);
    if (j < 0 || k < 0 || j + k > 4 || j > 3 || k > 3)
        throw DomainError("moment order outside the supported set");
    RawMoments r = accumulate(h);
    // orders the fast path does not carry: direct pass
    static const int supported[][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}, {1, 1},
                                       {1, 2}, {2, 1}, {1, 3}, {3, 1}, {2, 2}};
    for (auto& sj : supported)
        if (sj[0] == j && sj[1] == k) return r.m(j, k);
    long double acc = 0;
    for (std::size_t i = 0; i < h.rows; ++i)
        for (std::size_t c = 0; c < h.cols; ++c) {
            double w = h.at(i, c);
            if (w == 0.0) continue;
            acc += (long double)(w) * powl((long double)(i), j) * powl((long double)(c), k);
        }
    return double(acc / (long double)(h.shots));
}

double correlation_coefficient(const JointHistogram& h) {
    require_shots(h);
    return corr_from(accumulate(h));
}

double noise_reduction(const JointHistogram& h) {
    require_shots(h);
    return noise_reduction_from(accumulate(h));
}

double noise_reduction_theory(double mean_s, double mean_i, double eta, double mu) {
    if (!(mean_s >= 0.0) || !(mean_i >= 0.0) || mean_s + mean_i <= 0.0)
        throw DomainError("means must be nonnegative and not both zero");
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("efficiency outside [0,1]");
    if (!(mu > 0.0)) throw DomainError("mode number mu must be positive");
    double total = mean_s + mean_i;
    double prod = mean_s * mean_i;
    return 1.0 - 2.0 * eta * std::sqrt(prod) / total + prod * prod / (mu * total);
}

double schwarz_ratio(const JointHistogram& h) {
    require_shots(h);
    return schwarz_from(accumulate(h));
}

double higher_order_H(const JointHistogram& h) {
    require_shots(h);
    return h_from(accumulate(h));
}

double fano(const Distribution1D& marg) {
    double m = marg.mean();
    if (!(m > 0.0)) throw UndefinedStatisticError("Fano factor undefined: zero mean");
    return marg.variance() / m;
}

double mode_estimate(const Distribution1D& marg) {
    double m = marg.mean();
    double v = marg.variance();
    if (!(v > m))
        throw SubPoissonianError("mode estimator undefined: marginal is not super-Poissonian");
    return m * m / (v - m);
}

double eta_from_R(const JointHistogram& h) {
    double r = noise_reduction(h);
    if (!(r < 1.0)) throw ClassicalDataError("R >= 1: no sub-shot-noise efficiency estimate");
    return 1.0 - r;
}

Distribution1D histogram_marginal(const JointHistogram& h, int axis) {
    require_shots(h);
    Distribution1D d;
    if (axis == 0) {
        d.probs.assign(h.rows, 0.0);
        for (std::size_t i = 0; i < h.rows; ++i)
            for (std::size_t j = 0; j < h.cols; ++j) d.probs[i] += h.at(i, j);
    } else {
        d.probs.assign(h.cols, 0.0);
        for (std::size_t i = 0; i < h.rows; ++i)
            for (std::size_t j = 0; j < h.cols; ++j) d.probs[j] += h.at(i, j);
    }
    for (double& v : d.probs) v /= h.shots;
    return d;
}

CriteriaReport evaluate_criteria(const JointHistogram& h, const CriteriaOptions& opts) {
    require_shots(h);
    RawMoments rm = accumulate(h);
    CriteriaReport rep;
    rep.mean_s = rm.m(1, 0);
    rep.mean_i = rm.m(0, 1);
    rep.C = corr_from(rm);
    rep.R = noise_reduction_from(rm);
    rep.S = schwarz_from(rm);
    rep.H = h_from(rm);

    Distribution1D ms = histogram_marginal(h, 0);
    Distribution1D mi = histogram_marginal(h, 1);
    rep.fano_s = fano(ms);
    rep.fano_i = fano(mi);

    std::ostringstream notes;
    try {
        rep.mu_est_s = mode_estimate(ms);
    } catch (const Error&) {
        rep.mu_est_s = kNaN;
    }
    try {
        rep.mu_est_i = mode_estimate(mi);
    } catch (const Error&) {
        rep.mu_est_i = kNaN;
    }
    if (rep.R < 1.0) {
        rep.eta_est = 1.0 - rep.R;
        notes << "eta_est = 1 - R assumes an ideal twin beam; additive noise biases it low. ";
    } else {
        rep.eta_est = kNaN;
        notes << "R >= 1: no sub-shot-noise efficiency estimate. ";
    }

    double mu_mean = kNaN;
    if (std::isfinite(rep.mu_est_s) && std::isfinite(rep.mu_est_i))
        mu_mean = 0.5 * (rep.mu_est_s + rep.mu_est_i);
    else if (std::isfinite(rep.mu_est_s))
        mu_mean = rep.mu_est_s;
    else if (std::isfinite(rep.mu_est_i))
        mu_mean = rep.mu_est_i;
    if (std::isfinite(rep.eta_est) && std::isfinite(mu_mean) && mu_mean > 0.0)
        rep.R_theory = noise_reduction_theory(rep.mean_s, rep.mean_i, rep.eta_est, mu_mean);
    else
        rep.R_theory = kNaN;

    rep.flags.r = verdict_less(rep.R, 1.0);
    rep.flags.s = verdict_greater(rep.S, 1.0);
    rep.flags.h = verdict_greater(rep.H, 1.0);

    if (opts.eta_reference >= 0.0 && opts.eta_reference <= 1.0 && rep.R < 1.0) {
        double floor = 1.0 - opts.eta_reference;
        if (rep.R >= floor)
            notes << "R inside the sub-shot-noise band [1-eta, 1) for the supplied eta. ";
        else
            notes << "R below 1-eta for the supplied eta: noise-free bound exceeded. ";
    }

    // bootstrap only for integer tallies: resampling needs whole shots
    double rounded = std::floor(h.shots + 0.5);
    if (opts.bootstrap_resamples >= 2 && std::abs(h.shots - rounded) < 1e-9 && rounded >= 2) {
        BootErrors be = bootstrap_errors(h, opts.bootstrap_resamples, opts.bootstrap_seed);
        rep.se_C = be.se_C;
        rep.se_R = be.se_R;
        rep.se_S = be.se_S;
        rep.se_H = be.se_H;
    } else {
        rep.se_C = rep.se_R = rep.se_S = rep.se_H = kNaN;
    }
    rep.notes = notes.str();
    return rep;
}

} // namespace twb
