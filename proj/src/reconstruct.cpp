#include "twb/reconstruct.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include "parallel.hpp"
#include "pmf_utils.hpp"
#include "twb/criteria.hpp"

namespace twb {

Moments empirical_moments(const JointHistogram& h) {
    if (h.shots < 2.0 || h.counts.empty())
        throw UndefinedStatisticError("at least 2 shots required for unbiased moments");
    long double n = 0, ss = 0, si = 0, s2s = 0, s2i = 0, ssi = 0;
    for (std::size_t i = 0; i < h.rows; ++i)
        for (std::size_t j = 0; j < h.cols; ++j) {
            double c = h.at(i, j);
            if (c == 0.0) continue;
            long double w = c, a = (long double)(i), b = (long double)(j);
            n += w;
            ss += w * a;
            si += w * b;
            s2s += w * a * a;
            s2i += w * b * b;
            ssi += w * a * b;
        }
    Moments m;
    m.mean_s = double(ss / n);
    m.mean_i = double(si / n);
    long double corr = n / (n - 1.0L);
    m.var_s = double((s2s / n - (ss / n) * (ss / n)) * corr);
    m.var_i = double((s2i / n - (si / n) * (si / n)) * corr);
    m.cov = double((ssi / n - (ss / n) * (si / n)) * corr);
    return m;
}

namespace {

constexpr double kPenalty = 1e12;

// Parameters eliminated analytically by the five moment constraints.
struct Eliminated {
    double b_p = 0, eta_s = 0, eta_i = 0, b_s = 0, b_i = 0;
    bool ok = false;
};

struct ArmSolution {
    double eta = 0, noise_mean = 0;
    bool ok = false;
};

// Solve the per-arm constraint pair (mean, variance) for eta and the noise
// mean A = mu_n*b_n, given the pair block P = mu_p*b_p and b_p.
// (P^2 + mu_n P b_p) eta^2 - 2 M P eta + (M^2 - mu_n S) = 0 with S = V - M.
ArmSolution solve_arm(double M, double S, double mu_n, double P, double b_p) {
    ArmSolution r;
    double qa = P * P + mu_n * P * b_p;
    double qb = -2.0 * M * P;
    double qc = M * M - mu_n * S;
    double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0 || qa <= 0.0) return r;
    double sq = std::sqrt(disc);
    double atol = 1e-12 * std::max(1.0, P);
    for (double eta : {(-qb + sq) / (2.0 * qa), (-qb - sq) / (2.0 * qa)}) {
        if (!(eta > 0.0) || eta > 1.0) continue;
        double A = M / eta - P;
        if (A < -atol) continue;
        if (!r.ok || eta > r.eta) {
            r.eta = eta;
            r.noise_mean = std::max(0.0, A);
            r.ok = true;
        }
    }
    return r;
}

// Covariance mismatch at a candidate b_p; arms must both be solvable.
bool cov_gap(double b_p, const Moments& mom, double mu_p, double mu_s, double mu_i, double* gap) {
    double P = mu_p * b_p;
    ArmSolution as = solve_arm(mom.mean_s, mom.var_s - mom.mean_s, mu_s, P, b_p);
    ArmSolution ai = solve_arm(mom.mean_i, mom.var_i - mom.mean_i, mu_i, P, b_p);
    if (!as.ok || !ai.ok) return false;
    *gap = as.eta * ai.eta * P * (1.0 + b_p) - mom.cov;
    return true;
}

Eliminated eliminate(const Moments& mom, double mu_p, double mu_s, double mu_i) {
    Eliminated e;
    // bracket the covariance constraint on a log grid in b_p, then bisect
    constexpr int kGrid = 121;
    const double lo = std::log(1e-8), hi = std::log(1e4);
    double prev_b = 0, prev_g = 0;
    bool have_prev = false, bracketed = false;
    double bl = 0, bh = 0, gl = 0;
    for (int i = 0; i < kGrid; ++i) {
        double b = std::exp(lo + (hi - lo) * double(i) / double(kGrid - 1));
        double g;
        if (!cov_gap(b, mom, mu_p, mu_s, mu_i, &g)) {
            have_prev = false;
            continue;
        }
        if (have_prev && (prev_g < 0.0) != (g < 0.0)) {
            bl = prev_b;
            bh = b;
            gl = prev_g;
            bracketed = true;
            break;
        }
        prev_b = b;
        prev_g = g;
        have_prev = true;
    }
    if (!bracketed) return e;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (bl + bh);
        double g;
        if (!cov_gap(mid, mom, mu_p, mu_s, mu_i, &g)) return e;
        if ((g < 0.0) == (gl < 0.0)) {
            bl = mid;
            gl = g;
        } else {
            bh = mid;
        }
        if (bh - bl <= 1e-14 * bh) break;
    }
    double b_p = 0.5 * (bl + bh);
    double P = mu_p * b_p;
    ArmSolution as = solve_arm(mom.mean_s, mom.var_s - mom.mean_s, mu_s, P, b_p);
    ArmSolution ai = solve_arm(mom.mean_i, mom.var_i - mom.mean_i, mu_i, P, b_p);
    if (!as.ok || !ai.ok) return e;
    e.b_p = b_p;
    e.eta_s = as.eta;
    e.eta_i = ai.eta;
    e.b_s = as.noise_mean / mu_s;
    e.b_i = ai.noise_mean / mu_i;
    e.ok = true;
    return e;
}

// Detected-level forward model over the observed box [0,rows)x[0,cols).
// The paired block thins arm by arm; the noise parts stay Mandel-Rice with
// b -> eta*b and enter as axis convolutions.
std::vector<double> forward_detected(const TwbModel& m, std::size_t rows, std::size_t cols,
                                     double tail_tol) {
    std::vector<double> pair = detail::pmf_vector(m.paired, tail_tol / 4.0);
    std::size_t np = pair.size();
    auto bs = detail::bernoulli_rows(rows - 1, np - 1, m.eta_s);
    auto bi = detail::bernoulli_rows(cols - 1, np - 1, m.eta_i);

    std::vector<double> pd(rows * cols, 0.0);
    for (std::size_t n = 0; n < np; ++n) {
        double pp = pair[n];
        if (pp == 0.0) continue;
        std::size_t ktop = std::min(rows - 1, n);
        std::size_t ltop = std::min(cols - 1, n);
        for (std::size_t k = 0; k <= ktop; ++k) {
            double w = pp * bs[k][n];
            if (w == 0.0) continue;
            double* row = &pd[k * cols];
            const auto& bl = bi;
            for (std::size_t l = 0; l <= ltop; ++l) row[l] += w * bl[l][n];
        }
    }

    std::vector<double> ns = detail::pmf_vector({m.noise_s.mu, m.eta_s * m.noise_s.b}, tail_tol / 4.0);
    std::vector<double> ni = detail::pmf_vector({m.noise_i.mu, m.eta_i * m.noise_i.b}, tail_tol / 4.0);
    if (ns.size() > 1) {
        std::vector<double> t(rows * cols, 0.0);
        for (std::size_t c = 0; c < std::min(ns.size(), rows); ++c) {
            double w = ns[c];
            if (w == 0.0) continue;
            for (std::size_t k = c; k < rows; ++k)
                for (std::size_t l = 0; l < cols; ++l) t[k * cols + l] += w * pd[(k - c) * cols + l];
        }
        pd.swap(t);
    }
    if (ni.size() > 1) {
        std::vector<double> t(rows * cols, 0.0);
        for (std::size_t c = 0; c < std::min(ni.size(), cols); ++c) {
            double w = ni[c];
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < rows; ++k)
                for (std::size_t l = c; l < cols; ++l) t[k * cols + l] += w * pd[k * cols + (l - c)];
        }
        pd.swap(t);
    }
    return pd;
}

struct ObsBin {
    std::size_t row, col;
    double freq, weight;
};

double declination(const std::vector<ObsBin>& obs, const std::vector<double>& f_th,
                   std::size_t cols) {
    double acc = 0.0;
    for (const ObsBin& o : obs) {
        double d = o.freq - f_th[o.row * cols + o.col];
        acc += d * d / o.weight;
    }
    return acc;
}

struct Candidate {
    double residual = std::numeric_limits<double>::infinity();
    std::array<double, 3> x{}; // (ln mu_p, ln mu_s, ln mu_i)
    bool converged = false;
};

} // namespace

ReconstructionResult fit_model(const JointHistogram& h, const FitOptions& opts) {
    if (h.shots < double(opts.min_shots))
        throw DomainError("histogram has fewer shots than FitOptions::min_shots");
    Moments mom = empirical_moments(h);
    if (!(mom.var_s > mom.mean_s) || !(mom.var_i > mom.mean_i))
        throw ModelMismatchError(
            "sub-Poissonian marginal: incompatible with the multithermal noise model");
    if (!(mom.cov > 0.0))
        throw ModelMismatchError("nonpositive covariance: incompatible with a paired model");

    std::vector<ObsBin> obs;
    for (std::size_t i = 0; i < h.rows; ++i)
        for (std::size_t j = 0; j < h.cols; ++j) {
            double c = h.at(i, j);
            if (c < 1.0) continue;
            double f = c / h.shots;
            obs.push_back({i, j, f, std::max(f / h.shots, 1.0 / (h.shots * h.shots))});
        }
    if (obs.empty()) throw ModelMismatchError("no occupied histogram bins");
    std::size_t rows = h.rows, cols = h.cols;

    auto objective = [&](const std::array<double, 3>& x) {
        double mu_p = std::exp(x[0]), mu_s = std::exp(x[1]), mu_i = std::exp(x[2]);
        if (!std::isfinite(mu_p) || !std::isfinite(mu_s) || !std::isfinite(mu_i)) return kPenalty;
        Eliminated e = eliminate(mom, mu_p, mu_s, mu_i);
        if (!e.ok) return kPenalty;
        TwbModel m;
        m.paired = {mu_p, e.b_p};
        m.noise_s = {mu_s, e.b_s};
        m.noise_i = {mu_i, e.b_i};
        m.eta_s = e.eta_s;
        m.eta_i = e.eta_i;
        std::vector<double> f_th = forward_detected(m, rows, cols, opts.tail_tol);
        return declination(obs, f_th, cols);
    };

    // warm starts from the paper-style estimators
    double mu_p0 = 50.0;
    {
        Distribution1D ms = histogram_marginal(h, 0);
        Distribution1D mi = histogram_marginal(h, 1);
        double acc = 0;
        int cnt = 0;
        for (const Distribution1D* d : {&ms, &mi}) {
            try {
                acc += mode_estimate(*d);
                ++cnt;
            } catch (const Error&) {
            }
        }
        if (cnt > 0) mu_p0 = acc / cnt;
        if (!(mu_p0 > 0.0) || !std::isfinite(mu_p0)) mu_p0 = 50.0;
    }

    std::vector<std::array<double, 3>> starts;
    for (int fi = 0; fi < 5; ++fi) {
        double factor = 0.4 * std::pow(2.5 / 0.4, double(fi) / 4.0);
        for (double mu_s0 : {1e-3, 0.3})
            for (double mu_i0 : {1e-3, 0.3})
                starts.push_back({std::log(mu_p0 * factor), std::log(mu_s0), std::log(mu_i0)});
    }
    if (int(starts.size()) > opts.restarts) starts.resize(std::size_t(opts.restarts));

    std::vector<Candidate> cands(starts.size());
    detail::parallel_for(starts.size(), [&](std::size_t si) {
        // Nelder-Mead over (ln mu_p, ln mu_s, ln mu_i)
        constexpr int kDim = 3;
        std::array<std::array<double, 3>, kDim + 1> vx;
        std::array<double, kDim + 1> vf;
        vx[0] = starts[si];
        vf[0] = objective(vx[0]);
        for (int d = 0; d < kDim; ++d) {
            vx[d + 1] = starts[si];
            vx[d + 1][std::size_t(d)] += 0.35;
            vf[d + 1] = objective(vx[d + 1]);
        }
        auto order = [&]() {
            std::array<int, kDim + 1> idx{0, 1, 2, 3};
            std::sort(idx.begin(), idx.end(), [&](int a, int b) { return vf[a] < vf[b]; });
            std::array<std::array<double, 3>, kDim + 1> nx;
            std::array<double, kDim + 1> nf;
            for (int k = 0; k <= kDim; ++k) {
                nx[k] = vx[idx[k]];
                nf[k] = vf[idx[k]];
            }
            vx = nx;
            vf = nf;
        };
        order();
        bool conv = false;
        for (int it = 0; it < opts.max_iterations; ++it) {
            if (std::abs(vf[kDim] - vf[0]) <= opts.tolerance * (std::abs(vf[0]) + opts.tolerance)) {
                conv = true;
                break;
            }
            std::array<double, 3> cen{};
            for (int k = 0; k < kDim; ++k)
                for (int d = 0; d < kDim; ++d) cen[std::size_t(d)] += vx[k][std::size_t(d)] / kDim;
            auto blend = [&](double t) {
                std::array<double, 3> p;
                for (int d = 0; d < kDim; ++d)
                    p[std::size_t(d)] =
                        cen[std::size_t(d)] + t * (cen[std::size_t(d)] - vx[kDim][std::size_t(d)]);
                return p;
            };
            auto xr = blend(1.0);
            double fr = objective(xr);
            if (fr < vf[0]) {
                auto xe = blend(2.0);
                double fe = objective(xe);
                if (fe < fr) {
                    vx[kDim] = xe;
                    vf[kDim] = fe;
                } else {
                    vx[kDim] = xr;
                    vf[kDim] = fr;
                }
            } else if (fr < vf[kDim - 1]) {
                vx[kDim] = xr;
                vf[kDim] = fr;
            } else {
                auto xc = blend(fr < vf[kDim] ? 0.5 : -0.5);
                double fc = objective(xc);
                if (fc < std::min(fr, vf[kDim])) {
                    vx[kDim] = xc;
                    vf[kDim] = fc;
                } else {
                    for (int k = 1; k <= kDim; ++k) {
                        for (int d = 0; d < kDim; ++d)
                            vx[k][std::size_t(d)] =
                                vx[0][std::size_t(d)] +
                                0.5 * (vx[k][std::size_t(d)] - vx[0][std::size_t(d)]);
                        vf[k] = objective(vx[k]);
                    }
                }
            }
            order();
        }
        cands[si].residual = vf[0];
        cands[si].x = vx[0];
        cands[si].converged = conv;
    });

    // deterministic winner: lowest residual, ties by parameter order
    std::size_t best = 0;
    for (std::size_t k = 1; k < cands.size(); ++k) {
        const Candidate &a = cands[k], &b = cands[best];
        if (a.residual < b.residual ||
            (a.residual == b.residual &&
             std::tie(a.x[0], a.x[1], a.x[2]) < std::tie(b.x[0], b.x[1], b.x[2])))
            best = k;
    }
    const Candidate& win = cands[best];
    if (win.residual >= kPenalty)
        throw ModelMismatchError("no feasible parameter point satisfies the moment constraints");

    double mu_p = std::exp(win.x[0]), mu_s = std::exp(win.x[1]), mu_i = std::exp(win.x[2]);
    Eliminated e = eliminate(mom, mu_p, mu_s, mu_i);
    if (!e.ok) throw ModelMismatchError("winning restart lost feasibility on re-evaluation");

    if (!win.converged) {
        std::ostringstream msg;
        msg << "fit did not converge within " << opts.max_iterations
            << " iterations (best residual " << win.residual << ")";
        throw FitError(msg.str(), win.residual);
    }

    ReconstructionResult r;
    r.model.paired = {mu_p, e.b_p};
    r.model.noise_s = {mu_s, e.b_s};
    r.model.noise_i = {mu_i, e.b_i};
    r.model.eta_s = e.eta_s;
    r.model.eta_i = e.eta_i;
    r.residual = win.residual;
    r.converged = win.converged;
    r.noise_s_flagged = mu_s < 1e-5;
    r.noise_i_flagged = mu_i < 1e-5;
    r.eta_difference = e.eta_s - e.eta_i;
    r.photon_dist = joint_distribution(r.model, opts.tail_tol);
    r.derived = photon_statistics(r);
    return r;
}

DerivedStats photon_statistics(const ReconstructionResult& r) {
    const JointDistribution& p = r.photon_dist;
    if (p.rows == 0 || p.cols == 0) throw DomainError("empty photon distribution");
    long double ss = 0, si = 0, s2s = 0, s2i = 0, ssi = 0, sd2 = 0, diag = 0, tot = 0;
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.cols; ++j) {
            long double w = p.at(i, j);
            if (w == 0.0L) continue;
            long double a = (long double)(i), b = (long double)(j);
            tot += w;
            ss += w * a;
            si += w * b;
            s2s += w * a * a;
            s2i += w * b * b;
            ssi += w * a * b;
            sd2 += w * (a - b) * (a - b);
            if (i == j) diag += w;
        }
    long double ms = ss / tot, mi = si / tot;
    long double vs = s2s / tot - ms * ms, vi = s2i / tot - mi * mi;
    long double cov = ssi / tot - ms * mi;
    long double vdiff = sd2 / tot - (ms - mi) * (ms - mi);

    DerivedStats d;
    d.photon_covariance = (vs > 0 && vi > 0) ? double(cov / sqrtl(vs * vi)) : 0.0;
    d.photon_R = (ms + mi > 0) ? double(vdiff / (ms + mi)) : 0.0;
    d.diagonal_weight = double(diag / tot);
    double pairs = r.model.paired.mu * r.model.paired.b;
    double noise = r.model.noise_s.mu * r.model.noise_s.b + r.model.noise_i.mu * r.model.noise_i.b;
    d.pairing_fraction = (2.0 * pairs + noise) > 0.0 ? 2.0 * pairs / (2.0 * pairs + noise) : 0.0;
    d.mean_pairs = pairs;
    return d;
}

} // namespace twb
