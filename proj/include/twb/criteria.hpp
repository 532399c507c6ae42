#pragma once

#include <cstdint>
#include <string>

#include "twb/types.hpp"

namespace twb {

// Strict inequalities decide the flags; exact boundary hits are reported as
// inconclusive rather than forced to either side.
enum class Verdict { classical, nonclassical, inconclusive };

struct CriteriaFlags {
    Verdict r = Verdict::inconclusive; // nonclassical iff R < 1
    Verdict s = Verdict::inconclusive; // nonclassical iff S > 1
    Verdict h = Verdict::inconclusive; // nonclassical iff H > 1
};

struct CriteriaReport {
    double mean_s = 0.0;
    double mean_i = 0.0;
    double C = 0.0;
    double R = 0.0;
    double R_theory = 0.0; // NaN when eta/mu estimates are unavailable
    double S = 0.0;
    double H = 0.0;
    double fano_s = 0.0;
    double fano_i = 0.0;
    double mu_est_s = 0.0; // NaN when the marginal is not super-Poissonian
    double mu_est_i = 0.0;
    double eta_est = 0.0; // NaN when R >= 1
    CriteriaFlags flags;
    // Bootstrap standard errors; NaN when resampling was disabled.
    double se_C = 0.0;
    double se_R = 0.0;
    double se_S = 0.0;
    double se_H = 0.0;
    std::string notes;
};

struct CriteriaOptions {
    int bootstrap_resamples = 200;
    std::uint64_t bootstrap_seed = 0x5eedULL;
    double eta_reference = -1.0;           // <0 means "not supplied"
};

// Raw joint moment <m_s^j m_i^k> over shots.
double joint_moments(const JointHistogram& h, int j, int k);

double correlation_coefficient(const JointHistogram& h);

// R = Var(m_s - m_i) / <m_s + m_i>.
double noise_reduction(const JointHistogram& h);

// Literal three-term form, including the (m1 m2)^2 third term.
double noise_reduction_theory(double mean_s, double mean_i, double eta, double mu);

// Normally ordered form <m1 m2>/sqrt(<m1(m1-1)><m2(m2-1)>); the raw-moment
// quotient is Schwarz-bounded by 1 for every distribution and cannot flag.
double schwarz_ratio(const JointHistogram& h);

double higher_order_H(const JointHistogram& h);

double fano(const Distribution1D& marg);

// mu = <m>^2 / (var - <m>); throws on sub-Poissonian input.
double mode_estimate(const Distribution1D& marg);

// 1 - R; throws when R >= 1. Additive noise biases the estimate low, the
// evaluate_criteria note records that.
double eta_from_R(const JointHistogram& h);

Distribution1D histogram_marginal(const JointHistogram& h, int axis);

CriteriaReport evaluate_criteria(const JointHistogram& h, const CriteriaOptions& opts);

} // namespace twb
