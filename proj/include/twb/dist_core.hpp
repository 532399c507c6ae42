#pragma once

#include <cstdint>

#include "twb/types.hpp"

namespace twb {

// Multimode thermal (negative binomial) pmf with real-valued mode number.
// b = 0 degenerates to the vacuum distribution. Returns 0 for n < 0.
double mandel_rice_pmf(std::int64_t n, const ModeParams& p);

// Same law parametrized by total mean N and mode number mu; N = 0 is defined
// as the vacuum distribution.
double multithermal_pmf(std::int64_t n, double mean, double mu);

// Smallest bin count whose omitted tail mass is below tail_tol.
std::size_t mandel_rice_cutoff(const ModeParams& p, double tail_tol = kTailTol);

// Joint photon-number pmf value: common paired part convolved with the two
// independent noise parts (efficiencies in the model are ignored here).
double joint_twb_pmf(std::int64_t n_s, std::int64_t n_i, const TwbModel& m);

// Full photon-level table of joint_twb_pmf with per-axis cutoffs from the
// component-sum tail rule.
JointDistribution joint_distribution(const TwbModel& m, double tail_tol = kTailTol);

// Bernoulli detection kernel C(n,m) eta^m (1-eta)^(n-m); 0 outside 0<=m<=n.
double bernoulli_coefficient(std::int64_t m, std::int64_t n, double eta);

// Per-arm binomial thinning of a joint table. Output cutoffs follow the same
// tail rule applied to the thinned marginals.
JointDistribution detect_transform(const JointDistribution& p, double eta_s, double eta_i);

Distribution1D signal_marginal(const JointDistribution& p);
Distribution1D idler_marginal(const JointDistribution& p);

// Distribution of n_s + n_i.
Distribution1D sum_marginal(const JointDistribution& p);

// Distribution of n_s - n_i; offset marks the zero bin.
Distribution1D difference_marginal(const JointDistribution& p);

// Product of two independent Poisson pmfs truncated by the tail rule.
JointDistribution poisson_reference(double mean_s, double mean_i, double tail_tol = kTailTol);

// Bhattacharyya sum over the common support, aligned by bin value.
double fidelity(const Distribution1D& p, const Distribution1D& q);

} // namespace twb
