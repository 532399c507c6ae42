#pragma once

#include <cstdint>

#include "twb/types.hpp"

namespace twb {

struct Moments {
    double mean_s = 0.0;
    double mean_i = 0.0;
    double var_s = 0.0; // unbiased
    double var_i = 0.0;
    double cov = 0.0; // unbiased
};

struct FitOptions {
    int restarts = 20;
    int max_iterations = 600;   // simplex iterations per restart
    double tolerance = 1e-8;    // objective spread at convergence
    std::int64_t min_shots = 1000;
    double tail_tol = kTailTol;
};

struct DerivedStats {
    // Pearson correlation of the reconstructed photon-number pair; the raw
    // second mixed cumulant is dominated by the marginal scales and is not
    // comparable across brightness levels.
    double photon_covariance = 0.0;
    double photon_R = 0.0;
    // Fraction of photons that belong to pairs: a paired emission carries
    // two photons, one per arm.
    double pairing_fraction = 0.0;
    double diagonal_weight = 0.0;
    double mean_pairs = 0.0; // mu_p * b_p
};

struct ReconstructionResult {
    TwbModel model;
    double residual = 0.0;
    JointDistribution photon_dist;
    DerivedStats derived;
    bool noise_s_flagged = false; // fitted noise mu below the identifiability floor
    bool noise_i_flagged = false;
    double eta_difference = 0.0; // eta_s - eta_i, both fitted freely
    bool converged = false;
};

// Unbiased first and second sample moments of the tallied shots.
Moments empirical_moments(const JointHistogram& h);

// Weighted least-squares fit of the three-part model with the five moment
// equalities (two means, two variances, covariance) eliminated analytically;
// the free search runs over the three mode numbers in log space.
ReconstructionResult fit_model(const JointHistogram& h, const FitOptions& opts = {});

// Derived photon-level block recomputed from the result's model and table.
DerivedStats photon_statistics(const ReconstructionResult& r);

} // namespace twb
