#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twb/criteria.hpp"
#include "twb/rng.hpp"
#include "twb/types.hpp"

namespace twb {

struct SweepPoint {
    std::string label;
    TwbModel model;
};

struct SweepConfig {
    std::vector<SweepPoint> points;
    std::int64_t shots = 200000;
    std::uint64_t seed = 1;
    CriteriaOptions criteria;
};

struct SweepResult {
    std::string label;
    JointHistogram histogram;
    CriteriaReport report;
};

// One draw: pair count and per-arm noise counts from their Gamma-Poisson
// mixtures, then binomial thinning of each arm's total.
ShotRecord sample_shot(const TwbModel& m, RngState& rng);

// Deterministic for fixed (model, shots, seed) regardless of the parallel
// schedule: shot t always uses substream(seed, t).
JointHistogram run_experiment(const TwbModel& m, std::int64_t shots, std::uint64_t seed);

std::vector<SweepResult> run_sweep(const SweepConfig& cfg);

} // namespace twb
