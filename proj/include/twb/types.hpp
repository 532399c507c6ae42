#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "twb/errors.hpp"

namespace twb {

// One statistically independent multithermal part: mu modes (real valued,
// arbitrarily small positive values allowed), b mean photons per mode.
struct ModeParams {
    double mu = 1.0;
    double b = 0.0;
};

// Three-part twin-beam model: common paired part plus one independent noise
// part per arm, detected through Bernoulli channels eta_s, eta_i.
struct TwbModel {
    ModeParams paired;
    ModeParams noise_s;
    ModeParams noise_i;
    double eta_s = 1.0;
    double eta_i = 1.0;
};

void validate(const ModeParams& p);
void validate(const TwbModel& m);

enum class CountLabel { photons, detected };

// Dense joint pmf table over (n_s, n_i), truncated at cutoffs chosen so the
// omitted tail mass stays below the configured tolerance.
struct JointDistribution {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> probs; // row-major, probs[i*cols + j]
    CountLabel label = CountLabel::photons;

    double& at(std::size_t i, std::size_t j) { return probs[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return probs[i * cols + j]; }
    double sum() const;
};

// 1D pmf over counts, or over signed differences: bin i holds the value
// i - offset, so probs[offset] is the zero bin. Plain count distributions
// keep offset = 0.
struct Distribution1D {
    std::vector<double> probs;
    std::int64_t offset = 0;

    double sum() const;
    double mean() const;
    double variance() const;
};

struct ShotRecord {
    std::uint32_t m_s = 0;
    std::uint32_t m_i = 0;
};

// Shot tallies. Counts are stored as doubles so exact pmf tables scaled by a
// shot number can stand in for data in self-consistency fits; tallies from
// the simulator and the CSV loader are always integer valued.
struct JointHistogram {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> counts; // row-major
    double shots = 0.0;

    double& at(std::size_t i, std::size_t j) { return counts[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return counts[i * cols + j]; }
};

// Default truncation tolerance for pmf tables.
inline constexpr double kTailTol = 1e-10;

} // namespace twb
