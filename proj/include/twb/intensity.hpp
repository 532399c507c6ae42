#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "twb/types.hpp"

namespace twb {

// Sampled quasi-distribution of integrated intensities. Values may be
// negative; they must be finite. Damping q < 1 multiplies coefficient (k,l)
// by q^(k+l) and is always recorded here and in serialized metadata because
// it biases negativity depth.
struct IntensityGrid {
    std::vector<double> axis_s;
    std::vector<double> axis_i;
    std::vector<double> values; // row-major, values[i*axis_i.size() + j]
    int order = 0;
    double damping = 1.0;
    std::vector<std::string> flags;

    double at(std::size_t i, std::size_t j) const { return values[i * axis_i.size() + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * axis_i.size() + j]; }
};

// w_max <= 0 selects the default 5 * (mean intensity + 1) per axis.
struct GridSpec {
    double w_max_s = 0.0;
    double w_max_i = 0.0;
    std::size_t points = 201;
};

struct ZeroContour {
    std::vector<std::pair<double, double>> points; // (W_s, W_i)
};

struct NegativityReport {
    double min_value = 0.0;
    std::pair<double, double> min_location{0.0, 0.0};
    double negative_fraction = 0.0; // fraction of grid points below -eps_neg
    std::vector<ZeroContour> zero_contours;
    double eps_neg = 1e-6;
};

// Alternating binomial transform a_k = sum_j C(k,j) (-1)^j p(j), compensated,
// with a positive-sum cancellation estimate per order. Throws PrecisionError
// when any order's relative error estimate exceeds 1e-6 (the undamped
// contract; damped evaluations use the damping-aware internal route).
// K <= 0 selects the default: the largest index with nonzero probability.
std::vector<double> laguerre_series_coeffs_1d(const Distribution1D& p, int K = -1);

// P(W) = sum_k a_k q^k L_k(W) on the given axis.
std::vector<double> invert_mandel_1d(const Distribution1D& p, int K,
                                     const std::vector<double>& axis, double damping = 1.0);

IntensityGrid invert_mandel_2d(const JointDistribution& p, int K = -1,
                               const GridSpec& spec = {}, double damping = 1.0);

// Normalizes the histogram and inverts it as-is (the eta = 1 reading of the
// data); the result describes the fictitious detected-photon field.
IntensityGrid detected_intensity_quasi(const JointHistogram& h, int K = -1,
                                       const GridSpec& spec = {}, double damping = 1.0);

// Model path: paired-part series (photon level, or thinned to the detected
// level through the stable regrouped coefficients) convolved per axis with
// the noise-part measures. With damping active the noise measures are the
// exactly matching damped multipliers, so this computes the same regularized
// object as invert_mandel_2d of the full table with the same q.
IntensityGrid model_quasi_convolution(const TwbModel& m, int K, const GridSpec& spec = {},
                                      double damping = 1.0,
                                      CountLabel level = CountLabel::photons);

// Poisson-transform quadrature roundtrip oracle. n counts 0..n_max per axis;
// n_max < 0 derives it from W_max coverage. Throws CoverageError when the
// count kernel for some requested n leaves more than 1e-8 of its mass past
// the grid. Negligibility of the quasi-distribution's own tail is the
// caller's precondition.
Distribution1D forward_mandel_check_1d(const std::vector<double>& axis,
                                       const std::vector<double>& values, int n_max = -1);

JointDistribution forward_mandel_check(const IntensityGrid& g, int n_max_s = -1,
                                       int n_max_i = -1);

// Minimum, location, negative fraction and marching-squares zero contours.
NegativityReport negativity_report(const IntensityGrid& g, double eps_neg = 1e-6);

} // namespace twb
