#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "twb/dist_core.hpp"
#include "twb/errors.hpp"
#include "twb/intensity.hpp"

using namespace twb;

namespace {

TwbModel paper_model() {
    TwbModel m;
    m.paired = {31.0, 0.13};
    m.noise_s = {1.2e-3, 24.0};
    m.noise_i = {5.5e-3, 13.0};
    m.eta_s = 0.147;
    m.eta_i = 0.150;
    return m;
}

// pmf table with an explicit bin count; the binomial transform at order k
// reads p(j) for all j <= k, so the table must reach the requested order
Distribution1D thermal_table(double b, std::size_t bins) {
    Distribution1D d;
    d.probs.resize(bins);
    for (std::size_t i = 0; i < bins; ++i)
        d.probs[i] = mandel_rice_pmf(std::int64_t(i), {1.0, b});
    return d;
}

std::vector<double> linspace(double hi, int points) {
    std::vector<double> axis(static_cast<std::size_t>(points), 0.0);
    for (int i = 0; i < points; ++i) axis[std::size_t(i)] = hi * double(i) / double(points - 1);
    return axis;
}

} // namespace

TEST_CASE("thermal Laguerre coefficients match the closed form") {
    Distribution1D p = thermal_table(0.5, 61);
    std::vector<double> a = laguerre_series_coeffs_1d(p, 25);
    REQUIRE(a.size() == 26);
    for (int k = 0; k <= 25; ++k)
        CHECK(std::abs(a[std::size_t(k)] - std::pow(1.5, -double(k + 1))) < 1e-10);

    // default order follows the last nonzero bin
    Distribution1D q = thermal_table(0.5, 20);
    CHECK(laguerre_series_coeffs_1d(q).size() == 20);
}

TEST_CASE("Poisson Laguerre coefficients match exp(-lam) L_k(lam)") {
    double lam = 2.0;
    Distribution1D p;
    p.probs.resize(41);
    for (int i = 0; i <= 40; ++i)
        p.probs[std::size_t(i)] =
            std::exp(-lam + i * std::log(lam) - std::lgamma(i + 1.0));
    std::vector<double> a = laguerre_series_coeffs_1d(p, 20);
    double l0 = 1.0, l1 = 1.0 - lam;
    for (int k = 0; k <= 20; ++k) {
        double lk = k == 0 ? l0 : l1;
        CHECK(std::abs(a[std::size_t(k)] - std::exp(-lam) * lk) < 1e-9);
        if (k >= 1) {
            double l2 = ((2.0 * k + 1.0 - lam) * l1 - k * l0) / (k + 1.0);
            l0 = l1;
            l1 = l2;
        }
    }
}

TEST_CASE("coefficient transform guards") {
    Distribution1D p = thermal_table(0.5, 61);
    // far beyond the support the alternating sum has no accurate digits left
    CHECK_THROWS_AS(laguerre_series_coeffs_1d(p, 55), PrecisionError);
    // orders far beyond the support only extrapolate noise
    CHECK_THROWS_AS(laguerre_series_coeffs_1d(p, 4 * 60 + 65), DomainError);

    Distribution1D off = thermal_table(0.5, 30);
    off.offset = 2;
    CHECK_THROWS_AS(laguerre_series_coeffs_1d(off, 10), DomainError);

    Distribution1D un;
    un.probs = {0.4, 0.1}; // not normalized
    CHECK_THROWS_AS(laguerre_series_coeffs_1d(un, 1), DomainError);
}

TEST_CASE("damped thermal series matches the closed form") {
    // sum_k (1+b)^{-(k+1)} q^k L_k(W) = exp(-W q/(1+b-q)) / (1+b-q);
    // at b = q = 0.5 the right side is exactly exp(-W/2)
    Distribution1D p = thermal_table(0.5, 61);
    std::vector<double> axis = linspace(5.0, 201);
    std::vector<double> vals = invert_mandel_1d(p, 40, axis, 0.5);
    for (std::size_t i = 0; i < axis.size(); ++i)
        CHECK(std::abs(vals[i] - std::exp(-0.5 * axis[i])) < 1e-10);
}

TEST_CASE("series-order stability for the thermal case") {
    Distribution1D p = thermal_table(0.5, 61);
    std::vector<double> axis = linspace(2.5, 251); // [0, 5b]
    std::vector<double> prev;
    std::vector<double> dist;
    for (int K = 20; K <= 50; K += 5) {
        std::vector<double> cur = invert_mandel_1d(p, K, axis);
        if (!prev.empty()) {
            double sup = 0.0;
            for (std::size_t i = 0; i < axis.size(); ++i)
                sup = std::max(sup, std::abs(cur[i] - prev[i]));
            dist.push_back(sup);
        }
        prev = cur;
    }
    REQUIRE(dist.size() >= 3);
    for (std::size_t i = 0; i + 1 < dist.size(); ++i) CHECK(dist[i + 1] < dist[i]);
}

TEST_CASE("forward Mandel roundtrip on the multithermal case") {
    ModeParams mt{78.0, 0.6 / 78.0};
    std::size_t bins = mandel_rice_cutoff(mt, 1e-13);
    Distribution1D p;
    p.probs.resize(bins);
    for (std::size_t i = 0; i < bins; ++i) p.probs[i] = mandel_rice_pmf(std::int64_t(i), mt);

    // the truncated series grows polynomially toward the edge, so the grid
    // must cover the kernel-times-polynomial product, not just the kernel
    std::vector<double> axis = linspace(90.0, 9001);
    std::vector<double> vals = invert_mandel_1d(p, int(bins) - 1, axis);
    Distribution1D back = forward_mandel_check_1d(axis, vals, int(bins) - 1);
    REQUIRE(back.probs.size() == bins);
    for (std::size_t i = 0; i < bins; ++i)
        CHECK(std::abs(back.probs[i] - p.probs[i]) < 1e-6);
}

TEST_CASE("forward transform of a pure gamma density is negative binomial") {
    double mu = 3.0, b = 0.8;
    std::vector<double> axis = linspace(60.0, 6001);
    std::vector<double> vals(axis.size(), 0.0);
    for (std::size_t i = 1; i < axis.size(); ++i) {
        double w = axis[i];
        vals[i] = std::exp((mu - 1.0) * std::log(w) - w / b - std::lgamma(mu) -
                           mu * std::log(b));
    }
    Distribution1D back = forward_mandel_check_1d(axis, vals, 20);
    for (int n = 0; n <= 20; ++n)
        CHECK(std::abs(back.probs[std::size_t(n)] - mandel_rice_pmf(n, {mu, b})) < 1e-8);

    // requesting counts whose kernel leaks past the grid is a coverage error
    CHECK_THROWS_AS(forward_mandel_check_1d(axis, vals, 40), CoverageError);

    // automatic n_max stays within the covered range
    Distribution1D open = forward_mandel_check_1d(axis, vals, -1);
    CHECK(open.probs.size() >= 21);
    CHECK(open.probs.size() < 60);
}

TEST_CASE("2D forward transform of a product density") {
    std::vector<double> axis = linspace(50.0, 2501);
    IntensityGrid g;
    g.axis_s = axis;
    g.axis_i = axis;
    g.values.resize(axis.size() * axis.size());
    for (std::size_t i = 0; i < axis.size(); ++i)
        for (std::size_t j = 0; j < axis.size(); ++j)
            g.values[i * axis.size() + j] =
                std::exp(-axis[i] / 0.5) / 0.5 * std::exp(-axis[j] / 0.8) / 0.8;
    JointDistribution back = forward_mandel_check(g, 8, 8);
    REQUIRE(back.rows == 9);
    REQUIRE(back.cols == 9);
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 9; ++j) {
            double want = mandel_rice_pmf(std::int64_t(i), {1.0, 0.5}) *
                          mandel_rice_pmf(std::int64_t(j), {1.0, 0.8});
            CHECK(std::abs(back.at(i, j) - want) < 5e-8);
        }
}

TEST_CASE("2D inversion of a product pmf separates") {
    Distribution1D ps = thermal_table(0.5, 40);
    Distribution1D pi = thermal_table(0.3, 40);
    JointDistribution joint;
    joint.rows = joint.cols = 40;
    joint.probs.resize(1600);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 40; ++j)
            joint.probs[i * 40 + j] = ps.probs[i] * pi.probs[j];

    GridSpec spec;
    spec.w_max_s = 4.0;
    spec.w_max_i = 3.0;
    spec.points = 41;
    IntensityGrid g2 = invert_mandel_2d(joint, 25, spec);

    std::vector<double> v_s = invert_mandel_1d(ps, 25, g2.axis_s);
    std::vector<double> v_i = invert_mandel_1d(pi, 25, g2.axis_i);
    for (std::size_t i = 0; i < g2.axis_s.size(); ++i)
        for (std::size_t j = 0; j < g2.axis_i.size(); ++j)
            CHECK(std::abs(g2.at(i, j) - v_s[i] * v_i[j]) < 1e-10);
}

TEST_CASE("singularity policy") {
    // the vacuum delta has a non-decaying coefficient sequence
    Distribution1D vac;
    vac.probs = {1.0};
    std::vector<double> axis = linspace(5.0, 51);
    CHECK_THROWS_AS(invert_mandel_1d(vac, 0, axis), SingularError);

    JointDistribution jv;
    jv.rows = jv.cols = 1;
    jv.probs = {1.0};
    CHECK_THROWS_AS(invert_mandel_2d(jv, 0, GridSpec{5.0, 5.0, 51}), SingularError);

    // boundary coefficients in (0.25, 0.5] are emitted with a warning flag
    Distribution1D th = thermal_table(0.5, 40);
    JointDistribution prod;
    prod.rows = prod.cols = 40;
    prod.probs.resize(1600);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 40; ++j)
            prod.probs[i * 40 + j] = th.probs[i] * th.probs[j];
    IntensityGrid g = invert_mandel_2d(prod, 1, GridSpec{3.0, 3.0, 31});
    bool flagged = false;
    for (const std::string& f : g.flags) flagged = flagged || f == "near-singular";
    CHECK(flagged);
}

TEST_CASE("detected-level inversion of the exact joint table") {
    TwbModel m = paper_model();
    JointDistribution detected = detect_transform(joint_distribution(m), m.eta_s, m.eta_i);
    JointHistogram h;
    h.rows = detected.rows;
    h.cols = detected.cols;
    h.counts.resize(detected.probs.size());
    for (std::size_t i = 0; i < detected.probs.size(); ++i)
        h.counts[i] = 200000.0 * detected.probs[i];
    h.shots = 200000.0;

    IntensityGrid g = detected_intensity_quasi(h, 15);
    CHECK(g.order == 15);
    // the origin value is the plain coefficient sum, grid independent
    CHECK(g.at(0, 0) == doctest::Approx(16.3123).epsilon(1e-3));
    bool labeled = false;
    for (const std::string& f : g.flags) labeled = labeled || f == "detected-field";
    CHECK(labeled);

    // one more order and the undamped coefficient boundary crosses 1/2
    CHECK_THROWS_AS(detected_intensity_quasi(h, 16), SingularError);
}

TEST_CASE("model convolution path agrees with direct 2D inversion") {
    TwbModel m = paper_model();
    JointDistribution photons = joint_distribution(m);
    GridSpec spec;
    spec.w_max_s = 10.0;
    spec.w_max_i = 10.0;
    IntensityGrid direct = invert_mandel_2d(photons, 60, spec, 0.5);
    IntensityGrid conv = model_quasi_convolution(m, 60, spec, 0.5, CountLabel::photons);
    REQUIRE(direct.values.size() == conv.values.size());
    double sup = 0.0;
    for (std::size_t i = 0; i < direct.values.size(); ++i)
        sup = std::max(sup, std::abs(direct.values[i] - conv.values[i]));
    CHECK(sup < 1e-3);
}

TEST_CASE("model convolution degenerate limits") {
    // zero noise: the convolution is the paired-part inversion itself
    TwbModel clean;
    clean.paired = {3.0, 0.8};
    clean.noise_s = {1.0, 0.0};
    clean.noise_i = {1.0, 0.0};
    GridSpec spec;
    spec.w_max_s = 6.0;
    spec.w_max_i = 6.0;
    spec.points = 51;
    // the perfectly correlated pair table is singular undamped, so the
    // identity is checked at q = 0.5 where both paths are regular
    IntensityGrid conv = model_quasi_convolution(clean, 20, spec, 0.5);
    JointDistribution paired = joint_distribution(clean);
    IntensityGrid direct = invert_mandel_2d(paired, 20, spec, 0.5);
    REQUIRE(conv.values.size() == direct.values.size());
    for (std::size_t i = 0; i < conv.values.size(); ++i)
        CHECK(std::abs(conv.values[i] - direct.values[i]) < 1e-11);

    // zero pairing: a damped classical product, nonnegative and separable
    TwbModel classical;
    classical.paired = {1.0, 0.0};
    classical.noise_s = {2.0, 0.6};
    classical.noise_i = {1.5, 0.4};
    IntensityGrid prod = model_quasi_convolution(classical, 60, spec, 0.5);
    double mn = 0.0;
    for (double v : prod.values) mn = std::min(mn, v);
    CHECK(mn >= -1e-9);
    for (std::size_t i = 5; i < prod.axis_s.size(); i += 9)
        for (std::size_t j = 5; j < prod.axis_i.size(); j += 9)
            CHECK(std::abs(prod.at(i, j) * prod.at(0, 0) - prod.at(i, 0) * prod.at(0, j)) <
                  1e-8);
}

TEST_CASE("classical joint tables invert to nonnegative grids") {
    Distribution1D a, b;
    a.probs.resize(mandel_rice_cutoff({2.0, 0.7}));
    for (std::size_t i = 0; i < a.probs.size(); ++i)
        a.probs[i] = mandel_rice_pmf(std::int64_t(i), {2.0, 0.7});
    b.probs.resize(mandel_rice_cutoff({1.5, 0.5}));
    for (std::size_t i = 0; i < b.probs.size(); ++i)
        b.probs[i] = mandel_rice_pmf(std::int64_t(i), {1.5, 0.5});
    JointDistribution joint;
    joint.rows = a.probs.size();
    joint.cols = b.probs.size();
    joint.probs.resize(joint.rows * joint.cols);
    for (std::size_t i = 0; i < joint.rows; ++i)
        for (std::size_t j = 0; j < joint.cols; ++j)
            joint.probs[i * joint.cols + j] = a.probs[i] * b.probs[j];

    IntensityGrid g = invert_mandel_2d(joint);
    double mn = 0.0;
    for (double v : g.values) mn = std::min(mn, v);
    CHECK(mn >= -1e-6);

    NegativityReport rep = negativity_report(g);
    CHECK(rep.negative_fraction == 0.0);
    CHECK(rep.zero_contours.empty());
}

TEST_CASE("negativity landmarks of the fitted model") {
    TwbModel m = paper_model();

    GridSpec spec_p;
    spec_p.w_max_s = 25.4;
    spec_p.w_max_i = 25.4;
    IntensityGrid gp = model_quasi_convolution(m, 80, spec_p, 0.5, CountLabel::photons);
    NegativityReport np = negativity_report(gp);
    CHECK(gp.at(0, 0) == doctest::Approx(3.9114).epsilon(2e-3));
    CHECK(np.min_value == doctest::Approx(-0.9576).epsilon(5e-3));
    CHECK(np.min_location.first == doctest::Approx(0.381).epsilon(1e-6));
    CHECK(np.min_location.second == 0.0);
    CHECK(np.negative_fraction > 0.0);
    CHECK(!np.zero_contours.empty());

    GridSpec spec_d;
    spec_d.w_max_s = 8.03;
    spec_d.w_max_i = 8.03;
    IntensityGrid gd = model_quasi_convolution(m, 200, spec_d, 0.89, CountLabel::detected);
    NegativityReport nd = negativity_report(gd);
    CHECK(gd.at(0, 0) == doctest::Approx(2.8457).epsilon(2e-3));
    CHECK(nd.min_value == doctest::Approx(-0.19313).epsilon(5e-3));
    // the minimum hugs an axis
    CHECK(std::min(nd.min_location.first, nd.min_location.second) == 0.0);
    bool labeled = false;
    for (const std::string& f : gd.flags) labeled = labeled || f == "detected-field";
    CHECK(labeled);
}

TEST_CASE("negativity_report geometry") {
    // all-positive analytic product grid
    IntensityGrid pos;
    pos.axis_s = linspace(4.0, 41);
    pos.axis_i = linspace(4.0, 41);
    pos.values.resize(41 * 41);
    for (std::size_t i = 0; i < 41; ++i)
        for (std::size_t j = 0; j < 41; ++j)
            pos.values[i * 41 + j] = pos.axis_s[i] * std::exp(-pos.axis_s[i]) *
                                     pos.axis_i[j] * std::exp(-pos.axis_i[j]);
    NegativityReport rp = negativity_report(pos);
    CHECK(rp.min_value >= 0.0);
    CHECK(rp.negative_fraction == 0.0);
    CHECK(rp.zero_contours.empty());

    // sign flip swaps the minimum with the negated maximum
    TwbModel m = paper_model();
    GridSpec spec;
    spec.w_max_s = 8.03;
    spec.w_max_i = 8.03;
    IntensityGrid g = model_quasi_convolution(m, 200, spec, 0.89, CountLabel::detected);
    IntensityGrid flipped = g;
    for (double& v : flipped.values) v = -v;
    NegativityReport orig = negativity_report(g);
    NegativityReport flip = negativity_report(flipped);

    double mx = g.values[0];
    std::size_t arg = 0;
    for (std::size_t i = 0; i < g.values.size(); ++i)
        if (g.values[i] > mx) {
            mx = g.values[i];
            arg = i;
        }
    CHECK(flip.min_value == doctest::Approx(-mx).epsilon(1e-13));
    CHECK(flip.min_location.first ==
          doctest::Approx(g.axis_s[arg / g.axis_i.size()]).epsilon(1e-12));
    CHECK(flip.min_location.second ==
          doctest::Approx(g.axis_i[arg % g.axis_i.size()]).epsilon(1e-12));
    // the zero set is shared
    CHECK(flip.zero_contours.size() == orig.zero_contours.size());

    // contour points interpolate actual sign changes: check they sit inside
    // the grid box and the report's negative fraction is consistent
    double neg = 0.0;
    for (double v : g.values)
        if (v < -orig.eps_neg) neg += 1.0;
    CHECK(orig.negative_fraction == doctest::Approx(neg / double(g.values.size())).epsilon(1e-12));
}

TEST_CASE("grid spec and axis handling") {
    Distribution1D p = thermal_table(0.5, 40);
    std::vector<double> axis = linspace(5.0, 51);

    std::vector<double> bad = axis;
    bad[10] = bad[9]; // not strictly increasing
    CHECK_THROWS_AS(invert_mandel_1d(p, 10, bad), DomainError);

    std::vector<double> neg = axis;
    neg[0] = -0.1;
    CHECK_THROWS_AS(invert_mandel_1d(p, 10, neg), DomainError);

    CHECK_THROWS_AS(invert_mandel_1d(p, 10, axis, 0.0), DomainError);
    CHECK_THROWS_AS(invert_mandel_1d(p, 10, axis, 1.5), DomainError);

    // default K and default axes: 5 * (mean + 1) with 201 points
    JointDistribution prod;
    prod.rows = prod.cols = 40;
    prod.probs.resize(1600);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 40; ++j)
            prod.probs[i * 40 + j] = p.probs[i] * p.probs[j];
    IntensityGrid g = invert_mandel_2d(prod, 12);
    REQUIRE(g.axis_s.size() == 201);
    CHECK(g.axis_s.front() == 0.0);
    CHECK(g.axis_s.back() == doctest::Approx(5.0 * 1.5).epsilon(1e-9));
    CHECK(g.order == 12);
    CHECK(g.damping == 1.0);
}
