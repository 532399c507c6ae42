#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "twb/criteria.hpp"
#include "twb/dist_core.hpp"
#include "twb/errors.hpp"

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

JointHistogram single_shot(std::size_t ms, std::size_t mi) {
    JointHistogram h;
    h.rows = ms + 1;
    h.cols = mi + 1;
    h.counts.assign(h.rows * h.cols, 0.0);
    h.at(ms, mi) = 1.0;
    h.shots = 1.0;
    return h;
}

// exact pmf table rescaled to a pseudo shot count
JointHistogram table_histogram(const JointDistribution& p, double shots) {
    JointHistogram h;
    h.rows = p.rows;
    h.cols = p.cols;
    h.counts.resize(p.probs.size());
    for (std::size_t i = 0; i < p.probs.size(); ++i) h.counts[i] = shots * p.probs[i];
    h.shots = shots;
    return h;
}

JointHistogram transposed(const JointHistogram& h) {
    JointHistogram t;
    t.rows = h.cols;
    t.cols = h.rows;
    t.counts.assign(h.counts.size(), 0.0);
    t.shots = h.shots;
    for (std::size_t i = 0; i < h.rows; ++i)
        for (std::size_t j = 0; j < h.cols; ++j) t.at(j, i) = h.at(i, j);
    return t;
}

} // namespace

TEST_CASE("joint_moments basics") {
    JointHistogram h = single_shot(2, 3);
    CHECK(joint_moments(h, 1, 1) == 6.0);
    CHECK(joint_moments(h, 0, 0) == 1.0);
    CHECK(joint_moments(h, 2, 0) == 4.0);

    JointHistogram empty;
    CHECK_THROWS_AS(joint_moments(empty, 1, 1), UndefinedStatisticError);
    CHECK_THROWS_AS(joint_moments(h, 4, 0), DomainError);

    JointHistogram pois = table_histogram(poisson_reference(1.0, 1.0), 1.0);
    CHECK(joint_moments(pois, 2, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(joint_moments(pois, 0, 2) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("correlation_coefficient") {
    // perfectly correlated diagonal data
    JointHistogram diag;
    diag.rows = diag.cols = 4;
    diag.counts.assign(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) diag.at(i, i) = 1.0;
    diag.shots = 4.0;
    CHECK(correlation_coefficient(diag) == doctest::Approx(1.0).epsilon(1e-13));

    JointHistogram pois = table_histogram(poisson_reference(1.3, 0.7), 1.0);
    CHECK(correlation_coefficient(pois) == doctest::Approx(0.0).epsilon(1e-9));

    CHECK_THROWS_AS(correlation_coefficient(single_shot(2, 2)), UndefinedStatisticError);
}

TEST_CASE("noise_reduction") {
    JointHistogram diag;
    diag.rows = diag.cols = 4;
    diag.counts.assign(16, 0.0);
    for (std::size_t i = 1; i < 4; ++i) diag.at(i, i) = 1.0;
    diag.shots = 3.0;
    CHECK(noise_reduction(diag) == 0.0);

    JointHistogram pois = table_histogram(poisson_reference(1.3, 0.7), 1.0);
    CHECK(noise_reduction(pois) == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(noise_reduction(single_shot(0, 0)), UndefinedStatisticError);
}

TEST_CASE("noise_reduction_theory") {
    // symmetric means collapse to 1 - eta + m^3 / (2 mu)
    for (double m : {0.6, 1.4, 3.1})
        for (double mu : {78.0, 112.0, 295.0}) {
            double got = noise_reduction_theory(m, m, 0.15, mu);
            double want = 1.0 - 0.15 + m * m * m / (2.0 * mu);
            CHECK(std::abs(got - want) <= 1e-12);
        }

    CHECK(noise_reduction_theory(0.6, 0.6, 0.15, 78.0) ==
          doctest::Approx(0.8513846153846154).epsilon(1e-15));

    CHECK(noise_reduction_theory(0.6, 0.6, 0.15, 1e12) == doctest::Approx(0.85).epsilon(1e-10));

    CHECK_THROWS_AS(noise_reduction_theory(0.0, 0.0, 0.15, 78.0), DomainError);
    CHECK_THROWS_AS(noise_reduction_theory(0.6, 0.6, 1.5, 78.0), DomainError);
    CHECK_THROWS_AS(noise_reduction_theory(0.6, 0.6, 0.15, 0.0), DomainError);
}

TEST_CASE("schwarz_ratio uses normally ordered moments") {
    // independent Poisson product sits exactly on the boundary
    JointHistogram pois = table_histogram(poisson_reference(1.0, 1.0), 1.0);
    CHECK(schwarz_ratio(pois) == doctest::Approx(1.0).epsilon(1e-9));

    // thermal diagonal data bunch and exceed the bound
    Distribution1D th;
    th.probs.resize(40);
    for (std::size_t i = 0; i < th.probs.size(); ++i)
        th.probs[i] = mandel_rice_pmf(std::int64_t(i), {1.0, 0.8});
    JointHistogram diag;
    diag.rows = diag.cols = th.probs.size();
    diag.counts.assign(th.probs.size() * th.probs.size(), 0.0);
    for (std::size_t i = 0; i < th.probs.size(); ++i) diag.at(i, i) = th.probs[i];
    diag.shots = 1.0;
    CHECK(schwarz_ratio(diag) > 1.0);

    // vanishing <m(m-1)> leaves the ratio undefined
    CHECK_THROWS_AS(schwarz_ratio(single_shot(1, 1)), UndefinedStatisticError);
}

TEST_CASE("higher_order_H on coherent-field moments") {
    JointHistogram pois = table_histogram(poisson_reference(1.0, 1.0), 1.0);
    CHECK(higher_order_H(pois) == doctest::Approx(1.0).epsilon(1e-6));

    // raw-moment reduction for independent coherent fields with means a, c:
    // H = 1 - (a+c)/2 - (c/a + a/c)/2 + sqrt(ac) * (1 + (1/a + 1/c)/2)
    const double a = 2.5, c = 1.6;
    const double expected = 1.0 - (a + c) / 2.0 - (c / a + a / c) / 2.0 +
                            std::sqrt(a * c) * (1.0 + (1.0 / a + 1.0 / c) / 2.0);
    JointHistogram bright = table_histogram(poisson_reference(a, c), 1.0);
    CHECK(higher_order_H(bright) == doctest::Approx(expected).epsilon(1e-6));

    CHECK_THROWS_AS(higher_order_H(single_shot(0, 0)), UndefinedStatisticError);
}

TEST_CASE("fano factor") {
    Distribution1D pois;
    pois.probs.resize(30);
    for (std::size_t i = 0; i < pois.probs.size(); ++i)
        pois.probs[i] =
            std::exp(-1.3 + double(i) * std::log(1.3) - std::lgamma(double(i) + 1.0));
    CHECK(fano(pois) == doctest::Approx(1.0).epsilon(1e-10));

    Distribution1D mt;
    mt.probs.resize(mandel_rice_cutoff({112.0, 1.42 / 112.0}, 1e-13));
    for (std::size_t i = 0; i < mt.probs.size(); ++i)
        mt.probs[i] = multithermal_pmf(std::int64_t(i), 1.42, 112.0);
    CHECK(fano(mt) == doctest::Approx(1.0126786).epsilon(1e-6));

    Distribution1D vac;
    vac.probs = {1.0};
    CHECK_THROWS_AS(fano(vac), UndefinedStatisticError);
}

TEST_CASE("mode_estimate") {
    Distribution1D mt;
    mt.probs.resize(mandel_rice_cutoff({78.0, 0.6 / 78.0}, 1e-13));
    for (std::size_t i = 0; i < mt.probs.size(); ++i)
        mt.probs[i] = multithermal_pmf(std::int64_t(i), 0.60, 78.0);
    CHECK(mode_estimate(mt) == doctest::Approx(78.0).epsilon(1e-6));

    Distribution1D pois;
    pois.probs.resize(30);
    for (std::size_t i = 0; i < pois.probs.size(); ++i)
        pois.probs[i] =
            std::exp(-1.3 + double(i) * std::log(1.3) - std::lgamma(double(i) + 1.0));
    CHECK_THROWS_AS(mode_estimate(pois), SubPoissonianError);
}

TEST_CASE("eta_from_R") {
    JointDistribution detected = detect_transform(joint_distribution(paper_model()), 0.147, 0.150);
    JointHistogram h = table_histogram(detected, 1.0);
    double eta = eta_from_R(h);
    CHECK(eta == doctest::Approx(1.0 - noise_reduction(h)).epsilon(1e-13));
    // additive noise biases the estimate below the true efficiency
    CHECK(eta < 0.147);
    CHECK(eta > 0.0);

    // independent thermal arms have R = 1 + (m_s b_s + m_i b_i)/(m_s + m_i) > 1,
    // a margin the table truncation cannot erase
    JointHistogram therm;
    therm.rows = therm.cols = 60;
    therm.counts.assign(therm.rows * therm.cols, 0.0);
    for (std::size_t i = 0; i < therm.rows; ++i)
        for (std::size_t j = 0; j < therm.cols; ++j)
            therm.at(i, j) = mandel_rice_pmf(std::int64_t(i), {1.0, 0.5}) *
                             mandel_rice_pmf(std::int64_t(j), {1.0, 1.0});
    therm.shots = 1.0;
    CHECK_THROWS_AS(eta_from_R(therm), ClassicalDataError);
}

TEST_CASE("statistics are invariant under arm swap") {
    JointHistogram h;
    h.rows = 5;
    h.cols = 4;
    h.counts = {9, 4, 1, 0, 6, 8, 3, 1, 2, 5, 7, 2, 1, 2, 4, 3, 0, 1, 2, 2};
    h.shots = 63.0;
    JointHistogram t = transposed(h);
    CHECK(correlation_coefficient(h) == doctest::Approx(correlation_coefficient(t)).epsilon(1e-13));
    CHECK(noise_reduction(h) == doctest::Approx(noise_reduction(t)).epsilon(1e-13));
    CHECK(schwarz_ratio(h) == doctest::Approx(schwarz_ratio(t)).epsilon(1e-13));
    CHECK(higher_order_H(h) == doctest::Approx(higher_order_H(t)).epsilon(1e-13));
}

TEST_CASE("boundary values report inconclusive") {
    // shots (2,0), (0,2), (1,1), (1,1): the difference variance equals the
    // total mean and the cross moment equals both factorial moments, so R
    // and S land exactly on their classical boundaries
    JointHistogram h;
    h.rows = h.cols = 3;
    h.counts.assign(9, 0.0);
    h.at(2, 0) = 1.0;
    h.at(0, 2) = 1.0;
    h.at(1, 1) = 2.0;
    h.shots = 4.0;
    CHECK(noise_reduction(h) == 1.0);
    CHECK(schwarz_ratio(h) == 1.0);
    CriteriaOptions opts;
    opts.bootstrap_resamples = 0;
    CriteriaReport r = evaluate_criteria(h, opts);
    CHECK(r.flags.r == Verdict::inconclusive);
    CHECK(r.flags.s == Verdict::inconclusive);
}

TEST_CASE("evaluate_criteria on the exact detected table") {
    JointDistribution detected = detect_transform(joint_distribution(paper_model()), 0.147, 0.150);
    JointHistogram h = table_histogram(detected, 200000.0);
    CriteriaOptions opts;
    opts.bootstrap_resamples = 0;
    CriteriaReport r = evaluate_criteria(h, opts);

    CHECK(r.mean_s == doctest::Approx(0.59664).epsilon(2e-4));
    CHECK(r.mean_i == doctest::Approx(0.61522).epsilon(2e-4));
    CHECK(r.C == doctest::Approx(0.15806).epsilon(1e-3));
    CHECK(r.R == doctest::Approx(0.88293).epsilon(1e-3));
    CHECK(r.S == doctest::Approx(1.17915).epsilon(1e-3));
    CHECK(r.H == doctest::Approx(0.96527).epsilon(2e-3));
    CHECK(r.fano_s > 1.0);
    CHECK(r.fano_i > 1.0);

    CHECK(r.flags.r == Verdict::nonclassical);
    CHECK(r.flags.s == Verdict::nonclassical);
    CHECK(r.flags.h == Verdict::classical);

    CHECK(std::isnan(r.se_C));
    CHECK(std::isnan(r.se_R));

    // photon-level table: stronger R, same S, H driven negative
    JointHistogram ph = table_histogram(joint_distribution(paper_model()), 200000.0);
    CriteriaReport rp = evaluate_criteria(ph, opts);
    CHECK(rp.C == doctest::Approx(0.84136).epsilon(1e-3));
    CHECK(rp.R == doctest::Approx(0.21089).epsilon(2e-3));
    CHECK(rp.S == doctest::Approx(1.17915).epsilon(1e-3));
    CHECK(rp.H == doctest::Approx(-0.56453).epsilon(5e-3));
    CHECK(rp.flags.h == Verdict::classical);
}

TEST_CASE("bootstrap errors are deterministic and plausible") {
    JointDistribution detected = detect_transform(joint_distribution(paper_model()), 0.147, 0.150);
    JointHistogram h = table_histogram(detected, 200000.0);
    CriteriaOptions opts;
    opts.bootstrap_resamples = 50;
    opts.bootstrap_seed = 91;
    CriteriaReport a = evaluate_criteria(h, opts);
    CriteriaReport b = evaluate_criteria(h, opts);
    CHECK(a.se_C == b.se_C);
    CHECK(a.se_R == b.se_R);
    CHECK(a.se_S == b.se_S);
    CHECK(a.se_H == b.se_H);
    CHECK(a.se_R > 0.0);
    CHECK(a.se_R < 0.05);
    CHECK(a.se_S > 0.0);
    CHECK(a.se_H > 0.0);
}
