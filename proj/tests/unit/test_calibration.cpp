#include "valplan/calibration.hpp"
#include "valplan/error.hpp"
#include "valplan/riskdist.hpp"

#include <doctest.h>

#include <boost/math/distributions/normal.hpp>

#include <cmath>

using namespace valplan;

namespace {

// E(pi) under p ~ LogitNormal(mu, sigma) by a midpoint rule on normal quantiles.
double oracle_mean_pi(double alpha, double beta, double mu, double sigma) {
    const boost::math::normal_distribution<double> z01;
    const int m = 200000;
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
        const double lp = mu + sigma * boost::math::quantile(z01, (i + 0.5) / m);
        s += 1.0 / (1.0 + std::exp(-(lp - alpha) / beta));
    }
    return s / m;
}

}  // namespace

TEST_CASE("apply and invert are inverse") {
    const CalibrationModel h(-0.3, 1.4);
    for (double pi : {0.01, 0.2, 0.5, 0.93}) {
        CHECK(h.invert(h.apply(pi)) == doctest::Approx(pi).epsilon(1e-12));
    }
    CHECK(h.apply(0.5) == doctest::Approx(1.0 / (1.0 + std::exp(0.3))));
}

TEST_CASE("O/E 0.9 with slope 1.1 maps to intercept -0.089") {
    const RiskDistribution d = identify({0.25, 0.75}, RiskFamily::LogitNormal);
    const CalibrationModel h = resolve_intercept({LocationKind::OERatio, 0.9}, 1.1, d);
    CHECK(std::abs(h.intercept() - (-0.089)) <= 1e-3);
    CHECK(h.slope() == 1.1);
}

TEST_CASE("location parameterizations agree with a quadrature oracle") {
    const RiskDistribution d = RiskDistribution::logit_normal(-0.8, 0.9);
    const double phi = mean(d);
    const CalibrationModel h_oe = resolve_intercept({LocationKind::OERatio, 1.15}, 0.85, d);
    CHECK(oracle_mean_pi(h_oe.intercept(), 0.85, -0.8, 0.9) == doctest::Approx(phi / 1.15).epsilon(1e-6));
    const CalibrationModel h_mc = resolve_intercept({LocationKind::MeanCalibration, -0.04}, 1.2, d);
    CHECK(oracle_mean_pi(h_mc.intercept(), 1.2, -0.8, 0.9) == doctest::Approx(phi + 0.04).epsilon(1e-6));
    const CalibrationModel h_a = resolve_intercept({LocationKind::Intercept, 0.2}, 1.3, d);
    CHECK(h_a.intercept() == 0.2);
    CHECK(expected_predicted_risk(h_a, d) == doctest::Approx(oracle_mean_pi(0.2, 1.3, -0.8, 0.9)).epsilon(1e-7));
}

TEST_CASE("perfect mean calibration with unit slope gives a zero intercept") {
    for (RiskFamily f : {RiskFamily::Beta, RiskFamily::LogitNormal, RiskFamily::ProbitNormal}) {
        const RiskDistribution d = identify({0.3, 0.8}, f);
        const CalibrationModel h = resolve_intercept({LocationKind::MeanCalibration, 0.0}, 1.0, d);
        CHECK(std::abs(h.intercept()) <= 1e-8);
    }
}

TEST_CASE("calibration domain errors") {
    CHECK_THROWS_AS(CalibrationModel(0.0, -1.0), DomainError);
    const RiskDistribution d = RiskDistribution::logit_normal(0.0, 1.0);
    CHECK_THROWS_AS(resolve_intercept({LocationKind::OERatio, 0.3}, 1.0, d), DomainError);
    CHECK_THROWS_AS(resolve_intercept({LocationKind::MeanCalibration, 0.6}, 1.0, d), DomainError);
    CHECK_THROWS_AS(resolve_intercept({LocationKind::OERatio, -1.0}, 1.0, d), DomainError);
}
