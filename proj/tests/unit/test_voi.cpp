#include "fixtures.hpp"

#include "valplan/error.hpp"
#include "valplan/voi.hpp"

#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>
#include <vector>

using namespace valplan;
using valplan::testing::case_study_prior;
using valplan::testing::point_prior;

namespace {

double binom_pmf(int n, int k, double p) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                    (n - k) * std::log1p(-p));
}

}  // namespace

TEST_CASE("net benefit arithmetic") {
    const NBTriple nb = net_benefit(0.4, 0.8, 0.7, 0.2);
    CHECK(nb.nb_none == 0.0);
    CHECK(nb.nb_model == doctest::Approx(0.4 * 0.8 - 0.6 * 0.3 * 0.25));
    CHECK(nb.nb_all == doctest::Approx(0.4 - 0.6 * 0.25));
    CHECK(nb.best() == Strategy::UseModel);
    CHECK(nb[Strategy::TreatAll] == nb.nb_all);
}

TEST_CASE("ties go to the smaller strategy index") {
    CHECK(NBTriple{0.0, 0.0, 0.0}.best() == Strategy::TreatNone);
    CHECK(NBTriple{-0.1, 0.2, 0.2}.best() == Strategy::UseModel);
    CHECK(NBTriple{0.0, -0.1, 0.0}.best() == Strategy::TreatNone);
    CHECK(strategy_from_string("all") == Strategy::TreatAll);
    CHECK(to_string(Strategy::UseModel) == "model");
}

TEST_CASE("sample net benefit from confusion counts") {
    const ConfusionCounts c{30, 10, 40, 20};
    bool undefined = true;
    const NBTriple nb = sample_net_benefit(c, 0.25, &undefined);
    CHECK_FALSE(undefined);
    CHECK(nb.nb_model == doctest::Approx(30.0 / 100 - 20.0 / 100 / 3.0));
    CHECK(nb.nb_all == doctest::Approx(0.4 - 0.6 / 3.0));
    const ConfusionCounts none{0, 0, 15, 5};
    sample_net_benefit(none, 0.25, &undefined);
    CHECK(undefined);
}

TEST_CASE("binomial quantile agrees with a cumulative pmf") {
    for (int n : {1, 7, 20, 150}) {
        for (double p : {0.03, 0.3, 0.5, 0.91}) {
            for (double u : {1e-6, 0.01, 0.2, 0.5, 0.77, 0.999, 1 - 1e-9}) {
                double cum = 0.0;
                int k = 0;
                for (; k <= n; ++k) {
                    cum += binom_pmf(n, k, p);
                    if (cum >= u * (1 - 1e-12)) {
                        break;
                    }
                }
                CAPTURE(n);
                CAPTURE(p);
                CAPTURE(u);
                CHECK(binomial_quantile(static_cast<std::uint64_t>(n), p, u) == static_cast<std::uint64_t>(std::min(k, n)));
            }
        }
    }
    CHECK(binomial_quantile(0, 0.4, 0.5) == 0);
    CHECK(binomial_quantile(10, 0.0, 0.5) == 0);
    CHECK(binomial_quantile(10, 1.0, 0.5) == 10);
}

TEST_CASE("chained confusion counts match exact enumeration at n = 20") {
    const ThetaDraw t = make_theta(0.35, 0.75, 1.0, {LocationKind::Intercept, 0.0}, RiskFamily::LogitNormal);
    const TrueDecision truth = true_decision(t, 0.3);
    const double phi = truth.phi;
    const double se = truth.accuracy.sensitivity;
    const double sp = truth.accuracy.specificity;
    const int n = 20;
    std::map<std::tuple<int, int, int>, double> expected;
    for (int pos = 0; pos <= n; ++pos) {
        for (int tp = 0; tp <= pos; ++tp) {
            for (int tn = 0; tn <= n - pos; ++tn) {
                expected[{pos, tp, tn}] = binom_pmf(n, pos, phi) * binom_pmf(pos, tp, se) * binom_pmf(n - pos, tn, sp);
            }
        }
    }
    const int draws = 1'000'000;
    std::map<std::tuple<int, int, int>, double> observed;
    Engine rng = substream(123, StreamTag::Confusion, 0);
    std::size_t wrong_total = 0;
    for (int i = 0; i < draws; ++i) {
        const ConfusionCounts c = sample_confusion(t, 0.3, n, rng);
        wrong_total += c.total() != static_cast<std::uint64_t>(n);
        observed[{static_cast<int>(c.n_tp + c.n_fn), static_cast<int>(c.n_tp), static_cast<int>(c.n_tn)}] += 1.0;
    }
    CHECK(wrong_total == 0);
    // Pool sparse cells (expected count < 5) into one.
    double chi2 = 0.0;
    int cells = 0;
    double pooled_e = 0.0;
    double pooled_o = 0.0;
    for (const auto& [key, p] : expected) {
        const double e = p * draws;
        const double o = observed.count(key) ? observed.at(key) : 0.0;
        if (e < 5.0) {
            pooled_e += e;
            pooled_o += o;
        } else {
            chi2 += (o - e) * (o - e) / e;
            ++cells;
        }
    }
    if (pooled_e > 0.0) {
        chi2 += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
        ++cells;
    }
    const double pvalue = boost::math::cdf(boost::math::complement(boost::math::chi_squared(cells - 1), chi2));
    CAPTURE(chi2);
    CAPTURE(cells);
    CHECK(pvalue > 0.001);
}

TEST_CASE("EVPI matches a direct computation over the draws") {
    const ThetaSample s = draw_theta(case_study_prior(), 500, RiskFamily::LogitNormal, 31);
    const double z = 0.2;
    std::array<double, 3> sum{};
    double best = 0.0;
    for (const auto& t : s.draws) {
        const double p = t.h.apply(z);
        const SensSpec ss = sens_spec_at(t.risk, p);
        const double w = z / (1 - z);
        const std::array<double, 3> nb{0.0, t.phi * ss.sensitivity - (1 - t.phi) * (1 - ss.specificity) * w,
                                       t.phi - (1 - t.phi) * w};
        for (int k = 0; k < 3; ++k) {
            sum[static_cast<std::size_t>(k)] += nb[static_cast<std::size_t>(k)];
        }
        best += *std::max_element(nb.begin(), nb.end());
    }
    const double m = static_cast<double>(s.draws.size());
    const double evpi = best / m - *std::max_element(sum.begin(), sum.end()) / m;
    const VoIResult r = voi_run(s.draws, z, 300, Baseline::best_current(), 5);
    CHECK(r.evpi == doctest::Approx(evpi).epsilon(1e-9));
    CHECK(r.evsi <= r.evpi + 3 * r.evsi_se);
    CHECK((r.assurance >= 0.0 && r.assurance <= 1.0));
    CHECK(r.r_evsi == doctest::Approx(r.evsi / r.evpi));
}

TEST_CASE("no study means no gain") {
    const ThetaSample s = draw_theta(case_study_prior(), 300, RiskFamily::LogitNormal, 32);
    const VoIContext ctx(s.draws, 0.2, 9);
    const VoIResult r = ctx.evaluate(0);
    CHECK(r.evsi == 0.0);
    CHECK(r.current_winner == ctx.current_winner());
}

TEST_CASE("EVSI and assurance grow along a common-random-number grid") {
    const ThetaSample s = draw_theta(case_study_prior(), 2000, RiskFamily::LogitNormal, 33);
    const std::vector<std::size_t> grid{50, 149, 306, 522, 1181, 5000};
    const auto curve = evsi_curve(s.draws, 0.2, grid, Baseline::best_current(), 7);
    REQUIRE(curve.size() == grid.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve[i].n == grid[i]);
        CHECK(curve[i].evsi <= curve[i].evpi + 3 * curve[i].evsi_se);
        if (i > 0) {
            CHECK(curve[i].evsi >= curve[i - 1].evsi - 3 * curve[i].evsi_se);
            CHECK(curve[i].assurance >= curve[i - 1].assurance - 3 * curve[i].assurance_se);
        }
    }
    const std::vector<std::size_t> unsorted{300, 100};
    CHECK_THROWS_AS(evsi_curve(s.draws, 0.2, unsorted, Baseline::best_current(), 7), DomainError);
}

TEST_CASE("a point-mass prior carries no decision uncertainty") {
    const ThetaSample s = draw_theta(point_prior(), 1000, RiskFamily::LogitNormal, 1);
    const VoIResult r = voi_run(s.draws, 0.2, 20000, Baseline::best_current(), 3);
    CHECK(r.evpi == 0.0);
    CHECK(std::abs(r.evsi) <= 1e-15);
    CHECK(r.assurance == 1.0);
    CHECK(std::isnan(r.r_evsi));
}

TEST_CASE("a forced default shifts EVSI by the current-information gap") {
    const ThetaSample s = draw_theta(case_study_prior(), 1000, RiskFamily::LogitNormal, 34);
    const VoIContext ctx(s.draws, 0.2, 11);
    const VoIResult best = ctx.evaluate(400, Baseline::best_current());
    const VoIResult forced = ctx.evaluate(400, Baseline::forced(Strategy::TreatNone));
    const NBTriple& e = ctx.expected_nb();
    CHECK(forced.evsi - best.evsi == doctest::Approx(e.max() - e.nb_none).epsilon(1e-9));
    CHECK(forced.assurance == best.assurance);
}

TEST_CASE("results do not depend on the worker count") {
    const ThetaSample s = draw_theta(case_study_prior(), 400, RiskFamily::LogitNormal, 35);
    const VoIResult a = voi_run(s.draws, 0.2, 250, Baseline::best_current(), 13, 1);
    const VoIResult b = voi_run(s.draws, 0.2, 250, Baseline::best_current(), 13, 4);
    CHECK(a.assurance == b.assurance);
    CHECK(a.evsi == b.evsi);
    CHECK(a.evpi == b.evpi);
}

TEST_CASE("expected net benefit of sampling") {
    CHECK(enbs(0.002, 100, 100000, 0.5) == doctest::Approx(150.0));
    CHECK_THROWS_AS(VoIContext(std::vector<ThetaDraw>{}, 0.2, 1), DomainError);
}
