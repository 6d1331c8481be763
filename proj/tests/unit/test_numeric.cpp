#include "valplan/error.hpp"
#include "valplan/numeric.hpp"
#include "valplan/rng.hpp"
#include "valplan/parallel.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace valplan;

TEST_CASE("logit and expit are inverse and stable in the tails") {
    for (double p : {1e-12, 0.01, 0.3, 0.5, 0.77, 1 - 1e-9}) {
        CHECK(numeric::expit(numeric::logit(p)) == doctest::Approx(p).epsilon(1e-10));
    }
    CHECK(numeric::expit(-800.0) >= 0.0);
    CHECK(numeric::expit(800.0) == 1.0);
    CHECK(numeric::logit(0.5) == 0.0);
}

TEST_CASE("normal quantile inverts the CDF") {
    CHECK(numeric::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    for (double p : {1e-6, 0.1, 0.5, 0.9}) {
        CHECK(numeric::normal_cdf(numeric::normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
    }
}

TEST_CASE("integrate matches closed forms") {
    CHECK(numeric::integrate([](double x) { return x * x; }, 0.0, 3.0) == doctest::Approx(9.0).epsilon(1e-10));
    CHECK(numeric::integrate([](double x) { return std::exp(-x); }, 0.0, 50.0) ==
          doctest::Approx(1.0 - std::exp(-50.0)).epsilon(1e-10));
    CHECK(numeric::integrate(numeric::normal_pdf, -8.0, 8.0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("solve_monotone widens the bracket") {
    const double r = numeric::solve_monotone([](double x) { return x * x * x - 1000.0; }, 0.0, 1.0);
    CHECK(r == doctest::Approx(10.0).epsilon(1e-10));
    numeric::RootOptions opt;
    opt.positive = true;
    const double s = numeric::solve_monotone([](double x) { return std::log(x) - 5.0; }, 0.5, 1.0, opt);
    CHECK(s == doctest::Approx(std::exp(5.0)).epsilon(1e-10));
}

TEST_CASE("empirical quantile uses the inverse-CDF convention") {
    std::vector<double> v{7, 3, 1, 10, 2, 9, 4, 8, 6, 5};
    CHECK(numeric::empirical_quantile(v, 0.9) == 9.0);
    CHECK(numeric::empirical_quantile(v, 0.91) == 10.0);
    CHECK(numeric::empirical_quantile(v, 0.1) == 1.0);
    CHECK(numeric::empirical_quantile(v, 0.5) == 5.0);
}

TEST_CASE("average ranks with ties") {
    std::vector<double> v{3.0, 1.0, 3.0, 2.0, 3.0};
    const auto r = numeric::ranks(v);
    CHECK(r == std::vector<double>{4.0, 1.0, 4.0, 2.0, 4.0});
}

TEST_CASE("spearman of a monotone transform is one") {
    std::vector<double> x{0.1, 0.5, 0.2, 0.9, 0.7};
    std::vector<double> y;
    for (double v : x) {
        y.push_back(std::exp(3 * v));
    }
    CHECK(numeric::spearman(x, y) == doctest::Approx(1.0));
    std::vector<double> z{5, 4, 3, 2, 1};
    std::vector<double> w{1, 2, 3, 4, 5};
    CHECK(numeric::spearman(z, w) == doctest::Approx(-1.0));
}

TEST_CASE("mean and sample sd") {
    std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    CHECK(numeric::mean(v) == doctest::Approx(5.0));
    CHECK(numeric::sample_sd(v) == doctest::Approx(std::sqrt(32.0 / 7.0)));
}

TEST_CASE("substreams are reproducible and distinct") {
    Engine a = substream(1, StreamTag::MarginalDraw, 3);
    Engine b = substream(1, StreamTag::MarginalDraw, 3);
    Engine c = substream(1, StreamTag::MarginalDraw, 4);
    const auto va = a();
    CHECK(va == b());
    CHECK(va != c());
    Engine u = substream(9, StreamTag::Bands, 0);
    for (int i = 0; i < 1000; ++i) {
        const double x = uniform01(u);
        CHECK((x > 0.0 && x < 1.0));
    }
}

TEST_CASE("parallel_for visits each index once and rethrows the lowest failure") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) {
        CHECK(h == 1);
    }
    try {
        parallel_for(100, 4, [](std::size_t i) {
            if (i == 30 || i == 80) {
                throw DomainError(std::to_string(i));
            }
        });
        FAIL("expected an exception");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()) == "30");
    }
}
