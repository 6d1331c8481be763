#include "valplan/riskdist.hpp"

#include "valplan/error.hpp"
#include "valplan/numeric.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace valplan {

namespace {

using numeric::expit;
using numeric::logit;
using numeric::normal_cdf;
using numeric::normal_pdf;

// Latent standard-normal support used for the logit- and probit-normal
// families; the mass outside is below 1e-22.
constexpr double kLatentBound = 10.0;
constexpr int kSplineKnots = 512;

RiskPoint point_at_latent(const RiskDistribution& d, double z) {
    const double x = d.param1() + d.param2() * z;
    if (d.family() == RiskFamily::LogitNormal) {
        return {expit(x), expit(-x), x};
    }
    const double p = normal_cdf(x);
    const double q = normal_cdf(-x);
    return {p, q, std::log(p) - std::log(q)};
}

double latent_of(const RiskDistribution& d, double p) {
    const double x = d.family() == RiskFamily::LogitNormal ? logit(p) : numeric::normal_quantile(p);
    return (x - d.param1()) / d.param2();
}

double log_beta_pdf(double a, double b, double p, double q) {
    return (a - 1.0) * std::log(p) + (b - 1.0) * std::log(q) - boost::math::lgamma(a) -
           boost::math::lgamma(b) + boost::math::lgamma(a + b);
}

// Integral of g(point) * Beta(a,b) density over (0,1).
double beta_integral(double a, double b, const std::function<double(const RiskPoint&)>& g) {
    auto integrand = [&](const RiskPoint& pt) {
        if (pt.p <= 0.0 || pt.q <= 0.0) {
            return 0.0;
        }
        return g(pt) * std::exp(log_beta_pdf(a, b, pt.p, pt.q));
    };
    const numeric::QuadratureTolerance tol{};
    if (a >= 2.0 && b >= 2.0) {
        // Smooth density: integrate over its effective support.
        const double lo = boost::math::ibeta_inv(a, b, 1e-15);
        const double hi = boost::math::ibetac_inv(a, b, 1e-15);
        return numeric::integrate(
            [&](double p) { return integrand({p, 1.0 - p, logit(p)}); }, lo, hi, tol);
    }
    thread_local boost::math::quadrature::tanh_sinh<double> ts;
    double error = 0.0;
    double l1 = 0.0;
    const double value = ts.integrate(
        [&](double x, double xc) {
            const double p = x;
            const double q = x > 0.5 ? xc : 1.0 - x;
            return integrand({p, q, std::log(p) - std::log(q)});
        },
        0.0, 1.0, 1e-9, &error, &l1);
    if (!std::isfinite(value) || error > std::max(tol.absolute, tol.relative * 10.0 * l1)) {
        std::ostringstream os;
        os << "Beta(" << a << ", " << b << ") quadrature did not converge (error " << error << ")";
        throw NumericError(os.str());
    }
    return value;
}

double normal_family_cstat(const RiskDistribution& d) {
    const double m = mean(d);
    const double step = 2.0 * kLatentBound / (kSplineKnots - 1);
    auto lower_mass = [&](double z) { return point_at_latent(d, z).q * normal_pdf(z); };
    std::vector<double> g(kSplineKnots, 0.0);
    for (int i = 1; i < kSplineKnots; ++i) {
        const double z0 = -kLatentBound + step * (i - 1);
        g[i] = g[i - 1] + boost::math::quadrature::gauss<double, 7>::integrate(lower_mass, z0, z0 + step);
    }
    const boost::math::interpolators::cardinal_cubic_b_spline<double> spline(
        g.begin(), g.end(), -kLatentBound, step, lower_mass(-kLatentBound), lower_mass(kLatentBound));
    // The spline is cubic between knots, so a fixed Gauss rule per knot
    // interval is exact up to the smoothness of the other factor.
    auto upper_mass = [&](double z) { return point_at_latent(d, z).p * normal_pdf(z) * spline(z); };
    double concordant = 0.0;
    for (int i = 1; i < kSplineKnots; ++i) {
        const double z0 = -kLatentBound + step * (i - 1);
        concordant += boost::math::quadrature::gauss<double, 7>::integrate(upper_mass, z0, z0 + step);
    }
    return concordant / (m * (1.0 - m));
}

double beta_cstat(double a, double b) {
    // c = P(X > X') with X ~ Beta(a+1, b) (risks of events) and
    // X' ~ Beta(a, b+1) (risks of non-events); G has the closed form
    // (1-m) I_p(a, b+1).
    return beta_integral(a + 1.0, b, [&](const RiskPoint& pt) {
        return pt.p < 0.5 ? boost::math::ibeta(a, b + 1.0, pt.p) : 1.0 - boost::math::ibeta(b + 1.0, a, pt.q);
    });
}

}  // namespace

std::string_view to_string(RiskFamily family) {
    switch (family) {
        case RiskFamily::Beta:
            return "beta";
        case RiskFamily::LogitNormal:
            return "logitnormal";
        case RiskFamily::ProbitNormal:
            return "probitnormal";
    }
    return "unknown";
}

RiskFamily risk_family_from_string(std::string_view name) {
    if (name == "beta") {
        return RiskFamily::Beta;
    }
    if (name == "logitnormal" || name == "logit-normal") {
        return RiskFamily::LogitNormal;
    }
    if (name == "probitnormal" || name == "probit-normal") {
        return RiskFamily::ProbitNormal;
    }
    throw DomainError("unknown risk distribution family '" + std::string(name) + "'");
}

RiskDistribution::RiskDistribution(RiskFamily family, double param1, double param2)
    : family_(family), param1_(param1), param2_(param2) {
    if (!std::isfinite(param1) || !std::isfinite(param2) || !(param2 > 0.0)) {
        throw DomainError("risk distribution: second parameter must be positive and finite");
    }
    if (family == RiskFamily::Beta && !(param1 > 0.0)) {
        throw DomainError("risk distribution: Beta shape parameters must be positive");
    }
}

double RiskDistribution::density(double p) const {
    if (!(p > 0.0 && p < 1.0)) {
        return 0.0;
    }
    switch (family_) {
        case RiskFamily::Beta:
            return std::exp(log_beta_pdf(param1_, param2_, p, 1.0 - p));
        case RiskFamily::LogitNormal: {
            const double z = (logit(p) - param1_) / param2_;
            return normal_pdf(z) / (param2_ * p * (1.0 - p));
        }
        case RiskFamily::ProbitNormal: {
            const double x = numeric::normal_quantile(p);
            return normal_pdf((x - param1_) / param2_) / (param2_ * normal_pdf(x));
        }
    }
    return 0.0;
}

double RiskDistribution::quantile(double q) const {
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("quantile level must lie in (0,1)");
    }
    switch (family_) {
        case RiskFamily::Beta:
            return boost::math::ibeta_inv(param1_, param2_, q);
        case RiskFamily::LogitNormal:
            return expit(param1_ + param2_ * numeric::normal_quantile(q));
        case RiskFamily::ProbitNormal:
            return normal_cdf(param1_ + param2_ * numeric::normal_quantile(q));
    }
    return 0.0;
}

double expectation(const RiskDistribution& d, const std::function<double(const RiskPoint&)>& g) {
    if (d.family() == RiskFamily::Beta) {
        return beta_integral(d.param1(), d.param2(), g);
    }
    return numeric::integrate([&](double z) { return g(point_at_latent(d, z)) * normal_pdf(z); },
                              -kLatentBound, kLatentBound);
}

double mean(const RiskDistribution& d) {
    switch (d.family()) {
        case RiskFamily::Beta:
            return d.param1() / (d.param1() + d.param2());
        case RiskFamily::ProbitNormal:
            return normal_cdf(d.param1() / std::sqrt(1.0 + d.param2() * d.param2()));
        case RiskFamily::LogitNormal:
            break;
    }
    return numeric::integrate(
        [&](double z) { return expit(d.param1() + d.param2() * z) * normal_pdf(z); }, -kLatentBound,
        kLatentBound);
}

double cstat_of(const RiskDistribution& d) {
    if (d.family() == RiskFamily::Beta) {
        return beta_cstat(d.param1(), d.param2());
    }
    return normal_family_cstat(d);
}

RiskDistribution identify(RiskMoments target, RiskFamily family) {
    const double m = target.mean;
    const double c = target.cstat;
    if (!(m > 0.0 && m < 1.0)) {
        throw DomainError("identify: mean must lie in (0,1)");
    }
    if (!(c > 0.5 && c < 1.0)) {
        throw DomainError("identify: c-statistic must lie strictly between 0.5 and 1");
    }

    // Member of the family with mean m at a given spread.
    std::function<RiskDistribution(double)> at_spread;
    double spread_lo = 0.05;
    double spread_hi = 5.0;
    double hard_lo = 1e-10;
    double hard_hi = 1e3;
    switch (family) {
        case RiskFamily::Beta:
            // spread = 1 / (a + b)
            at_spread = [m](double s) { return RiskDistribution::beta(m / s, (1.0 - m) / s); };
            spread_lo = 0.01;
            spread_hi = 1.0;
            hard_lo = 1e-12;
            hard_hi = 1e4;
            break;
        case RiskFamily::ProbitNormal: {
            const double zm = numeric::normal_quantile(m);
            at_spread = [zm](double s) {
                return RiskDistribution::probit_normal(zm * std::sqrt(1.0 + s * s), s);
            };
            break;
        }
        case RiskFamily::LogitNormal:
            at_spread = [m](double s) {
                const double guess = logit(m) * std::sqrt(1.0 + 0.346 * s * s);
                numeric::RootOptions opt;
                opt.tolerance_bits = 50;
                const double mu = numeric::solve_monotone(
                    [&](double mu_) { return mean(RiskDistribution::logit_normal(mu_, s)) - m; },
                    guess - 0.25, guess + 0.25, opt);
                return RiskDistribution::logit_normal(mu, s);
            };
            break;
    }

    numeric::RootOptions opt;
    opt.positive = true;
    opt.hard_lo = hard_lo;
    opt.hard_hi = hard_hi;
    opt.tolerance_bits = 44;
    try {
        const double spread = numeric::solve_monotone(
            [&](double s) { return cstat_of(at_spread(s)) - c; }, spread_lo, spread_hi, opt);
        return at_spread(spread);
    } catch (const IdentificationError&) {
        throw;
    } catch (const NumericError& e) {
        double c_lo = 0.5;
        double c_hi = 1.0;
        try {
            c_lo = cstat_of(at_spread(hard_lo));
            c_hi = cstat_of(at_spread(hard_hi));
        } catch (const Error&) {
        }
        std::ostringstream os;
        os << "cannot identify a " << to_string(family) << " risk distribution with mean " << m
           << " and c-statistic " << c << "; achievable c range is [" << c_lo << ", " << c_hi
           << "] (" << e.what() << ")";
        throw IdentificationError(os.str(), c_lo, c_hi);
    }
}

SensSpec sens_spec_at(const RiskDistribution& d, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw DomainError("sens_spec_at: threshold must lie in (0,1)");
    }
    if (d.family() == RiskFamily::Beta) {
        const double a = d.param1();
        const double b = d.param2();
        return {boost::math::ibetac(a + 1.0, b, threshold), boost::math::ibeta(a, b + 1.0, threshold)};
    }
    const double zt = latent_of(d, threshold);
    if (zt <= -kLatentBound) {
        return {1.0, 0.0};
    }
    if (zt >= kLatentBound) {
        return {0.0, 1.0};
    }
    const double m = mean(d);
    const double above = numeric::integrate(
        [&](double z) { return point_at_latent(d, z).p * normal_pdf(z); }, zt, kLatentBound);
    const double below = numeric::integrate(
        [&](double z) { return point_at_latent(d, z).q * normal_pdf(z); }, -kLatentBound, zt);
    return {std::clamp(above / m, 0.0, 1.0), std::clamp(below / (1.0 - m), 0.0, 1.0)};
}

double draw(const RiskDistribution& d, Engine& rng) {
    constexpr double top = 1.0 - DBL_EPSILON / 2.0;
    double p = 0.0;
    switch (d.family()) {
        case RiskFamily::LogitNormal: {
            std::normal_distribution<double> z;
            p = expit(d.param1() + d.param2() * z(rng));
            break;
        }
        case RiskFamily::ProbitNormal: {
            std::normal_distribution<double> z;
            p = normal_cdf(d.param1() + d.param2() * z(rng));
            break;
        }
        case RiskFamily::Beta: {
            // Gamma(a) = Gamma(a + 1) * U^(1/a), kept on the log scale so tiny
            // shapes do not underflow.
            std::gamma_distribution<double> ga(d.param1() + 1.0);
            std::gamma_distribution<double> gb(d.param2() + 1.0);
            const double log_x = std::log(ga(rng)) + std::log(uniform01(rng)) / d.param1();
            const double log_y = std::log(gb(rng)) + std::log(uniform01(rng)) / d.param2();
            p = expit(log_x - log_y);
            break;
        }
    }
    return std::clamp(p, DBL_MIN, top);
}

std::vector<double> sample(const RiskDistribution& d, std::size_t n, Engine& rng) {
    if (n == 0) {
        throw DomainError("sample: n must be at least 1");
    }
    std::vector<double> out(n);
    for (auto& p : out) {
        p = draw(d, rng);
    }
    return out;
}

}  // namespace valplan
