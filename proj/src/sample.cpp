#include "valplan/sample.hpp"

#include "valplan/error.hpp"
#include "valplan/numeric.hpp"
#include "valplan/precision.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>

namespace valplan {

namespace {

constexpr double kPiFloor = DBL_MIN;
constexpr double kPiCeil = 1.0 - DBL_EPSILON / 2.0;

bool both_classes(const std::vector<std::uint8_t>& y) {
    const auto events = std::count(y.begin(), y.end(), std::uint8_t{1});
    return events > 0 && static_cast<std::size_t>(events) < y.size();
}

double log_likelihood(std::span<const double> x, std::span<const std::uint8_t> y, double a, double b) {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eta = a + b * x[i];
        // log(1 + exp(eta)) without overflow
        const double softplus = eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
        ll += (y[i] ? eta : 0.0) - softplus;
    }
    return ll;
}

}  // namespace

std::string_view to_string(Metric metric) {
    switch (metric) {
        case Metric::CStatistic:
            return "cstat";
        case Metric::OERatio:
            return "oe";
        case Metric::Slope:
            return "slope";
    }
    return "unknown";
}

ValidationSample simulate_sample(const ThetaDraw& theta, std::size_t n, Engine& rng) {
    if (n < 20) {
        throw DomainError("validation sample size must be at least 20");
    }
    ValidationSample s;
    for (int attempt = 0; attempt < 2; ++attempt) {
        s.pi.assign(n, 0.0);
        s.y.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = draw(theta.risk, rng);
            s.y[i] = uniform01(rng) < p ? 1 : 0;
            const double lp = theta.h.predicted_logit(numeric::logit(p));
            s.pi[i] = std::clamp(numeric::expit(lp), kPiFloor, kPiCeil);
        }
        if (both_classes(s.y)) {
            return s;
        }
    }
    throw NumericError("simulated validation sample contains a single outcome class");
}

double concordance(std::span<const double> pi, std::span<const std::uint8_t> y) {
    if (pi.size() != y.size()) {
        throw DomainError("concordance: size mismatch");
    }
    const std::vector<double> r = numeric::ranks(pi);
    double events = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i]) {
            events += 1.0;
            rank_sum += r[i];
        }
    }
    const double non_events = static_cast<double>(y.size()) - events;
    if (events == 0.0 || non_events == 0.0) {
        throw DomainError("concordance requires both events and non-events");
    }
    return (rank_sum - events * (events + 1.0) / 2.0) / (events * non_events);
}

RecalibrationFit fit_recalibration(std::span<const double> pi, std::span<const std::uint8_t> y) {
    if (pi.size() != y.size() || pi.empty()) {
        throw DomainError("fit_recalibration: size mismatch or empty input");
    }
    std::vector<double> x(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) {
        x[i] = numeric::logit(std::clamp(pi[i], kPiFloor, kPiCeil));
    }
    RecalibrationFit fit;
    double a = 0.0;
    double b = 1.0;
    double ll = log_likelihood(x, y, a, b);
    double iaa = 0.0;
    double ibb = 0.0;
    double iab = 0.0;
    for (int it = 1; it <= 100; ++it) {
        double ga = 0.0;
        double gb = 0.0;
        iaa = ibb = iab = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double p = numeric::expit(a + b * x[i]);
            const double w = p * (1.0 - p);
            const double r = (y[i] ? 1.0 : 0.0) - p;
            ga += r;
            gb += r * x[i];
            iaa += w;
            iab += w * x[i];
            ibb += w * x[i] * x[i];
        }
        const double det = iaa * ibb - iab * iab;
        fit.iterations = it;
        if (!(det > 0.0) || !std::isfinite(det)) {
            break;
        }
        double da = (ibb * ga - iab * gb) / det;
        double db = (iaa * gb - iab * ga) / det;
        double next_ll = log_likelihood(x, y, a + da, b + db);
        int halvings = 0;
        while (!(next_ll >= ll - 1e-12 * std::abs(ll)) && halvings < 30) {
            da *= 0.5;
            db *= 0.5;
            next_ll = log_likelihood(x, y, a + da, b + db);
            ++halvings;
        }
        a += da;
        b += db;
        ll = next_ll;
        if (std::abs(b) > 1e3 || !std::isfinite(a) || !std::isfinite(b)) {
            break;
        }
        if (std::abs(da) <= 1e-10 * (1.0 + std::abs(a)) && std::abs(db) <= 1e-10 * (1.0 + std::abs(b))) {
            fit.converged = true;
            break;
        }
    }
    fit.intercept = a;
    fit.slope = b;
    if (fit.converged) {
        // Information at the converged estimate.
        iaa = ibb = iab = 0.0;
        for (double xi : x) {
            const double p = numeric::expit(a + b * xi);
            const double w = p * (1.0 - p);
            iaa += w;
            iab += w * xi;
            ibb += w * xi * xi;
        }
        const double det = iaa * ibb - iab * iab;
        if (det > 0.0) {
            fit.slope_se = std::sqrt(iaa / det);
        } else {
            fit.converged = false;
        }
    }
    if (!fit.converged) {
        fit.slope_se = std::numeric_limits<double>::quiet_NaN();
    }
    return fit;
}

SampleEstimates estimate_metrics(const ValidationSample& s) {
    const double n = static_cast<double>(s.size());
    SampleEstimates est;
    double events = 0.0;
    double pi_sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        events += s.y[i];
        pi_sum += s.pi[i];
    }
    est.phi_hat = events / n;
    est.c_hat = concordance(s.pi, s.y);
    est.oe_hat = events / pi_sum;
    est.mean_calibration_hat = (events - pi_sum) / n;
    est.fit = fit_recalibration(s.pi, s.y);

    const double z2 = 2.0 * kWaldZ;
    est.widths[static_cast<std::size_t>(Metric::CStatistic)] = z2 * se_cstat(est.c_hat, est.phi_hat, n);
    est.widths[static_cast<std::size_t>(Metric::OERatio)] = z2 * se_log_oe(est.phi_hat, n);
    est.widths[static_cast<std::size_t>(Metric::Slope)] =
        est.fit.converged ? z2 * est.fit.slope_se : std::numeric_limits<double>::quiet_NaN();
    return est;
}

}  // namespace valplan
