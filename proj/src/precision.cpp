#include "valplan/precision.hpp"

#include "valplan/error.hpp"
#include "valplan/numeric.hpp"
#include "valplan/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace valplan {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMaxRileyN = 1e7;

std::array<double, 3> all_nan() { return {kNaN, kNaN, kNaN}; }

double slope_width(const ThetaDraw& theta, const CalibrationModel& assumed, double n) {
    try {
        return 2.0 * kWaldZ * se_slope(slope_information(theta.risk, theta.h, assumed), n);
    } catch (const NumericError&) {
        return kNaN;
    }
}

std::array<double, 3> sample_based_widths(const ThetaDraw& theta, std::size_t n, Engine& rng,
                                          const PrecisionOptions& options) {
    ValidationSample s;
    try {
        s = simulate_sample(theta, n, rng);
    } catch (const NumericError&) {
        return all_nan();
    }
    const SampleEstimates est = estimate_metrics(s);
    std::array<double, 3> w = est.widths;
    if (options.slope_se == SlopeSe::Formula) {
        auto& slope = w[static_cast<std::size_t>(Metric::Slope)];
        slope = est.fit.converged && est.fit.slope > 0.0
                    ? slope_width(theta, CalibrationModel(est.fit.intercept, est.fit.slope),
                                  static_cast<double>(n))
                    : kNaN;
    }
    return w;
}

std::array<double, 3> two_step_widths(const ThetaDraw& theta, std::size_t n, Engine& rng) {
    const double nd = static_cast<double>(n);
    std::normal_distribution<double> z;
    const double phi_hat =
        std::clamp(theta.phi + std::sqrt(theta.phi * (1.0 - theta.phi) / nd) * z(rng), 1.0 / nd, 1.0 - 1.0 / nd);
    const double c_hat =
        std::clamp(theta.cstat + se_cstat(theta.cstat, theta.phi, nd) * z(rng), 1e-6, 1.0 - 1e-6);
    std::array<double, 3> w{};
    w[static_cast<std::size_t>(Metric::CStatistic)] = 2.0 * kWaldZ * se_cstat(c_hat, phi_hat, nd);
    w[static_cast<std::size_t>(Metric::OERatio)] = 2.0 * kWaldZ * se_log_oe(phi_hat, nd);

    auto& slope = w[static_cast<std::size_t>(Metric::Slope)];
    try {
        const double se = se_slope(theta, nd);
        const double beta_hat = std::max(0.01, theta.h.slope() + se * z(rng));
        slope = slope_width(theta, CalibrationModel(theta.h.intercept(), beta_hat), nd);
    } catch (const NumericError&) {
        slope = kNaN;
    }
    return w;
}

}  // namespace

double se_cstat(double c, double phi, double n) {
    const double half = n / 2.0 - 1.0;
    const double v = c * (1.0 - c) * (1.0 + half * (1.0 - c) / (2.0 - c) + half * c / (1.0 + c)) /
                     (n * n * phi * (1.0 - phi));
    return std::sqrt(v);
}

double se_log_oe(double phi, double n) { return std::sqrt((1.0 - phi) / (n * phi)); }

SlopeInformation slope_information(const RiskDistribution& risk, const CalibrationModel& true_h,
                                   const CalibrationModel& assumed) {
    auto term = [&](int power) {
        return expectation(risk, [&](const RiskPoint& pt) {
            const double x = true_h.predicted_logit(pt.logit);
            const double eta = assumed.intercept() + assumed.slope() * x;
            const double w = assumed == true_h ? pt.p * pt.q : numeric::expit(eta) * numeric::expit(-eta);
            return power == 0 ? w : power == 1 ? w * x : w * x * x;
        });
    };
    return {term(0), term(2), term(1)};
}

double se_slope(const SlopeInformation& info, double n) {
    const double det = info.i_alpha * info.i_beta - info.i_alpha_beta * info.i_alpha_beta;
    if (!(det > 1e-12 * info.i_alpha * info.i_beta)) {
        throw NumericError("singular recalibration information: predicted risks are degenerate");
    }
    return std::sqrt(info.i_alpha / (n * det));
}

double oe_interval_width(double oe, double se_log) {
    return oe * (std::exp(kWaldZ * se_log) - std::exp(-kWaldZ * se_log));
}

double riley_width(Metric metric, const ThetaDraw& theta, double n, double assumed_oe) {
    switch (metric) {
        case Metric::CStatistic:
            return 2.0 * kWaldZ * se_cstat(theta.cstat, theta.phi, n);
        case Metric::OERatio:
            return oe_interval_width(assumed_oe, se_log_oe(theta.phi, n));
        case Metric::Slope:
            return 2.0 * kWaldZ * se_slope(theta, n);
    }
    return kNaN;
}

std::size_t riley_min_n(Metric metric, const ThetaDraw& theta, double target_width, double assumed_oe) {
    if (!(target_width > 0.0)) {
        throw DomainError("target width must be positive");
    }
    std::function<double(double)> width;
    if (metric == Metric::Slope) {
        const SlopeInformation info = slope_information(theta);
        width = [info](double n) { return 2.0 * kWaldZ * se_slope(info, n); };
    } else {
        width = [&](double n) { return riley_width(metric, theta, n, assumed_oe); };
    }
    if (width(kMaxRileyN) > target_width) {
        std::ostringstream os;
        os << to_string(metric) << ": width " << target_width << " is not reachable for n <= 1e7";
        throw InfeasibleError(os.str());
    }
    std::size_t lo = 4;
    auto hi = static_cast<std::size_t>(kMaxRileyN);
    if (width(static_cast<double>(lo)) <= target_width) {
        return lo;
    }
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (width(static_cast<double>(mid)) <= target_width) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

std::array<double, 3> draw_widths(const ThetaDraw& theta, std::size_t n, Engine& rng,
                                  const PrecisionOptions& options) {
    return options.mode == SamplingMode::SampleBased ? sample_based_widths(theta, n, rng, options)
                                                     : two_step_widths(theta, n, rng);
}

std::vector<std::array<double, 3>> width_realizations(std::span<const ThetaDraw> draws, std::size_t n,
                                                      std::uint64_t seed, const PrecisionOptions& options) {
    const StreamTag tag =
        options.mode == SamplingMode::SampleBased ? StreamTag::PreposteriorData : StreamTag::TwoStep;
    std::vector<std::array<double, 3>> rows(draws.size());
    parallel_for(draws.size(), options.workers, [&](std::size_t j) {
        Engine rng = substream(seed, tag, j, n);
        rows[j] = draw_widths(draws[j], n, rng, options);
    });
    return rows;
}

PreposteriorWidths collect_widths(const std::vector<std::array<double, 3>>& rows, std::size_t n,
                                  double max_flag_rate) {
    PreposteriorWidths out;
    out.n = n;
    out.attempted = rows.size();
    for (auto& m : out.metrics) {
        m.widths.reserve(rows.size());
    }
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < 3; ++k) {
            if (std::isfinite(row[k]) && row[k] > 0.0) {
                out.metrics[k].widths.push_back(row[k]);
            } else {
                ++out.metrics[k].flagged;
            }
        }
    }
    for (const auto& m : out.metrics) {
        const double rate = static_cast<double>(m.flagged) / static_cast<double>(rows.size());
        if (rate > max_flag_rate) {
            std::ostringstream os;
            os << to_string(m.metric) << ": " << m.flagged << " of " << rows.size() << " simulated studies at n=" << n
               << " were degenerate or failed to converge (limit " << 100.0 * max_flag_rate << "%)";
            throw NumericError(os.str());
        }
    }
    return out;
}

PreposteriorWidths preposterior_widths(std::span<const ThetaDraw> draws, std::size_t n, std::uint64_t seed,
                                       const PrecisionOptions& options) {
    if (draws.empty()) {
        throw DomainError("preposterior_widths: no theta draws");
    }
    return collect_widths(width_realizations(draws, n, seed, options), n, options.max_flag_rate);
}

PreposteriorWidths preposterior_widths(const EvidencePrior& prior, RiskFamily family, std::size_t n,
                                       std::size_t count, std::uint64_t seed, const PrecisionOptions& options) {
    const ThetaSample theta = draw_theta(prior, count, family, seed, options.workers);
    return preposterior_widths(theta.draws, n, seed, options);
}

double summarize(std::span<const double> widths, WidthCriterion criterion) {
    if (widths.empty()) {
        throw DomainError("summarize: no widths");
    }
    if (criterion.kind == WidthCriterion::Kind::Expected) {
        return numeric::mean(widths);
    }
    return numeric::empirical_quantile(widths, criterion.q);
}

double summarize_mc_se(std::span<const double> widths, WidthCriterion criterion) {
    const double n = static_cast<double>(widths.size());
    if (widths.size() < 2) {
        return kNaN;
    }
    if (criterion.kind == WidthCriterion::Kind::Expected) {
        return numeric::sample_sd(widths) / std::sqrt(n);
    }
    // Distribution-free interval for the quantile from binomial order statistics.
    const double q = criterion.q;
    const double spread = kWaldZ * std::sqrt(n * q * (1.0 - q));
    const double lo_q = std::clamp((n * q - spread) / n, 1e-9, 1.0 - 1e-9);
    const double hi_q = std::clamp((n * q + spread) / n, 1e-9, 1.0 - 1e-9);
    return (numeric::empirical_quantile(widths, hi_q) - numeric::empirical_quantile(widths, lo_q)) /
           (2.0 * kWaldZ);
}

}  // namespace valplan
