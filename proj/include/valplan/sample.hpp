#pragma once

#include "valplan/rng.hpp"
#include "valplan/theta.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace valplan {

enum class Metric { CStatistic = 0, OERatio = 1, Slope = 2 };

inline constexpr std::array<Metric, 3> kAllMetrics{Metric::CStatistic, Metric::OERatio, Metric::Slope};

std::string_view to_string(Metric metric);

/// Predicted risks and binary outcomes of a (simulated) validation study.
struct ValidationSample {
    std::vector<double> pi;
    std::vector<std::uint8_t> y;

    std::size_t size() const noexcept { return pi.size(); }
};

/// p ~ theta.risk, Y ~ Bernoulli(p), pi = h^-1(p). A sample without events or
/// without non-events is redrawn once, then reported as a NumericError.
ValidationSample simulate_sample(const ThetaDraw& theta, std::size_t n, Engine& rng);

/// Concordance of pi with y; ties count one half. Requires both outcome classes.
double concordance(std::span<const double> pi, std::span<const std::uint8_t> y);

/// Maximum-likelihood fit of logit P(Y=1) = a + b * logit(pi).
struct RecalibrationFit {
    double intercept = 0.0;
    double slope = 1.0;
    double slope_se = 0.0;
    int iterations = 0;
    bool converged = false;
};

RecalibrationFit fit_recalibration(std::span<const double> pi, std::span<const std::uint8_t> y);

struct SampleEstimates {
    double phi_hat = 0.0;
    double c_hat = 0.0;
    double oe_hat = 0.0;
    double mean_calibration_hat = 0.0;
    RecalibrationFit fit;
    /// 95% Wald widths (3.92 SE), indexed by Metric. The O/E width is on the
    /// log scale. The slope width is NaN when the fit did not converge.
    std::array<double, 3> widths{};
};

SampleEstimates estimate_metrics(const ValidationSample& s);

}  // namespace valplan
