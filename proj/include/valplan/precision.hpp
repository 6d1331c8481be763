#pragma once

#include "valplan/evidence.hpp"
#include "valplan/sample.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace valplan {

inline constexpr double kWaldZ = 1.96;

// Large-sample standard errors.
double se_cstat(double c, double phi, double n);
double se_log_oe(double phi, double n);

/// Expected information terms E[p(1-p)], E[logit(pi)^2 p(1-p)],
/// E[logit(pi) p(1-p)] for the recalibration model.
struct SlopeInformation {
    double i_alpha;
    double i_beta;
    double i_alpha_beta;
};

/// Information with predicted risks pi = true_h^-1(p), p ~ risk, and outcome
/// risks given by `assumed` applied to pi.
SlopeInformation slope_information(const RiskDistribution& risk, const CalibrationModel& true_h,
                                   const CalibrationModel& assumed);

inline SlopeInformation slope_information(const ThetaDraw& theta) {
    return slope_information(theta.risk, theta.h, theta.h);
}

double se_slope(const SlopeInformation& info, double n);

inline double se_slope(const ThetaDraw& theta, double n) { return se_slope(slope_information(theta), n); }

/// Width of exp(log(oe) +- 1.96 se) on the O/E scale.
double oe_interval_width(double oe, double se_log);

/// Frequentist 95% CI width at sample size n; the O/E width is evaluated on
/// the O/E scale around `assumed_oe`.
double riley_width(Metric metric, const ThetaDraw& theta, double n, double assumed_oe = 1.0);

/// Smallest n whose frequentist width does not exceed target_width.
std::size_t riley_min_n(Metric metric, const ThetaDraw& theta, double target_width,
                        double assumed_oe = 1.0);

enum class SamplingMode { SampleBased, TwoStep };
enum class SlopeSe { Model, Formula };

struct PrecisionOptions {
    SamplingMode mode = SamplingMode::SampleBased;
    SlopeSe slope_se = SlopeSe::Model;
    unsigned workers = 1;
    double max_flag_rate = 0.02;
};

/// CI widths of a single pre-posterior realization at size n, indexed by
/// Metric. Entries are NaN for flagged (excluded) realizations.
std::array<double, 3> draw_widths(const ThetaDraw& theta, std::size_t n, Engine& rng,
                                  const PrecisionOptions& options);

struct PrecisionDraws {
    Metric metric;
    std::vector<double> widths;
    std::size_t flagged = 0;
};

struct PreposteriorWidths {
    std::size_t n = 0;
    std::size_t attempted = 0;
    std::array<PrecisionDraws, 3> metrics{PrecisionDraws{Metric::CStatistic, {}, 0},
                                          PrecisionDraws{Metric::OERatio, {}, 0},
                                          PrecisionDraws{Metric::Slope, {}, 0}};

    const PrecisionDraws& operator[](Metric m) const { return metrics[static_cast<std::size_t>(m)]; }
};

/// Raw width realizations (NaN when flagged), one row per theta draw.
/// Realization j always uses the substream (seed, j), so results do not
/// depend on the worker count.
std::vector<std::array<double, 3>> width_realizations(std::span<const ThetaDraw> draws, std::size_t n,
                                                      std::uint64_t seed, const PrecisionOptions& options);

/// Splits realizations by metric, dropping flagged entries. Throws
/// NumericError when a metric's flag rate exceeds max_flag_rate.
PreposteriorWidths collect_widths(const std::vector<std::array<double, 3>>& rows, std::size_t n,
                                  double max_flag_rate);

/// One width realization per theta draw.
PreposteriorWidths preposterior_widths(std::span<const ThetaDraw> draws, std::size_t n, std::uint64_t seed,
                                       const PrecisionOptions& options);

PreposteriorWidths preposterior_widths(const EvidencePrior& prior, RiskFamily family, std::size_t n,
                                       std::size_t count, std::uint64_t seed,
                                       const PrecisionOptions& options);

struct WidthCriterion {
    enum class Kind { Expected, Quantile };
    Kind kind = Kind::Expected;
    double q = 0.9;

    static WidthCriterion expected() { return {Kind::Expected, 0.0}; }
    static WidthCriterion quantile(double q) { return {Kind::Quantile, q}; }
};

/// ECIW (mean) or QCIW(q) (smallest w with F(w) >= q).
double summarize(std::span<const double> widths, WidthCriterion criterion);

/// Monte Carlo standard error of summarize().
double summarize_mc_se(std::span<const double> widths, WidthCriterion criterion);

struct BandOptions {
    double span = 0.75;
    unsigned workers = 1;
};

struct BandPoint {
    double pi;
    double lower;   ///< 2.5% quantile of smoothed-curve error
    double median;
    double upper;   ///< 97.5% quantile
    std::size_t count;
    std::size_t dropped;
};

/// Local-linear (tricube) smooth of y on x at x0 using the nearest
/// ceil(span * n) points; x must be sorted. Empty when x0 is outside the data
/// range or the local design is singular.
std::optional<double> local_linear(std::span<const double> x, std::span<const double> y, double x0,
                                   double span);

/// Pointwise quantiles of (smoothed calibration curve - true h) pooled over
/// theta draws and simulated samples. An empty grid selects the 1%..99%
/// quantiles of the pooled predicted risks.
std::vector<BandPoint> calibration_error_bands(std::span<const ThetaDraw> draws, std::size_t n,
                                               std::span<const double> grid, std::uint64_t seed,
                                               const BandOptions& options);

}  // namespace valplan
