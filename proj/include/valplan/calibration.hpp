#pragma once

#include "valplan/riskdist.hpp"

#include <string_view>

namespace valplan {

/// Logit-linear calibration: logit(p) = intercept + slope * logit(pi).
class CalibrationModel {
public:
    CalibrationModel(double intercept, double slope);

    double intercept() const noexcept { return intercept_; }
    double slope() const noexcept { return slope_; }

    /// Calibrated risk for a predicted risk.
    double apply(double pi) const;
    /// Predicted risk that maps to calibrated risk p.
    double invert(double p) const;
    /// logit(invert(p)) given logit(p), exact in the tails.
    double predicted_logit(double calibrated_logit) const {
        return (calibrated_logit - intercept_) / slope_;
    }

    bool operator==(const CalibrationModel&) const = default;

private:
    double intercept_;
    double slope_;
};

enum class LocationKind { Intercept, OERatio, MeanCalibration };

std::string_view to_string(LocationKind kind);

struct CalibrationLocationSpec {
    LocationKind kind;
    double value;
};

/// E(pi) = E[invert(h, p)] under p ~ d.
double expected_predicted_risk(const CalibrationModel& h, const RiskDistribution& d);

/// Mean predicted risk implied by a location specification and the mean of d.
double implied_predicted_mean(const CalibrationLocationSpec& spec, double risk_mean);

/// Calibration model with the given slope whose intercept reproduces the
/// location specification under d.
CalibrationModel resolve_intercept(const CalibrationLocationSpec& spec, double slope,
                                   const RiskDistribution& d);

}  // namespace valplan
