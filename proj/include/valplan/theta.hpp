#pragma once

#include "valplan/calibration.hpp"
#include "valplan/riskdist.hpp"

namespace valplan {

/// One joint realization of (prevalence, c-statistic, calibration function)
/// together with the calibrated-risk distribution it identifies.
struct ThetaDraw {
    double phi;
    double cstat;
    CalibrationModel h;
    RiskDistribution risk;
};

/// Identifies the risk distribution from (phi, c) and resolves the intercept
/// from the location specification.
ThetaDraw make_theta(double phi, double cstat, double slope, const CalibrationLocationSpec& location,
                     RiskFamily family);

}  // namespace valplan
