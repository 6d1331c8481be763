#include "valplan/calibration.hpp"

#include "valplan/error.hpp"
#include "valplan/numeric.hpp"

#include <cmath>
#include <sstream>

namespace valplan {

using numeric::expit;
using numeric::logit;

CalibrationModel::CalibrationModel(double intercept, double slope)
    : intercept_(intercept), slope_(slope) {
    if (!std::isfinite(intercept)) {
        throw DomainError("calibration intercept must be finite");
    }
    if (!(slope > 0.0) || !std::isfinite(slope)) {
        throw DomainError("calibration slope must be positive (h must be increasing)");
    }
}

double CalibrationModel::apply(double pi) const {
    if (!(pi > 0.0 && pi < 1.0)) {
        throw DomainError("apply: predicted risk must lie in (0,1)");
    }
    return expit(intercept_ + slope_ * logit(pi));
}

double CalibrationModel::invert(double p) const {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("invert: calibrated risk must lie in (0,1)");
    }
    return expit(predicted_logit(logit(p)));
}

std::string_view to_string(LocationKind kind) {
    switch (kind) {
        case LocationKind::Intercept:
            return "intercept";
        case LocationKind::OERatio:
            return "oe_ratio";
        case LocationKind::MeanCalibration:
            return "mean_calibration";
    }
    return "unknown";
}

double expected_predicted_risk(const CalibrationModel& h, const RiskDistribution& d) {
    return expectation(d, [&](const RiskPoint& pt) { return expit(h.predicted_logit(pt.logit)); });
}

double implied_predicted_mean(const CalibrationLocationSpec& spec, double risk_mean) {
    switch (spec.kind) {
        case LocationKind::OERatio:
            if (!(spec.value > 0.0)) {
                throw DomainError("O/E ratio must be positive");
            }
            return risk_mean / spec.value;
        case LocationKind::MeanCalibration:
            return risk_mean - spec.value;
        case LocationKind::Intercept:
            break;
    }
    throw DomainError("an intercept specification does not imply E(pi) without a slope");
}

CalibrationModel resolve_intercept(const CalibrationLocationSpec& spec, double slope,
                                   const RiskDistribution& d) {
    if (spec.kind == LocationKind::Intercept) {
        return {spec.value, slope};
    }
    if (!(slope > 0.0)) {
        throw DomainError("calibration slope must be positive (h must be increasing)");
    }
    const double target = implied_predicted_mean(spec, mean(d));
    if (!(target > 0.0 && target < 1.0)) {
        std::ostringstream os;
        os << "implied mean predicted risk " << target << " is outside (0,1)";
        throw DomainError(os.str());
    }
    // E(pi) is strictly decreasing in the intercept.
    const double guess = logit(mean(d)) - slope * logit(target);
    numeric::RootOptions opt;
    opt.tolerance_bits = 50;
    opt.hard_lo = -200.0;
    opt.hard_hi = 200.0;
    const double alpha = numeric::solve_monotone(
        [&](double a) { return expected_predicted_risk(CalibrationModel{a, slope}, d) - target; },
        guess - 0.5, guess + 0.5, opt);
    return {alpha, slope};
}

}  // namespace valplan
