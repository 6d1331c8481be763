#pragma once

#include "valplan/evidence.hpp"

namespace valplan::testing {

/// Prior of the COVID-19 deterioration case study.
inline EvidencePrior case_study_prior() {
    EvidencePrior p;
    p.marginals[0] = {MarginalFamily::Beta, Parameterization::NativeParams, 119.64, 159.91};
    p.marginals[1] = {MarginalFamily::LogitNormal, Parameterization::NativeParams, 1.1565, 0.0412};
    p.marginals[2] = {MarginalFamily::Normal, Parameterization::NativeParams, 0.995, 0.0237};
    p.marginals[3] = {MarginalFamily::Normal, Parameterization::NativeParams, -0.0093, 0.1245};
    p.location_kind = LocationKind::MeanCalibration;
    return p;
}

/// Every marginal a point mass at the case-study point estimates.
inline EvidencePrior point_prior(double phi = 0.428, double c = 0.76, double slope = 0.99,
                                 double location = -0.01) {
    EvidencePrior p;
    p.marginals[0] = MarginalSpec::point(phi);
    p.marginals[1] = MarginalSpec::point(c);
    p.marginals[2] = MarginalSpec::point(slope);
    p.marginals[3] = MarginalSpec::point(location);
    p.location_kind = LocationKind::MeanCalibration;
    return p;
}

}  // namespace valplan::testing
