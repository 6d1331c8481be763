#pragma once

#include "valplan/evidence.hpp"
#include "valplan/planner.hpp"
#include "valplan/precision.hpp"
#include "valplan/voi.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace valplan {

struct RunSettings {
    std::uint64_t seed = 0;
    std::size_t draws = 10000;
    std::optional<std::size_t> n;
    std::vector<std::size_t> n_grid;
    PrecisionOptions precision;
    SearchConfig search;
    double smoother_span = 0.75;
    std::size_t band_draws = 1000;
};

/// Point estimates for the frequentist calculation. Unset values fall back to
/// the means of the evidence marginals; unset targets to the width rules.
struct RileySettings {
    std::optional<double> prevalence;
    std::optional<double> cstat;
    std::optional<double> slope;
    std::optional<double> location;
    double assumed_oe = 1.0;
    std::array<std::optional<double>, 3> targets;  ///< indexed by Metric
};

struct PlanConfig {
    EvidencePrior prior;
    RiskFamily family = RiskFamily::LogitNormal;
    std::vector<SampleSizeRule> rules;
    std::optional<double> threshold;
    Baseline baseline;
    RunSettings run;
    RileySettings riley;

    PlannerOptions planner_options() const;
    /// Width target of the frequentist table for a metric, if any.
    std::optional<double> riley_target(Metric m) const;
};

/// Parses and validates a JSON configuration. Errors are ConfigError naming
/// the offending key path (for example `run.seed`).
PlanConfig parse_config(const std::string& text);
PlanConfig load_config(const std::filesystem::path& path);

}  // namespace valplan
