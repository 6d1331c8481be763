#pragma once

#include "valplan/precision.hpp"
#include "valplan/voi.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace valplan {

enum class RuleMetric { CStatistic, OERatio, Slope, NetBenefit };
enum class RuleCriterion { ECIW, QCIW, Assurance, EVSITarget };

std::string_view to_string(RuleMetric m);
std::string_view to_string(RuleCriterion c);

/// A target the future validation study must meet. Widths are compared with
/// `target` directly; Assurance and EVSITarget use it as a probability / ratio.
struct SampleSizeRule {
    RuleMetric metric = RuleMetric::CStatistic;
    RuleCriterion criterion = RuleCriterion::ECIW;
    double target = 0.1;
    double q = 0.9;  ///< QCIW quantile

    bool is_width_rule() const { return criterion == RuleCriterion::ECIW || criterion == RuleCriterion::QCIW; }
    Metric width_metric() const;
    WidthCriterion width_criterion() const;
    /// Short identifier such as "cstat_eciw" or "slope_qciw90".
    std::string label() const;
    void validate() const;
};

struct SearchConfig {
    std::size_t n_min = 20;
    std::size_t n_max = 1'000'000;
    double rm_step_scale = 1.0;
    std::size_t rm_iterations = 4000;
    std::size_t confirm_draws = 5000;
    double confirm_alpha = 0.05;

    void validate() const;
};

struct PlannerOptions {
    PrecisionOptions precision;
    SearchConfig search;
    std::optional<double> threshold;  ///< NB threshold z
    Baseline baseline;
};

struct TracePoint {
    std::size_t iteration;
    double n;      ///< current iterate (continuous for Robbins-Monro)
    double value;  ///< width, indicator, assurance or rEVSI observed at n
};

struct RuleResult {
    SampleSizeRule rule;
    std::size_t n = 0;
    double estimate = 0.0;  ///< criterion at n from the confirmation run
    double mc_se = 0.0;
    std::size_t confirmation_steps = 0;
    std::vector<TracePoint> trace;
    std::vector<std::string> warnings;
};

struct MetricDiagnostics {
    Metric metric;
    double eciw;
    double eciw_se;
    double qciw90;
    double qciw90_se;
    std::size_t flagged;
};

struct PlanDiagnostics {
    std::size_t n = 0;
    std::vector<MetricDiagnostics> metrics;
    std::optional<VoIResult> voi;
};

struct PlanResult {
    std::vector<RuleResult> components;
    std::size_t final_n = 0;
    PlanDiagnostics diagnostics;
    std::vector<std::string> warnings;
};

/// Smallest n meeting an ECIW or QCIW rule: Robbins-Monro on log n, then a
/// confirmation run on fresh data that steps n up by 5% while the criterion
/// is violated at confidence 1 - confirm_alpha.
RuleResult solve_width_rule(std::span<const ThetaDraw> pool, const SampleSizeRule& rule,
                            const PlannerOptions& options, std::uint64_t seed);

/// Smallest n meeting an NB assurance or rEVSI rule by doubling and bisection
/// with common random numbers, followed by the same confirmation.
RuleResult solve_assurance_rule(std::span<const ThetaDraw> pool, const SampleSizeRule& rule,
                                const PlannerOptions& options, std::uint64_t seed);

RuleResult solve_rule(std::span<const ThetaDraw> pool, const SampleSizeRule& rule, const PlannerOptions& options,
                      std::uint64_t seed);

/// Seed used for rule `index` of a plan.
std::uint64_t rule_seed(std::uint64_t seed, std::size_t index);

/// Solves every rule, takes the largest n and evaluates all diagnostics there.
PlanResult plan(std::span<const ThetaDraw> pool, std::span<const SampleSizeRule> rules,
                const PlannerOptions& options, std::uint64_t seed);

PlanDiagnostics diagnostics_at(std::span<const ThetaDraw> pool, std::size_t n, const PlannerOptions& options,
                               std::uint64_t seed);

}  // namespace valplan
