#include "valplan/planner.hpp"

#include "valplan/error.hpp"
#include "valplan/numeric.hpp"
#include "valplan/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace valplan {

namespace {

constexpr std::size_t kPilotDraws = 200;
constexpr std::size_t kMaxConfirmSteps = 200;
constexpr double kConfirmStep = 1.05;
constexpr double kGainOffset = 10.0;

std::string percent(double p) {
    std::ostringstream os;
    os << p * 100.0;
    return os.str();
}

std::size_t clamp_n(double n, const SearchConfig& cfg) {
    if (!std::isfinite(n)) {
        return cfg.n_max;
    }
    return static_cast<std::size_t>(
        std::clamp(std::ceil(n), static_cast<double>(cfg.n_min), static_cast<double>(cfg.n_max)));
}

std::size_t step_up(std::size_t n) {
    return std::max(n + 1, static_cast<std::size_t>(std::ceil(static_cast<double>(n) * kConfirmStep)));
}

// Width criterion of the population formulas over a set of theta draws.
class FormulaCriterion {
public:
    FormulaCriterion(std::span<const ThetaDraw> draws, Metric metric, WidthCriterion criterion)
        : draws_(draws), metric_(metric), criterion_(criterion) {
        if (metric == Metric::Slope) {
            info_.resize(draws.size());
            for (std::size_t j = 0; j < draws.size(); ++j) {
                info_[j] = slope_information(draws[j]);
            }
        }
    }

    double operator()(double n) const {
        std::vector<double> w(draws_.size());
        for (std::size_t j = 0; j < draws_.size(); ++j) {
            const ThetaDraw& t = draws_[j];
            switch (metric_) {
                case Metric::CStatistic:
                    w[j] = 2.0 * kWaldZ * se_cstat(t.cstat, t.phi, n);
                    break;
                case Metric::OERatio:
                    w[j] = 2.0 * kWaldZ * se_log_oe(t.phi, n);
                    break;
                case Metric::Slope:
                    w[j] = 2.0 * kWaldZ * se_slope(info_[j], n);
                    break;
            }
        }
        return summarize(w, criterion_);
    }

private:
    std::span<const ThetaDraw> draws_;
    Metric metric_;
    WidthCriterion criterion_;
    std::vector<SlopeInformation> info_;
};

std::span<const ThetaDraw> head(std::span<const ThetaDraw> pool, std::size_t count) {
    return pool.first(std::min(count, pool.size()));
}

std::string oscillation_warning(const std::vector<TracePoint>& trace) {
    if (trace.size() < 8) {
        return {};
    }
    const std::size_t start = trace.size() - trace.size() / 4;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    double sum = 0.0;
    for (std::size_t i = start; i < trace.size(); ++i) {
        lo = std::min(lo, trace[i].n);
        hi = std::max(hi, trace[i].n);
        sum += trace[i].n;
    }
    const double avg = sum / static_cast<double>(trace.size() - start);
    if ((hi - lo) / avg > 0.5) {
        std::ostringstream os;
        os << "search did not settle: n ranged over " << lo << ".." << hi << " in the last quarter of iterations";
        return os.str();
    }
    return {};
}

}  // namespace

std::string_view to_string(RuleMetric m) {
    switch (m) {
        case RuleMetric::CStatistic:
            return "cstat";
        case RuleMetric::OERatio:
            return "oe";
        case RuleMetric::Slope:
            return "slope";
        case RuleMetric::NetBenefit:
            return "nb";
    }
    return "unknown";
}

std::string_view to_string(RuleCriterion c) {
    switch (c) {
        case RuleCriterion::ECIW:
            return "eciw";
        case RuleCriterion::QCIW:
            return "qciw";
        case RuleCriterion::Assurance:
            return "assurance";
        case RuleCriterion::EVSITarget:
            return "revsi";
    }
    return "unknown";
}

Metric SampleSizeRule::width_metric() const {
    switch (metric) {
        case RuleMetric::CStatistic:
            return Metric::CStatistic;
        case RuleMetric::OERatio:
            return Metric::OERatio;
        case RuleMetric::Slope:
            return Metric::Slope;
        case RuleMetric::NetBenefit:
            break;
    }
    throw DomainError("net benefit has no confidence-interval width");
}

WidthCriterion SampleSizeRule::width_criterion() const {
    return criterion == RuleCriterion::QCIW ? WidthCriterion::quantile(q) : WidthCriterion::expected();
}

std::string SampleSizeRule::label() const {
    std::string out = std::string(to_string(metric)) + "_" + std::string(to_string(criterion));
    if (criterion == RuleCriterion::QCIW) {
        out += percent(q);
    } else if (!is_width_rule()) {
        out += percent(target);
    }
    return out;
}

void SampleSizeRule::validate() const {
    const bool nb = metric == RuleMetric::NetBenefit;
    if (is_width_rule()) {
        if (nb) {
            throw DomainError("net benefit rules must use the assurance or revsi criterion");
        }
        if (!(target > 0.0) || !std::isfinite(target)) {
            throw DomainError(label() + ": target width must be positive");
        }
        if (criterion == RuleCriterion::QCIW && !(q > 0.0 && q < 1.0)) {
            throw DomainError(label() + ": quantile must lie in (0,1)");
        }
        return;
    }
    if (!nb) {
        throw DomainError("assurance and revsi criteria apply to net benefit only");
    }
    if (!(target > 0.0 && target < 1.0)) {
        throw DomainError(label() + ": target must lie in (0,1)");
    }
}

void SearchConfig::validate() const {
    if (n_min < 20) {
        throw DomainError("search.n_min must be at least 20");
    }
    if (n_max > 10'000'000 || n_max <= n_min) {
        throw DomainError("search.n_max must exceed n_min and be at most 1e7");
    }
    if (!(rm_step_scale > 0.0)) {
        throw DomainError("search.rm_step_scale must be positive");
    }
    if (rm_iterations < 500) {
        throw DomainError("search.rm_iterations must be at least 500");
    }
    if (confirm_draws < 100) {
        throw DomainError("search.confirm_draws must be at least 100");
    }
    if (!(confirm_alpha > 0.0 && confirm_alpha < 0.5)) {
        throw DomainError("search.confirm_alpha must lie in (0, 0.5)");
    }
}

std::uint64_t rule_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed, 0x706c616eULL, index); }

RuleResult solve_width_rule(std::span<const ThetaDraw> pool, const SampleSizeRule& rule,
                            const PlannerOptions& options, std::uint64_t seed) {
    rule.validate();
    const SearchConfig& cfg = options.search;
    cfg.validate();
    if (pool.empty()) {
        throw DomainError("no theta draws to plan with");
    }
    const Metric metric = rule.width_metric();
    const WidthCriterion criterion = rule.width_criterion();
    const auto mi = static_cast<std::size_t>(metric);
    const double tau = rule.target;

    RuleResult result;
    result.rule = rule;

    // Starting point from the population formulas, refined by a small pilot of
    // simulated widths.
    const auto pilot = head(pool, kPilotDraws);
    const FormulaCriterion formula(pilot, metric, criterion);
    const double at_max = formula(static_cast<double>(cfg.n_max));
    if (at_max > tau) {
        std::ostringstream os;
        os << rule.label() << ": target " << tau << " is not reachable for n <= " << cfg.n_max
           << " (expected criterion at n_max is " << at_max << ")";
        throw InfeasibleError(os.str());
    }
    double n0 = 1000.0;
    for (int k = 0; k < 3; ++k) {
        n0 = std::clamp(n0 * std::pow(formula(n0) / tau, 2.0), static_cast<double>(cfg.n_min),
                        static_cast<double>(cfg.n_max));
    }
    PrecisionOptions pilot_options = options.precision;
    pilot_options.max_flag_rate = 1.0;
    const auto pilot_n = clamp_n(n0, cfg);
    const PreposteriorWidths pw =
        preposterior_widths(pilot, pilot_n, mix_seed(seed, static_cast<std::uint64_t>(StreamTag::RobbinsMonro)),
                            pilot_options);
    const auto& pilot_widths = pw.metrics[mi].widths;
    double log_n = std::log(n0);
    double quantile_scale = 1.0;
    if (pilot_widths.size() >= 20) {
        log_n = std::log(static_cast<double>(pilot_n)) + 2.0 * std::log(summarize(pilot_widths, criterion) / tau);
        if (criterion.kind == WidthCriterion::Kind::Quantile) {
            std::vector<double> logs(pilot_widths.size());
            std::transform(pilot_widths.begin(), pilot_widths.end(), logs.begin(), [](double w) { return std::log(w); });
            const double s = std::max(0.02, numeric::sample_sd(logs));
            // P(w > tau) moves by density/2 per unit of log n.
            quantile_scale = 2.0 * s / numeric::normal_pdf(numeric::normal_quantile(criterion.q));
        }
    }
    const double log_lo = std::log(static_cast<double>(cfg.n_min));
    const double log_hi = std::log(static_cast<double>(cfg.n_max));
    log_n = std::clamp(log_n, log_lo, log_hi);

    // Robbins-Monro on log n with Polyak averaging over the second half.
    double avg_sum = 0.0;
    std::size_t avg_count = 0;
    result.trace.reserve(cfg.rm_iterations);
    for (std::size_t t = 1; t <= cfg.rm_iterations; ++t) {
        Engine rng = substream(seed, StreamTag::RobbinsMonro, t);
        const auto j = std::min(pool.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pool.size())));
        const std::size_t n = clamp_n(std::exp(log_n), cfg);
        const double w = draw_widths(pool[j], n, rng, options.precision)[mi];
        if (std::isfinite(w)) {
            double g = 0.0;
            if (criterion.kind == WidthCriterion::Kind::Expected) {
                g = 2.0 * (w - tau) / tau;
            } else {
                g = quantile_scale * ((w > tau ? 1.0 : 0.0) - (1.0 - criterion.q));
            }
            log_n = std::clamp(log_n + cfg.rm_step_scale / (static_cast<double>(t) + kGainOffset) * g, log_lo, log_hi);
        }
        result.trace.push_back({t, std::exp(log_n), w});
        if (2 * t > cfg.rm_iterations) {
            avg_sum += log_n;
            ++avg_count;
        }
    }
    if (auto w = oscillation_warning(result.trace); !w.empty()) {
        result.warnings.push_back(rule.label() + ": " + w);
    }

    // Confirmation on fresh data.
    const double z = numeric::normal_quantile(1.0 - cfg.confirm_alpha);
    const auto confirm_pool = head(pool, cfg.confirm_draws);
    const std::uint64_t confirm_seed = mix_seed(seed, static_cast<std::uint64_t>(StreamTag::Confirmation));
    std::size_t n = clamp_n(std::exp(avg_sum / static_cast<double>(avg_count)), cfg);
    for (std::size_t step = 0;; ++step) {
        const PreposteriorWidths cw = preposterior_widths(confirm_pool, n, confirm_seed, options.precision);
        const auto& widths = cw.metrics[mi].widths;
        result.estimate = summarize(widths, criterion);
        result.mc_se = summarize_mc_se(widths, criterion);
        result.trace.push_back({cfg.rm_iterations + step + 1, static_cast<double>(n), result.estimate});
        if (!(result.estimate - tau > z * result.mc_se)) {
            break;
        }
        if (n >= cfg.n_max || step + 1 >= kMaxConfirmSteps) {
            std::ostringstream os;
            os << rule.label() << ": criterion " << result.estimate << " still exceeds target " << tau
               << " at n=" << n;
            throw InfeasibleError(os.str());
        }
        n = std::min(cfg.n_max, step_up(n));
        ++result.confirmation_steps;
    }
    result.n = n;
    return result;
}

RuleResult solve_assurance_rule(std::span<const ThetaDraw> pool, const SampleSizeRule& rule,
                                const PlannerOptions& options, std::uint64_t seed) {
    rule.validate();
    const SearchConfig& cfg = options.search;
    cfg.validate();
    if (!options.threshold) {
        throw DomainError(rule.label() + ": a net-benefit threshold is required");
    }
    const unsigned workers = options.precision.workers;
    const double level = rule.target;
    const bool assurance = rule.criterion == RuleCriterion::Assurance;

    RuleResult result;
    result.rule = rule;
    std::size_t evaluations = 0;
    auto measure = [&](const VoIContext& ctx, std::size_t n) {
        const VoIResult r = ctx.evaluate(n, options.baseline);
        if (!assurance && !std::isfinite(r.r_evsi)) {
            throw DomainError(rule.label() + ": EVPI is zero, so relative EVSI is undefined");
        }
        const double value = assurance ? r.assurance : r.r_evsi;
        const double se = assurance ? r.assurance_se : r.r_evsi_se;
        result.trace.push_back({++evaluations, static_cast<double>(n), value});
        return std::pair{value, se};
    };

    const VoIContext ctx(pool, *options.threshold, seed, workers);
    auto pass = [&](std::size_t n) {
        const auto [value, se] = measure(ctx, n);
        return value >= level - se;
    };

    std::size_t hi = cfg.n_min;
    std::size_t lo = 0;
    if (!pass(hi)) {
        while (true) {
            lo = hi;
            if (hi >= cfg.n_max) {
                const double asymptote = result.trace.back().value;
                std::ostringstream os;
                os << rule.label() << ": target " << level << " is not reached for n <= " << cfg.n_max
                   << " (estimate at n_max is " << asymptote << ")";
                throw InfeasibleError(os.str());
            }
            hi = std::min(cfg.n_max, 2 * hi);
            if (pass(hi)) {
                break;
            }
        }
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (pass(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }

    const double z = numeric::normal_quantile(1.0 - cfg.confirm_alpha);
    const VoIContext confirm(pool, *options.threshold, mix_seed(seed, static_cast<std::uint64_t>(StreamTag::Confirmation)),
                             workers, StreamTag::Confirmation);
    std::size_t n = hi;
    for (std::size_t step = 0;; ++step) {
        const auto [value, se] = measure(confirm, n);
        result.estimate = value;
        result.mc_se = se;
        if (!(level - value > z * se)) {
            break;
        }
        if (n >= cfg.n_max || step + 1 >= kMaxConfirmSteps) {
            std::ostringstream os;
            os << rule.label() << ": estimate " << value << " still below target " << level << " at n=" << n;
            throw InfeasibleError(os.str());
        }
        n = std::min(cfg.n_max, step_up(n));
        ++result.confirmation_steps;
    }
    result.n = n;
    return result;
}

RuleResult solve_rule(std::span<const ThetaDraw> pool, const SampleSizeRule& rule, const PlannerOptions& options,
                      std::uint64_t seed) {
    return rule.is_width_rule() ? solve_width_rule(pool, rule, options, seed)
                                : solve_assurance_rule(pool, rule, options, seed);
}

PlanDiagnostics diagnostics_at(std::span<const ThetaDraw> pool, std::size_t n, const PlannerOptions& options,
                               std::uint64_t seed) {
    PlanDiagnostics d;
    d.n = n;
    PrecisionOptions popts = options.precision;
    popts.max_flag_rate = 1.0;
    const PreposteriorWidths pw = preposterior_widths(pool, n, seed, popts);
    for (const auto& m : pw.metrics) {
        const auto eciw = WidthCriterion::expected();
        const auto qciw = WidthCriterion::quantile(0.9);
        if (m.widths.empty()) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            d.metrics.push_back({m.metric, nan, nan, nan, nan, m.flagged});
            continue;
        }
        d.metrics.push_back({m.metric, summarize(m.widths, eciw), summarize_mc_se(m.widths, eciw),
                             summarize(m.widths, qciw), summarize_mc_se(m.widths, qciw), m.flagged});
    }
    if (options.threshold) {
        d.voi = VoIContext(pool, *options.threshold, seed, options.precision.workers).evaluate(n, options.baseline);
    }
    return d;
}

PlanResult plan(std::span<const ThetaDraw> pool, std::span<const SampleSizeRule> rules,
                const PlannerOptions& options, std::uint64_t seed) {
    if (rules.empty()) {
        throw DomainError("at least one sample-size rule is required");
    }
    PlanResult out;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        out.components.push_back(solve_rule(pool, rules[i], options, rule_seed(seed, i)));
        out.final_n = std::max(out.final_n, out.components.back().n);
        for (const auto& w : out.components.back().warnings) {
            out.warnings.push_back(w);
        }
    }
    out.diagnostics = diagnostics_at(pool, out.final_n, options, seed);
    return out;
}

}  // namespace valplan
