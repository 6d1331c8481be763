#include "valplan/commands.hpp"

#include "valplan/config.hpp"
#include "valplan/error.hpp"
#include "valplan/evidence.hpp"
#include "valplan/planner.hpp"
#include "valplan/precision.hpp"
#include "valplan/voi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

namespace valplan {

namespace {

std::string num(double v, int precision = 10) {
    if (!std::isfinite(v)) {
        return "NA";
    }
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

std::string mode_name(SamplingMode m) { return m == SamplingMode::SampleBased ? "sample_based" : "two_step"; }

std::string metric_title(Metric m) {
    switch (m) {
        case Metric::CStatistic:
            return "c-statistic";
        case Metric::OERatio:
            return "O/E ratio";
        case Metric::Slope:
            return "calibration slope";
    }
    return "";
}

/// Quantity/value/standard-error rows shared by summary.txt and summary.csv.
class Summary {
public:
    void add(const std::string& section, const std::string& quantity, double value,
             double se = std::numeric_limits<double>::quiet_NaN()) {
        rows_.push_back({section, quantity, value, se});
    }

    void write_csv(std::ostream& os) const {
        os << "section,quantity,value,mc_se\n";
        for (const auto& r : rows_) {
            os << r.section << ',' << r.quantity << ',' << num(r.value) << ',' << num(r.se) << '\n';
        }
    }

    void write_text(std::ostream& os) const {
        std::string current;
        for (const auto& r : rows_) {
            if (r.section != current) {
                current = r.section;
                os << "\n[" << current << "]\n";
            }
            os << "  " << std::left << std::setw(28) << r.quantity << std::right << std::setw(14) << num(r.value, 6);
            if (std::isfinite(r.se)) {
                os << "  (MC SE " << num(r.se, 3) << ")";
            }
            os << '\n';
        }
    }

private:
    struct Row {
        std::string section;
        std::string quantity;
        double value;
        double se;
    };
    std::vector<Row> rows_;
};

class Context {
public:
    Context(std::string command, const CommandOptions& options, std::ostream& out)
        : command_(std::move(command)), options_(options), out_(out) {}

    PlanConfig load() const {
        PlanConfig cfg = load_config(options_.config);
        if (options_.seed) {
            cfg.run.seed = *options_.seed;
        }
        if (options_.draws) {
            if (*options_.draws < 1) {
                throw ConfigError("--s-draws", "must be positive");
            }
            cfg.run.draws = *options_.draws;
        }
        if (options_.n) {
            if (*options_.n < 20) {
                throw ConfigError("--n", "must be at least 20");
            }
            cfg.run.n = *options_.n;
        }
        cfg.run.precision.workers = options_.workers;
        return cfg;
    }

    std::string header(const PlanConfig& cfg, const std::string& columns) const {
        std::ostringstream os;
        os << "# valplan " << command_ << "\n";
        os << "# config: " << options_.config.string() << "\n";
        os << "# seed: " << cfg.run.seed << "; draws: " << cfg.run.draws << "; risk_family: " << to_string(cfg.family)
           << "; mode: " << mode_name(cfg.run.precision.mode)
           << "; slope_se: " << (cfg.run.precision.slope_se == SlopeSe::Model ? "model" : "formula") << "\n";
        os << "# overrides:";
        bool any = false;
        if (options_.seed) {
            os << " --seed=" << *options_.seed;
            any = true;
        }
        if (options_.n) {
            os << " --n=" << *options_.n;
            any = true;
        }
        if (options_.draws) {
            os << " --s-draws=" << *options_.draws;
            any = true;
        }
        os << (any ? "" : " none") << "\n";
        os << "# columns: " << columns << "\n";
        return os.str();
    }

    std::ofstream open(const std::string& name) const {
        std::filesystem::create_directories(options_.out_dir);
        std::ofstream f(options_.out_dir / name, std::ios::binary);
        if (!f) {
            throw Error("cannot write " + (options_.out_dir / name).string());
        }
        return f;
    }

    void write_summary(const PlanConfig& cfg, const Summary& summary, const std::string& preamble) const {
        {
            auto f = open("summary.csv");
            f << header(cfg, "section; quantity; value; Monte Carlo standard error (NA when not applicable)");
            summary.write_csv(f);
        }
        std::ostringstream text;
        text << preamble;
        summary.write_text(text);
        {
            auto f = open("summary.txt");
            f << text.str();
        }
        out_ << text.str();
    }

    const CommandOptions& options() const { return options_; }

private:
    std::string command_;
    const CommandOptions& options_;
    std::ostream& out_;
};

ThetaSample draw_pool(const PlanConfig& cfg, unsigned workers, Summary& summary) {
    ThetaSample pool = draw_theta(cfg.prior, cfg.run.draws, cfg.family, cfg.run.seed, workers);
    summary.add("prior", "draws", static_cast<double>(pool.draws.size()));
    summary.add("prior", "rejected_draws", static_cast<double>(pool.rejected));
    return pool;
}

void write_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) {
        err << "warning: " << w << '\n';
    }
}

void write_voi_curve(const Context& ctx, const PlanConfig& cfg, const std::vector<VoIResult>& curve) {
    auto f = ctx.open("voi_curve.csv");
    f << ctx.header(cfg,
                    "n; evsi (expected gain in net benefit, true positives per patient); r_evsi = evsi/evpi; "
                    "assurance (probability the sample winner is truly optimal); mc_se = Monte Carlo SE of evsi; "
                    "evpi; r_evsi_se; assurance_se; flagged = samples with undefined sensitivity or specificity");
    f << "n,evsi,r_evsi,assurance,mc_se,evpi,r_evsi_se,assurance_se,flagged\n";
    for (const auto& r : curve) {
        f << r.n << ',' << num(r.evsi) << ',' << num(r.r_evsi) << ',' << num(r.assurance) << ',' << num(r.evsi_se)
          << ',' << num(r.evpi) << ',' << num(r.r_evsi_se) << ',' << num(r.assurance_se) << ',' << r.flagged << '\n';
    }
}

void add_voi(Summary& summary, const std::string& section, const VoIResult& r, std::size_t draws) {
    summary.add(section, "assurance", r.assurance, r.assurance_se);
    summary.add(section, "evpi", r.evpi, r.evpi_se);
    summary.add(section, "evsi", r.evsi, r.evsi_se);
    summary.add(section, "r_evsi", r.r_evsi, r.r_evsi_se);
    summary.add(section, "current_winner_index", static_cast<double>(static_cast<std::size_t>(r.current_winner)));
    summary.add(section, "undefined_accuracy_rate", static_cast<double>(r.flagged) / static_cast<double>(draws));
}

std::vector<double> quantile_levels(const PlanConfig& cfg) {
    std::vector<double> qs{0.9};
    for (const auto& r : cfg.rules) {
        if (r.criterion == RuleCriterion::QCIW && std::find(qs.begin(), qs.end(), r.q) == qs.end()) {
            qs.push_back(r.q);
        }
    }
    std::sort(qs.begin(), qs.end());
    return qs;
}

std::string q_name(double q) {
    std::ostringstream os;
    os << "qciw" << q * 100.0;
    return os.str();
}

int prec(const Context& ctx, std::ostream& err) {
    PlanConfig cfg = ctx.load();
    std::vector<std::size_t> ns = cfg.run.n_grid;
    if (cfg.run.n && std::find(ns.begin(), ns.end(), *cfg.run.n) == ns.end()) {
        ns.push_back(*cfg.run.n);
        std::sort(ns.begin(), ns.end());
    }
    if (ns.empty()) {
        throw ConfigError("run.n", "prec needs run.n, run.n_grid or --n");
    }
    for (std::size_t n : ns) {
        if (n < 20) {
            throw ConfigError("run.n_grid", "sample sizes must be at least 20");
        }
    }
    const unsigned workers = ctx.options().workers;
    Summary summary;
    const ThetaSample pool = draw_pool(cfg, workers, summary);
    write_warnings(err, pool.warnings);

    const auto qs = quantile_levels(cfg);
    std::array<std::ofstream, 3> width_files;
    for (Metric m : kAllMetrics) {
        auto& f = width_files[static_cast<std::size_t>(m)];
        f = ctx.open("widths_" + std::string(to_string(m)) + ".csv");
        f << ctx.header(cfg, "n; draw = index of the prior draw; width = 95% CI width (" +
                                 std::string(m == Metric::OERatio ? "log O/E scale" : "natural scale") +
                                 "), NA for flagged simulated studies");
        f << "n,draw,width\n";
    }
    for (std::size_t n : ns) {
        const auto rows = width_realizations(pool.draws, n, cfg.run.seed, cfg.run.precision);
        for (Metric m : kAllMetrics) {
            auto& f = width_files[static_cast<std::size_t>(m)];
            for (std::size_t j = 0; j < rows.size(); ++j) {
                f << n << ',' << j << ',' << num(rows[j][static_cast<std::size_t>(m)]) << '\n';
            }
        }
        const PreposteriorWidths pw = collect_widths(rows, n, cfg.run.precision.max_flag_rate);
        const std::string section = "precision n=" + std::to_string(n);
        for (Metric m : kAllMetrics) {
            const auto& d = pw[m];
            const std::string name(to_string(m));
            summary.add(section, name + "_eciw", summarize(d.widths, WidthCriterion::expected()),
                        summarize_mc_se(d.widths, WidthCriterion::expected()));
            for (double q : qs) {
                summary.add(section, name + "_" + q_name(q), summarize(d.widths, WidthCriterion::quantile(q)),
                            summarize_mc_se(d.widths, WidthCriterion::quantile(q)));
            }
            summary.add(section, name + "_flag_rate", static_cast<double>(d.flagged) / static_cast<double>(pw.attempted));
        }
    }

    if (cfg.threshold) {
        const auto curve = evsi_curve(pool.draws, *cfg.threshold, ns, cfg.baseline, cfg.run.seed, workers);
        for (const auto& r : curve) {
            add_voi(summary, "net benefit n=" + std::to_string(r.n), r, pool.draws.size());
        }
        write_voi_curve(ctx, cfg, curve);
    }

    if (cfg.run.band_draws > 0) {
        const auto band_pool = std::span<const ThetaDraw>(pool.draws).first(std::min(cfg.run.band_draws, pool.draws.size()));
        auto f = ctx.open("calibration_bands.csv");
        f << ctx.header(cfg, "n; pi = predicted risk; lower/median/upper = 2.5%/50%/97.5% quantiles of smoothed "
                             "calibration curve minus true calibrated risk; count = contributing samples; dropped = "
                             "smoother failures");
        f << "n,pi,lower,median,upper,count,dropped\n";
        for (std::size_t n : ns) {
            const auto bands = calibration_error_bands(band_pool, n, {}, cfg.run.seed,
                                                       {cfg.run.smoother_span, workers});
            for (const auto& b : bands) {
                f << n << ',' << num(b.pi) << ',' << num(b.lower) << ',' << num(b.median) << ',' << num(b.upper) << ','
                  << b.count << ',' << b.dropped << '\n';
            }
        }
    }

    std::ostringstream pre;
    pre << "valplan prec: " << pool.draws.size() << " prior draws, " << to_string(cfg.family) << " risks, "
        << mode_name(cfg.run.precision.mode) << " widths\n";
    ctx.write_summary(cfg, summary, pre.str());
    return kExitOk;
}

std::string rule_target_text(const SampleSizeRule& r) {
    std::ostringstream os;
    switch (r.criterion) {
        case RuleCriterion::ECIW:
            os << "E[width] <= " << r.target;
            break;
        case RuleCriterion::QCIW:
            os << "P(width <= " << r.target << ") >= " << r.q;
            break;
        case RuleCriterion::Assurance:
            os << "assurance >= " << r.target;
            break;
        case RuleCriterion::EVSITarget:
            os << "EVSI/EVPI >= " << r.target;
            break;
    }
    return os.str();
}

int samp(const Context& ctx, std::ostream& err) {
    PlanConfig cfg = ctx.load();
    if (cfg.rules.empty()) {
        throw ConfigError("targets.rules", "samp needs at least one rule");
    }
    const unsigned workers = ctx.options().workers;
    Summary summary;
    const ThetaSample pool = draw_pool(cfg, workers, summary);
    write_warnings(err, pool.warnings);

    const PlannerOptions popts = cfg.planner_options();
    const PlanResult result = plan(pool.draws, cfg.rules, popts, cfg.run.seed);
    write_warnings(err, result.warnings);

    {
        auto f = ctx.open("components.csv");
        f << ctx.header(cfg, "rule; metric; criterion; target; q (QCIW only); n = solved sample size; estimate = "
                             "criterion at n from the confirmation run; mc_se; confirmation_steps = 5% step-ups");
        f << "rule,metric,criterion,target,q,n,estimate,mc_se,confirmation_steps\n";
        for (const auto& c : result.components) {
            f << c.rule.label() << ',' << to_string(c.rule.metric) << ',' << to_string(c.rule.criterion) << ','
              << num(c.rule.target) << ','
              << (c.rule.criterion == RuleCriterion::QCIW ? num(c.rule.q) : std::string("NA")) << ',' << c.n << ','
              << num(c.estimate) << ',' << num(c.mc_se) << ',' << c.confirmation_steps << '\n';
        }
    }
    for (const auto& c : result.components) {
        auto f = ctx.open("trace_" + c.rule.label() + ".csv");
        f << ctx.header(cfg, "iteration; n = current iterate (continuous during Robbins-Monro); value = observed "
                             "width, assurance or r_evsi at n (rows after the search are confirmation runs)");
        f << "iteration,n,value\n";
        for (const auto& t : c.trace) {
            f << t.iteration << ',' << num(t.n) << ',' << num(t.value) << '\n';
        }
    }

    std::size_t dictating = 0;
    for (std::size_t i = 0; i < result.components.size(); ++i) {
        const auto& c = result.components[i];
        summary.add("components", c.rule.label() + "_n", static_cast<double>(c.n));
        summary.add("components", c.rule.label() + "_estimate", c.estimate, c.mc_se);
        if (c.n > result.components[dictating].n) {
            dictating = i;
        }
    }
    summary.add("components", "final_n", static_cast<double>(result.final_n));

    const PlanDiagnostics& d = result.diagnostics;
    const std::string section = "diagnostics at n=" + std::to_string(d.n);
    for (const auto& m : d.metrics) {
        const std::string name(to_string(m.metric));
        summary.add(section, name + "_eciw", m.eciw, m.eciw_se);
        summary.add(section, name + "_qciw90", m.qciw90, m.qciw90_se);
        summary.add(section, name + "_flagged", static_cast<double>(m.flagged));
    }
    if (d.voi) {
        add_voi(summary, section, *d.voi, pool.draws.size());
        std::vector<std::size_t> ns = cfg.run.n_grid;
        for (const auto& c : result.components) {
            ns.push_back(c.n);
        }
        std::sort(ns.begin(), ns.end());
        ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
        write_voi_curve(ctx, cfg, evsi_curve(pool.draws, *cfg.threshold, ns, cfg.baseline, cfg.run.seed, workers));
    }

    std::ostringstream pre;
    pre << "valplan samp: " << pool.draws.size() << " prior draws, " << to_string(cfg.family) << " risks, "
        << mode_name(cfg.run.precision.mode) << " widths\n\n";
    pre << std::left << std::setw(22) << "rule" << std::setw(34) << "target" << std::right << std::setw(8) << "N"
        << std::setw(14) << "estimate" << std::setw(12) << "MC SE" << '\n';
    for (const auto& c : result.components) {
        pre << std::left << std::setw(22) << c.rule.label() << std::setw(34) << rule_target_text(c.rule) << std::right
            << std::setw(8) << c.n << std::setw(14) << num(c.estimate, 5) << std::setw(12) << num(c.mc_se, 3) << '\n';
    }
    pre << "\nFinal N = " << result.final_n << " (dictated by " << result.components[dictating].rule.label() << ")\n";
    ctx.write_summary(cfg, summary, pre.str());
    return kExitOk;
}

int riley(const Context& ctx) {
    PlanConfig cfg = ctx.load();
    const RileySettings& r = cfg.riley;
    const auto& m = cfg.prior.marginals;
    auto mean_of = [&](ParameterTarget t) { return marginal_from_moments(m[static_cast<std::size_t>(t)]).mean(); };
    const double phi = r.prevalence.value_or(mean_of(ParameterTarget::Prevalence));
    const double c = r.cstat.value_or(mean_of(ParameterTarget::CStatistic));
    const double slope = r.slope.value_or(mean_of(ParameterTarget::Slope));
    const double location = r.location.value_or(mean_of(ParameterTarget::Location));
    const ThetaDraw theta = make_theta(phi, c, slope, {cfg.prior.location_kind, location}, cfg.family);

    Summary summary;
    summary.add("point estimates", "prevalence", phi);
    summary.add("point estimates", "cstat", c);
    summary.add("point estimates", "slope", slope);
    summary.add("point estimates", std::string(to_string(cfg.prior.location_kind)), location);
    summary.add("point estimates", "intercept", theta.h.intercept());
    summary.add("point estimates", "assumed_oe", r.assumed_oe);

    auto f = ctx.open("riley.csv");
    f << ctx.header(cfg, "metric; target = 95% CI width (O/E on the ratio scale); n = smallest n meeting the target; "
                         "width_at_n; width_at_n_minus_1 (exceeds the target)");
    f << "metric,target,n,width_at_n,width_at_n_minus_1\n";
    std::size_t final_n = 0;
    std::ostringstream pre;
    pre << "valplan riley: frequentist sample sizes at point estimates\n\n";
    pre << std::left << std::setw(20) << "metric" << std::right << std::setw(10) << "target" << std::setw(8) << "N"
        << std::setw(14) << "width(N)" << std::setw(14) << "width(N-1)" << '\n';
    bool any = false;
    for (Metric metric : kAllMetrics) {
        const auto target = cfg.riley_target(metric);
        if (!target) {
            continue;
        }
        any = true;
        const std::size_t n = riley_min_n(metric, theta, *target, r.assumed_oe);
        const double w = riley_width(metric, theta, static_cast<double>(n), r.assumed_oe);
        const double w_prev = riley_width(metric, theta, static_cast<double>(n - 1), r.assumed_oe);
        final_n = std::max(final_n, n);
        f << to_string(metric) << ',' << num(*target) << ',' << n << ',' << num(w) << ',' << num(w_prev) << '\n';
        summary.add("components", std::string(to_string(metric)) + "_n", static_cast<double>(n));
        summary.add("components", std::string(to_string(metric)) + "_width_at_n", w);
        pre << std::left << std::setw(20) << metric_title(metric) << std::right << std::setw(10) << num(*target, 4)
            << std::setw(8) << n << std::setw(14) << num(w, 5) << std::setw(14) << num(w_prev, 5) << '\n';
    }
    if (!any) {
        throw ConfigError("riley.targets", "no width targets in riley.targets or targets.rules");
    }
    summary.add("components", "final_n", static_cast<double>(final_n));
    pre << "\nFinal N = " << final_n << '\n';
    ctx.write_summary(cfg, summary, pre.str());
    return kExitOk;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const DomainError& e) {
        err << "invalid input: " << e.what() << '\n';
        return kExitValidation;
    } catch (const InfeasibleError& e) {
        err << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const NumericError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace

int cmd_prec(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] { return prec(Context("prec", options, out), err); });
}

int cmd_samp(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] { return samp(Context("samp", options, out), err); });
}

int cmd_riley(const CommandOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] { return riley(Context("riley", options, out)); });
}

int run_command(std::string_view name, const CommandOptions& options, std::ostream& out, std::ostream& err) {
    if (name == "prec") {
        return cmd_prec(options, out, err);
    }
    if (name == "samp") {
        return cmd_samp(options, out, err);
    }
    if (name == "riley") {
        return cmd_riley(options, out, err);
    }
    err << "unknown command '" << name << "' (expected prec, samp or riley)\n";
    return kExitValidation;
}

}  // namespace valplan
