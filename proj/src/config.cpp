#include "valplan/config.hpp"

#include "valplan/error.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace valplan {

namespace {

using nlohmann::json;

std::string join(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) {
        throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    }
}

void reject_unknown(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            throw ConfigError(join(path, key), "unknown key");
        }
    }
}

double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) {
        throw ConfigError(path, "expected a number");
    }
    return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw ConfigError(path, "expected a non-negative integer");
    }
    return j.get<std::size_t>();
}

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) {
        throw ConfigError(path, "expected a string");
    }
    return j.get<std::string>();
}

template <class T, class Fn>
T with_path(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path, e.what());
    }
}

MarginalFamily marginal_family(const std::string& name, const std::string& path) {
    if (name == "beta") {
        return MarginalFamily::Beta;
    }
    if (name == "normal") {
        return MarginalFamily::Normal;
    }
    if (name == "lognormal") {
        return MarginalFamily::LogNormal;
    }
    if (name == "logitnormal") {
        return MarginalFamily::LogitNormal;
    }
    if (name == "point") {
        return MarginalFamily::PointMass;
    }
    throw ConfigError(path, "unknown distribution '" + name + "' (beta, normal, lognormal, logitnormal, point)");
}

MarginalSpec parse_marginal(const json& j, const std::string& path) {
    if (j.is_number()) {
        return MarginalSpec::point(j.get<double>());
    }
    require_object(j, path);
    reject_unknown(j, path, {"dist", "params", "mean", "sd", "upper95", "value"});
    if (!j.contains("dist")) {
        throw ConfigError(join(path, "dist"), "missing");
    }
    MarginalSpec spec;
    spec.family = marginal_family(get_string(j["dist"], join(path, "dist")), join(path, "dist"));
    if (spec.family == MarginalFamily::PointMass) {
        if (!j.contains("value")) {
            throw ConfigError(join(path, "value"), "missing");
        }
        return MarginalSpec::point(get_number(j["value"], join(path, "value")));
    }
    const bool params = j.contains("params");
    const bool mean = j.contains("mean");
    if (params == mean) {
        throw ConfigError(path, "give either params or mean with sd/upper95");
    }
    if (params) {
        const json& p = j["params"];
        if (!p.is_array() || p.size() != 2) {
            throw ConfigError(join(path, "params"), "expected two numbers");
        }
        spec.parameterization = Parameterization::NativeParams;
        spec.first = get_number(p[0], join(path, "params[0]"));
        spec.second = get_number(p[1], join(path, "params[1]"));
    } else {
        spec.first = get_number(j["mean"], join(path, "mean"));
        const bool sd = j.contains("sd");
        const bool upper = j.contains("upper95");
        if (sd == upper) {
            throw ConfigError(path, "give exactly one of sd or upper95 with mean");
        }
        spec.parameterization = sd ? Parameterization::MeanSD : Parameterization::MeanUpperCI95;
        spec.second = sd ? get_number(j["sd"], join(path, "sd")) : get_number(j["upper95"], join(path, "upper95"));
    }
    with_path<int>(path, [&] {
        (void)marginal_from_moments(spec);
        return 0;
    });
    return spec;
}

const std::array<std::pair<const char*, LocationKind>, 3> kLocationKeys{{
    {"mean_calibration", LocationKind::MeanCalibration},
    {"oe_ratio", LocationKind::OERatio},
    {"intercept", LocationKind::Intercept},
}};

void parse_evidence(const json& j, PlanConfig& cfg) {
    const std::string path = "evidence";
    require_object(j, path);
    reject_unknown(j, path,
                   {"prevalence", "cstat", "slope", "mean_calibration", "oe_ratio", "intercept", "correlation",
                    "risk_family", "bootstrap"});
    auto& m = cfg.prior.marginals;
    for (const auto& [key, target] : {std::pair{"prevalence", ParameterTarget::Prevalence},
                                      std::pair{"cstat", ParameterTarget::CStatistic},
                                      std::pair{"slope", ParameterTarget::Slope}}) {
        if (!j.contains(key)) {
            throw ConfigError(join(path, key), "missing");
        }
        m[static_cast<std::size_t>(target)] = parse_marginal(j[key], join(path, key));
    }
    int locations = 0;
    for (const auto& [key, kind] : kLocationKeys) {
        if (j.contains(key)) {
            ++locations;
            cfg.prior.location_kind = kind;
            m[static_cast<std::size_t>(ParameterTarget::Location)] = parse_marginal(j[key], join(path, key));
        }
    }
    if (locations != 1) {
        throw ConfigError(path, "exactly one of mean_calibration, oe_ratio or intercept is required");
    }

    if (j.contains("risk_family")) {
        const std::string key = join(path, "risk_family");
        cfg.family = with_path<RiskFamily>(key, [&] { return risk_family_from_string(get_string(j["risk_family"], key)); });
    }

    if (j.contains("correlation")) {
        const std::string key = join(path, "correlation");
        const json& c = j["correlation"];
        if (c.is_string()) {
            const std::string mode = c.get<std::string>();
            if (mode == "independent") {
                cfg.prior.correlation_source = CorrelationSource::Independent;
            } else if (mode == "bootstrap") {
                cfg.prior.correlation_source = CorrelationSource::ParametricBootstrap;
            } else {
                throw ConfigError(key, "expected independent, bootstrap or a 4x4 spearman matrix");
            }
        } else {
            require_object(c, key);
            reject_unknown(c, key, {"spearman"});
            const json& rows = c.contains("spearman") ? c["spearman"] : json();
            if (!rows.is_array() || rows.size() != 4) {
                throw ConfigError(join(key, "spearman"), "expected a 4x4 matrix ordered prevalence, cstat, slope, location");
            }
            for (std::size_t r = 0; r < 4; ++r) {
                if (!rows[r].is_array() || rows[r].size() != 4) {
                    throw ConfigError(join(key, "spearman"), "expected a 4x4 matrix");
                }
                for (std::size_t col = 0; col < 4; ++col) {
                    cfg.prior.rank_correlation(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) =
                        get_number(rows[r][col], join(key, "spearman"));
                }
            }
            cfg.prior.correlation_source = CorrelationSource::UserSupplied;
        }
    }

    if (j.contains("bootstrap")) {
        const std::string key = join(path, "bootstrap");
        const json& b = j["bootstrap"];
        require_object(b, key);
        reject_unknown(b, key, {"n_pilot", "replicates"});
        if (b.contains("n_pilot")) {
            cfg.prior.bootstrap.n_pilot = get_count(b["n_pilot"], join(key, "n_pilot"));
        }
        if (b.contains("replicates")) {
            cfg.prior.bootstrap.replicates = get_count(b["replicates"], join(key, "replicates"));
        }
    }
    with_path<int>(path, [&] {
        cfg.prior.validate();
        return 0;
    });
}

RuleMetric rule_metric(const std::string& name, const std::string& path) {
    if (name == "cstat") {
        return RuleMetric::CStatistic;
    }
    if (name == "oe") {
        return RuleMetric::OERatio;
    }
    if (name == "slope") {
        return RuleMetric::Slope;
    }
    if (name == "nb") {
        return RuleMetric::NetBenefit;
    }
    throw ConfigError(path, "unknown metric '" + name + "' (cstat, oe, slope, nb)");
}

RuleCriterion rule_criterion(const std::string& name, const std::string& path) {
    if (name == "eciw") {
        return RuleCriterion::ECIW;
    }
    if (name == "qciw") {
        return RuleCriterion::QCIW;
    }
    if (name == "assurance") {
        return RuleCriterion::Assurance;
    }
    if (name == "revsi") {
        return RuleCriterion::EVSITarget;
    }
    throw ConfigError(path, "unknown criterion '" + name + "' (eciw, qciw, assurance, revsi)");
}

void parse_targets(const json& j, PlanConfig& cfg) {
    const std::string path = "targets";
    require_object(j, path);
    reject_unknown(j, path, {"rules", "threshold", "baseline"});
    if (j.contains("threshold")) {
        const double z = get_number(j["threshold"], join(path, "threshold"));
        if (!(z > 0.0 && z < 1.0)) {
            throw ConfigError(join(path, "threshold"), "must lie in (0,1)");
        }
        cfg.threshold = z;
    }
    if (j.contains("baseline")) {
        const std::string key = join(path, "baseline");
        const json& b = j["baseline"];
        if (b.is_string() && b.get<std::string>() == "best_current") {
            cfg.baseline = Baseline::best_current();
        } else if (b.is_object() && b.size() == 1 && b.contains("forced_default")) {
            const std::string sub = join(key, "forced_default");
            cfg.baseline = Baseline::forced(
                with_path<Strategy>(sub, [&] { return strategy_from_string(get_string(b["forced_default"], sub)); }));
        } else {
            throw ConfigError(key, "expected \"best_current\" or {\"forced_default\": \"none\"|\"model\"|\"all\"}");
        }
    }
    if (j.contains("rules")) {
        const json& rules = j["rules"];
        const std::string key = join(path, "rules");
        if (!rules.is_array()) {
            throw ConfigError(key, "expected an array");
        }
        for (std::size_t i = 0; i < rules.size(); ++i) {
            const std::string rp = key + "[" + std::to_string(i) + "]";
            const json& r = rules[i];
            require_object(r, rp);
            reject_unknown(r, rp, {"metric", "criterion", "target", "q"});
            for (const char* required : {"metric", "criterion", "target"}) {
                if (!r.contains(required)) {
                    throw ConfigError(join(rp, required), "missing");
                }
            }
            SampleSizeRule rule;
            rule.metric = rule_metric(get_string(r["metric"], join(rp, "metric")), join(rp, "metric"));
            rule.criterion = rule_criterion(get_string(r["criterion"], join(rp, "criterion")), join(rp, "criterion"));
            rule.target = get_number(r["target"], join(rp, "target"));
            if (r.contains("q")) {
                rule.q = get_number(r["q"], join(rp, "q"));
            }
            with_path<int>(rp, [&] {
                rule.validate();
                return 0;
            });
            if (rule.metric == RuleMetric::NetBenefit && !cfg.threshold) {
                throw ConfigError(join(path, "threshold"), "required by net-benefit rules");
            }
            cfg.rules.push_back(rule);
        }
    }
}

void parse_search(const json& j, SearchConfig& s) {
    const std::string path = "run.search";
    require_object(j, path);
    reject_unknown(j, path, {"n_min", "n_max", "rm_step_scale", "rm_iterations", "confirm_draws", "confirm_alpha"});
    if (j.contains("n_min")) {
        s.n_min = get_count(j["n_min"], join(path, "n_min"));
    }
    if (j.contains("n_max")) {
        s.n_max = get_count(j["n_max"], join(path, "n_max"));
    }
    if (j.contains("rm_step_scale")) {
        s.rm_step_scale = get_number(j["rm_step_scale"], join(path, "rm_step_scale"));
    }
    if (j.contains("rm_iterations")) {
        s.rm_iterations = get_count(j["rm_iterations"], join(path, "rm_iterations"));
    }
    if (j.contains("confirm_draws")) {
        s.confirm_draws = get_count(j["confirm_draws"], join(path, "confirm_draws"));
    }
    if (j.contains("confirm_alpha")) {
        s.confirm_alpha = get_number(j["confirm_alpha"], join(path, "confirm_alpha"));
    }
    with_path<int>(path, [&] {
        s.validate();
        return 0;
    });
}

void parse_run(const json& j, PlanConfig& cfg) {
    const std::string path = "run";
    require_object(j, path);
    reject_unknown(j, path,
                   {"seed", "draws", "n", "n_grid", "mode", "slope_se", "smoother_span", "band_draws", "search"});
    RunSettings& run = cfg.run;
    if (!j.contains("seed")) {
        throw ConfigError("run.seed", "missing; a seed is required for reproducible results");
    }
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0)) {
        throw ConfigError("run.seed", "expected a non-negative integer");
    }
    run.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("draws")) {
        run.draws = get_count(j["draws"], "run.draws");
        if (run.draws < 1) {
            throw ConfigError("run.draws", "must be positive");
        }
    }
    if (j.contains("n")) {
        run.n = get_count(j["n"], "run.n");
        if (*run.n < 20) {
            throw ConfigError("run.n", "must be at least 20");
        }
    }
    if (j.contains("n_grid")) {
        const json& g = j["n_grid"];
        if (!g.is_array()) {
            throw ConfigError("run.n_grid", "expected an array of sample sizes");
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            run.n_grid.push_back(get_count(g[i], "run.n_grid[" + std::to_string(i) + "]"));
        }
        if (!std::is_sorted(run.n_grid.begin(), run.n_grid.end())) {
            throw ConfigError("run.n_grid", "must be sorted ascending");
        }
    }
    if (j.contains("mode")) {
        const std::string mode = get_string(j["mode"], "run.mode");
        if (mode == "sample_based") {
            run.precision.mode = SamplingMode::SampleBased;
        } else if (mode == "two_step") {
            run.precision.mode = SamplingMode::TwoStep;
        } else {
            throw ConfigError("run.mode", "expected sample_based or two_step");
        }
    }
    if (j.contains("slope_se")) {
        const std::string se = get_string(j["slope_se"], "run.slope_se");
        if (se == "model") {
            run.precision.slope_se = SlopeSe::Model;
        } else if (se == "formula") {
            run.precision.slope_se = SlopeSe::Formula;
        } else {
            throw ConfigError("run.slope_se", "expected model or formula");
        }
    }
    if (j.contains("smoother_span")) {
        run.smoother_span = get_number(j["smoother_span"], "run.smoother_span");
        if (!(run.smoother_span > 0.0 && run.smoother_span <= 1.0)) {
            throw ConfigError("run.smoother_span", "must lie in (0,1]");
        }
    }
    if (j.contains("band_draws")) {
        run.band_draws = get_count(j["band_draws"], "run.band_draws");
    }
    if (j.contains("search")) {
        parse_search(j["search"], run.search);
    }
}

void parse_riley(const json& j, PlanConfig& cfg) {
    const std::string path = "riley";
    require_object(j, path);
    reject_unknown(j, path,
                   {"prevalence", "cstat", "slope", "mean_calibration", "oe_ratio", "intercept", "assumed_oe", "targets"});
    RileySettings& r = cfg.riley;
    if (j.contains("prevalence")) {
        r.prevalence = get_number(j["prevalence"], "riley.prevalence");
    }
    if (j.contains("cstat")) {
        r.cstat = get_number(j["cstat"], "riley.cstat");
    }
    if (j.contains("slope")) {
        r.slope = get_number(j["slope"], "riley.slope");
    }
    for (const auto& [key, kind] : kLocationKeys) {
        if (j.contains(key)) {
            if (kind != cfg.prior.location_kind) {
                throw ConfigError(join(path, key), "location must match the evidence section");
            }
            r.location = get_number(j[key], join(path, key));
        }
    }
    if (j.contains("assumed_oe")) {
        r.assumed_oe = get_number(j["assumed_oe"], "riley.assumed_oe");
        if (!(r.assumed_oe > 0.0)) {
            throw ConfigError("riley.assumed_oe", "must be positive");
        }
    }
    if (j.contains("targets")) {
        const json& t = j["targets"];
        require_object(t, "riley.targets");
        reject_unknown(t, "riley.targets", {"cstat", "oe", "slope"});
        for (Metric m : kAllMetrics) {
            const std::string key(to_string(m));
            if (t.contains(key)) {
                r.targets[static_cast<std::size_t>(m)] = get_number(t[key], "riley.targets." + key);
            }
        }
    }
}

}  // namespace

PlannerOptions PlanConfig::planner_options() const {
    PlannerOptions o;
    o.precision = run.precision;
    o.search = run.search;
    o.threshold = threshold;
    o.baseline = baseline;
    return o;
}

std::optional<double> PlanConfig::riley_target(Metric m) const {
    if (auto t = riley.targets[static_cast<std::size_t>(m)]) {
        return t;
    }
    for (const auto& rule : rules) {
        if (rule.is_width_rule() && rule.width_metric() == m) {
            return rule.target;
        }
    }
    return std::nullopt;
}

PlanConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    require_object(root, "");
    reject_unknown(root, "", {"evidence", "targets", "run", "riley"});
    PlanConfig cfg;
    if (!root.contains("evidence")) {
        throw ConfigError("evidence", "missing");
    }
    if (!root.contains("run")) {
        throw ConfigError("run", "missing");
    }
    parse_run(root["run"], cfg);
    parse_evidence(root["evidence"], cfg);
    if (root.contains("targets")) {
        parse_targets(root["targets"], cfg);
    }
    if (root.contains("riley")) {
        parse_riley(root["riley"], cfg);
    }
    return cfg;
}

PlanConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("<file>", "cannot open " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

}  // namespace valplan
