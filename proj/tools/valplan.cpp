#include "valplan/commands.hpp"

#include <iostream>
#include <string>

#include "CLI11.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Sample size planning for external validation of risk prediction models"};
    app.require_subcommand(1);

    valplan::CommandOptions options;
    std::string config;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::size_t draws = 0;
    std::string out_dir = ".";
    unsigned workers = 1;

    auto add_common = [&](CLI::App* cmd, bool with_n) {
        cmd->add_option("--config", config, "JSON configuration file")->required()->check(CLI::ExistingFile);
        if (with_n) {
            cmd->add_option("--n", n, "validation sample size (overrides run.n)");
        }
        cmd->add_option("--seed", seed, "master seed (overrides run.seed)");
        cmd->add_option("--s-draws", draws, "number of prior draws (overrides run.draws)");
        cmd->add_option("--out-dir", out_dir, "directory for reports")->capture_default_str();
        cmd->add_option("--workers", workers, "worker threads; results do not depend on it")
            ->capture_default_str()
            ->check(CLI::Range(1u, 256u));
    };
    auto* prec = app.add_subcommand("prec", "precision and value of information at fixed sample sizes");
    auto* samp = app.add_subcommand("samp", "minimum sample size for the configured rules");
    auto* riley = app.add_subcommand("riley", "frequentist sample sizes at point estimates");
    add_common(prec, true);
    add_common(samp, true);
    add_common(riley, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : valplan::kExitValidation;
    }

    CLI::App* cmd = app.get_subcommands().front();
    options.config = config;
    options.out_dir = out_dir;
    options.workers = workers;
    auto given = [cmd](const char* name) {
        const CLI::Option* opt = cmd->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--n")) {
        options.n = n;
    }
    if (given("--seed")) {
        options.seed = seed;
    }
    if (given("--s-draws")) {
        options.draws = draws;
    }
    return valplan::run_command(cmd->get_name(), options, std::cout, std::cerr);
}
