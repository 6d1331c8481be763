#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

namespace valplan {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitValidation = 2,
    kExitNumeric = 3,
    kExitInfeasible = 4,
};

struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::size_t> n;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> draws;
    std::filesystem::path out_dir = ".";
    unsigned workers = 1;
};

/// Fixed-n precision and value-of-information report.
int cmd_prec(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Minimum sample size for the configured rules.
int cmd_samp(const CommandOptions& options, std::ostream& out, std::ostream& err);
/// Frequentist sample sizes at point estimates.
int cmd_riley(const CommandOptions& options, std::ostream& out, std::ostream& err);

/// Dispatches on "prec", "samp" or "riley".
int run_command(std::string_view name, const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace valplan
