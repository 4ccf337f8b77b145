#pragma once

// Subcommands behind the sepdiff executable.  Each writes
//   <out>/<command>.csv           deterministic data, 17 significant digits
//   <out>/<command>.report.json   config echo, version, seeds, sign convention, tolerances
//   <out>/<command>.meta.json     timestamps and wall time (not reproducible)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "sepdiff/config.hpp"
#include "sepdiff/error.hpp"

namespace sepdiff {

struct CommandContext {
  std::filesystem::path out_dir = ".";
  int threads = 1;
  std::optional<std::uint64_t> seed_override;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitSizeCap = 4;

int exit_code_for(const Error& error);

void cmd_exact(const RunConfig& config, const CommandContext& ctx);
void cmd_sweep(const RunConfig& config, const CommandContext& ctx);
void cmd_mc(const RunConfig& config, const CommandContext& ctx);
void cmd_diagnostics(const RunConfig& config, const CommandContext& ctx);
void cmd_arbitrate_sign(const RunConfig& config, const CommandContext& ctx);

/// Loads the config, dispatches, maps errors to exit codes and reports
/// failures on `err`.
int run_command(std::string_view command, const std::string& config_path, const CommandContext& ctx,
                std::ostream& err);

/// "%.17g".
std::string format_number(double value);

}  // namespace sepdiff
