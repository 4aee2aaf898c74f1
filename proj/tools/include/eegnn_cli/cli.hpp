#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eegnn::cli {

enum ExitCode : int { ok = 0, validation_error = 1, runtime_failure = 2, tolerance_failure = 3 };

/// Flags shared by every subcommand. Values in the config file take
/// precedence over flags.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> mode;
};

/// Names accepted by `diagnose`.
const std::vector<std::string>& diagnostic_names();

int cmd_generate(const CommonOptions& opts, std::ostream& log);
int cmd_train(const CommonOptions& opts, std::ostream& log);
int cmd_evaluate(const CommonOptions& opts, std::ostream& log);
int cmd_diagnose(const CommonOptions& opts, std::ostream& log);
int cmd_param_count(const CommonOptions& opts, std::ostream& log);

/// Parses argv, dispatches, and maps failures to exit codes:
/// 1 for invalid input, 2 for runtime failures, 3 for tolerance failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eegnn::cli
