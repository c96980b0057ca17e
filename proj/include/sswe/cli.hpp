#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sswe {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

/// Environment variable naming the directory that relative --out paths and
/// default run directories are placed under.
constexpr const char* kOutputRootEnv = "SSWE_OUTPUT_ROOT";

/// Runs one command. `args` excludes the program name, e.g.
/// {"phantom", "--count", "8", "--out", "data"}. Returns an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sswe
