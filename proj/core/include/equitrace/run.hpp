#pragma once

#include <string>
#include <vector>

#include "equitrace/config.hpp"

namespace equitrace {

struct RunOptions {
  std::string out_dir = ".";
  int threads = 1;
  std::string g;                  // overrides [group] g when non-empty
  std::vector<std::string> psi;   // overrides [trace] psi when non-empty
  std::string mode;               // overrides [oracle] mode when non-empty
};

struct Failure {
  std::string kind;
  std::string message;
};

struct RunResult {
  int exit_code = 0;
  std::vector<Failure> failures;
  std::vector<std::string> written;  // artifact paths
  std::string summary;               // one line for the terminal
};

/// Runs one of "orbits", "trace", "verify" or "all" and writes the artifacts
/// (orbits.csv, trace.json, pairing-curve.csv, verify.json) into out_dir.
RunResult run(const std::string& command, RunConfig config, const RunOptions& options);

/// One-line description of a resolved config.
std::string summarize(const RunConfig& config);

}  // namespace equitrace
