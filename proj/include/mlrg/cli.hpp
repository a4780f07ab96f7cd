#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mlrg/lm_solver.hpp"
#include "mlrg/sampler.hpp"
#include "mlrg/types.hpp"

namespace mlrg::cli {

enum class Command { sample, estimate, flow, tc, exact };

const char* to_string(Command c);

/// Process exit codes.
enum ExitCode : int { kSuccess = 0, kConfigError = 2, kNumericalError = 3, kIoError = 4 };

/// Fully resolved settings of one command. Built from `key = value` pairs (a
/// config file overlaid by command-line flags); every key is validated before
/// any computation starts.
struct RunConfig {
  Command command = Command::exact;
  std::uint64_t seed = 1;
  std::optional<double> temperature;
  Vector8 alpha = Vector8::Zero();
  int side = 0;
  MCSettings mc;
  LMConfig lm;
  int steps = 3;
  bool multiblock = false;
  bool warm_start = false;
  int replicas = 4;
  int samples = 1000;
  int thin = 10;
  double t_lo = 2.15;
  double t_hi = 2.40;
  int grid = 6;
  int refine = 0;
  bool exact_provider = false;
  Vector8 alpha0 = Vector8::Zero();
  std::string input;
  std::string out;
  std::string format;

  /// (key, canonical value) pairs in a fixed order, for the output header.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Keys that `command` accepts, in echo order.
std::vector<std::string> keys_for(Command command);

/// Throws ConfigError for unknown keys, keys foreign to `command`, and values
/// that fail to parse or validate.
RunConfig resolve(Command command, const std::map<std::string, std::string>& values);

/// Entry point of the `mlrg` executable; returns an ExitCode.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mlrg::cli
