#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cli/run_config.hpp"

namespace psf::cli {

// Misuse of flags or missing inputs; mapped to exit code 2 like ConfigError.
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

enum class System { factor, ns, ls, jm };

System parse_system(const std::string& name);
const char* to_string(System system);

// Command-line options shared by the subcommands.
struct Flags {
  System system = System::factor;
  int bma = 0;              // > 0: model averaging with this many samples
  std::string resume;       // checkpoint to resume training from
  bool per_example = false;
  std::vector<std::string> cells;  // "task:lang"; empty selects a default set
};

// Each returns the process exit status; failures are thrown. `synth` writes
// into <output>/data, and the other commands fall back to the manifest and
// language features found there when paths.manifest / paths.features are
// not set.
int run_synth(const RunConfig& config, std::ostream& out);
int run_train(const RunConfig& config, const Flags& flags, std::ostream& out);
int run_eval(const RunConfig& config, const Flags& flags, std::ostream& out);
int run_predict(const RunConfig& config, const Flags& flags, std::ostream& out);
int run_entropy(const RunConfig& config, const Flags& flags, std::ostream& out);
int run_baseline(const RunConfig& config, const Flags& flags, std::ostream& out);

// Writes <output>/config.resolved.json.
void echo_config(const RunConfig& config);

}  // namespace psf::cli
