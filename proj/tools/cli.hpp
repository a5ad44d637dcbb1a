#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mlopt/optim.hpp"

namespace mlopt::cli {

enum ExitCode { kOk = 0, kConfigError = 2, kNumericError = 3, kDataError = 4 };

inline constexpr const char* kTraceHeader = "step,f1,grad_norm_sq,cum_avg_grad_sq,mse,wall_micros";
inline constexpr const char* kHyperoptHeader = "step,f1,grad_norm_sq,cum_avg_grad_sq,mse,wall_micros,f1_inference";

// Sidecar written next to every output file as `<output>.manifest`.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::string seed;
  std::string version;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;

  bool operator==(const RunManifest&) const = default;
};

// One `key = value` per line; config entries as `config.<key>`, outputs as
// `output.<i>`. Backslash, newline and carriage return are escaped.
std::string serialize(const RunManifest& m);
// Throws StructuralError on lines without '=' or unknown keys.
RunManifest parse_manifest(const std::string& text);

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace, bool with_inference);

// Full command line, argv[0] included. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// Arguments after the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mlopt::cli
