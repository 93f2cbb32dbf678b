#pragma once

#include "lipmap/flow.hpp"
#include "lipmap/potentials.hpp"
#include "lipmap/quadrature.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace lipmap {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvariantFailure = 1,
  kExitConfigError = 2,
  kExitNumericFailure = 3,
};

struct JobConfig {
  std::string command;
  nlohmann::json raw;  ///< effective configuration, echoed into outputs
  bool quick = false;
  std::uint64_t seed = 42;
};

/// Reads a job file and applies command line overrides. Throws CONFIG.
JobConfig load_job_config(const std::filesystem::path& file, const std::string& command, bool quick,
                          std::optional<std::uint64_t> seed);
JobConfig make_job_config(nlohmann::json raw, const std::string& command, bool quick,
                          std::optional<std::uint64_t> seed);

/// Potential from {"family": ..., "params": {...}} or {"table": {"grid", "values"}},
/// with optional "regularize", "mollify", metadata overrides and "normalize".
Potential potential_from_json(const nlohmann::json& spec, const QuadratureScheme& scheme = {});
QuadratureScheme scheme_from_json(const nlohmann::json& spec, bool quick = false);
FlowConfig flow_from_json(const nlohmann::json& spec, bool quick = false);

int run_transport(const JobConfig& cfg, const std::filesystem::path& out);
int run_bound(const JobConfig& cfg, const std::filesystem::path& out);
int run_profile(const JobConfig& cfg, const std::filesystem::path& out);
int run_verify(const JobConfig& cfg, const std::filesystem::path& out);
int run_counterexample(const JobConfig& cfg, const std::filesystem::path& out);

/// Dispatches on cfg.command.
int run_job(const JobConfig& cfg, const std::filesystem::path& out);

/// Loads, runs and maps every failure onto an exit code; messages go to
/// stderr. Never throws.
int run_job_file(const std::string& command, const std::filesystem::path& config,
                 const std::filesystem::path& out, bool quick, std::optional<std::uint64_t> seed);

}  // namespace lipmap
