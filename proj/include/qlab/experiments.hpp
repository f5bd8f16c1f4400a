#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace qlab {

enum class Outcome { pass, fail, expected_fail, unexpected_pass };

std::string to_string(Outcome o);

struct AssertionGroup {
  std::string name;
  Outcome outcome = Outcome::fail;
  std::string detail;
};

struct Artifact {
  std::string filename;
  std::string content;
};

struct ExperimentResult {
  nlohmann::json report;
  std::vector<AssertionGroup> groups;
  std::vector<Artifact> artifacts;

  /// No group failed; expected failures do not count.
  bool passed() const;
};

const std::vector<std::string>& experiment_names();

/// Validates the whole config (config-error on any problem, before any
/// computation), then runs. Relative file references in the config resolve
/// against base_dir.
ExperimentResult run_experiment(const std::string& name, const nlohmann::json& config,
                                std::optional<std::uint64_t> seed_override = std::nullopt,
                                const std::filesystem::path& base_dir = ".");

/// report.json plus the artifacts, written only once everything is computed.
void write_outputs(const std::filesystem::path& out_dir, const std::string& name, const nlohmann::json& config,
                   const ExperimentResult& result);

/// %.17g
std::string format_number(double x);

}  // namespace qlab
