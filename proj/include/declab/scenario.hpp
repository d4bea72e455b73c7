#pragma once

// Scenario runner: YAML configs, schema validation, CSV emission and run
// manifests. A config looks like
//
//   scenario: grw
//   seed: 7
//   output: out/grw
//   workers: 2
//   params:
//     preset: paper-macroscopic
//     t_end: 1.0
//
// Relative paths inside params resolve against the config file's directory;
// `output` resolves against the working directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace declab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kArtifactVersion = "0.1.0";

std::vector<std::string> scenario_names();
bool is_stochastic(const std::string& scenario);

/// YAML text to JSON. Quoted scalars stay strings; unquoted ones become
/// integers, floats or booleans where they parse as such. ParseError on bad YAML.
Json yaml_to_json(const std::string& text);
/// Applies "a.b.c=value" overrides; the value is parsed as a YAML scalar or flow node.
void apply_override(Json& config, const std::string& assignment);

struct ConfigSource {
  Json document;
  std::filesystem::path base_dir;  // for relative input files
};

/// ParseError when the file cannot be read or is not YAML.
ConfigSource load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

struct Violation {
  std::string path;  // "params.nu", "seed", ...
  std::string message;
};

std::vector<Violation> validate_config(const Json& document, const std::filesystem::path& base_dir = ".");
std::string format_violations(const std::vector<Violation>& violations);

struct ScenarioConfig {
  std::string scenario;
  Json params = Json::object();
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir;
  std::filesystem::path base_dir = ".";
  std::size_t workers = 1;
  Json echo;  // the document as validated

  /// ConfigError listing every violation.
  static ScenarioConfig from_json(const Json& document, const std::filesystem::path& base_dir = ".");
};

struct EmittedFile {
  std::string name;  // relative to the output directory
  std::uintmax_t bytes = 0;
  std::string sha256;
};

struct RunManifest {
  Json config;
  std::string version = kArtifactVersion;
  double duration_seconds = 0.0;
  std::vector<EmittedFile> files;
  Json notes = Json::object();   // scenario-specific remarks, e.g. preset rescaling
  std::vector<std::string> report;  // human-readable lines for the terminal

  Json to_json() const;
};

/// Runs the engine, writes the CSVs and manifest.json into output_dir.
/// Engine failures are rethrown with the scenario name prefixed, keeping the code.
RunManifest run(const ScenarioConfig& config);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

}  // namespace declab
