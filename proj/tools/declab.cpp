// declab: scenario runner.
//
//   declab run <config> [--set key=value ...] [--workers N] [--output DIR]
//   declab validate <config> [--set key=value ...]
//   declab list-scenarios
//
// Exit codes: 0 success, 2 config error, 3 engine error.

#include <iostream>

#include <CLI11.hpp>

#include "declab/errors.hpp"
#include "declab/scenario.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kEngineError = 3;

int exit_code_for(const declab::Error& e) {
  switch (e.code()) {
    case declab::ErrorCode::ConfigError:
    case declab::ErrorCode::ParseError:
      return kConfigError;
    default:
      return kEngineError;
  }
}

declab::ConfigSource load(const std::string& path, const std::vector<std::string>& sets) {
  return declab::load_config(path, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoherence laboratory scenario runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::size_t workers = 0;
  std::string output;

  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write CSVs plus manifest.json");
  run_cmd->add_option("config", config_path, "YAML config file")->required();
  run_cmd->add_option("--set", sets, "Override a config key, e.g. --set params.n=10");
  run_cmd->add_option("--workers", workers, "Worker threads (overrides the config)");
  run_cmd->add_option("--output", output, "Output directory (overrides the config)");

  auto* validate_cmd = app.add_subcommand("validate", "List schema violations without running");
  validate_cmd->add_option("config", config_path, "YAML config file")->required();
  validate_cmd->add_option("--set", sets, "Override a config key");

  app.add_subcommand("list-scenarios", "Print the available scenario names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (app.got_subcommand("list-scenarios")) {
      for (const auto& name : declab::scenario_names())
        std::cout << name << (declab::is_stochastic(name) ? "  (requires seed)" : "") << '\n';
      return kOk;
    }

    if (app.got_subcommand("validate")) {
      const auto src = load(config_path, sets);
      const auto violations = declab::validate_config(src.document, src.base_dir);
      if (violations.empty()) {
        std::cout << "ok\n";
        return kOk;
      }
      std::cout << declab::format_violations(violations) << '\n';
      return kConfigError;
    }

    auto src = load(config_path, sets);
    if (workers > 0) src.document["workers"] = workers;
    if (!output.empty()) src.document["output"] = output;
    const auto cfg = declab::ScenarioConfig::from_json(src.document, src.base_dir);
    const auto manifest = declab::run(cfg);
    for (const auto& line : manifest.report) std::cout << line << '\n';
    for (const auto& f : manifest.files) std::cout << f.sha256 << "  " << (cfg.output_dir / f.name).string() << '\n';
    return kOk;
  } catch (const declab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEngineError;
  }
}
