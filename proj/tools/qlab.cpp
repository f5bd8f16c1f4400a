#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qlab/error.hpp"
#include "qlab/experiments.hpp"
#include "qlab/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qlab: numerical experiments for conformally flat fourth-order geometry"};
  std::string experiment, config_path, out_dir;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("experiment", experiment, "Experiment name")
      ->required()
      ->check(CLI::IsMember(qlab::experiment_names()));
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--out", out_dir, "Output directory")->required();
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Overrides the config seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  nlohmann::json config;
  {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "config-error: cannot read " << config_path << '\n';
      return 2;
    }
    try {
      config = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "config-error: " << e.what() << '\n';
      return 2;
    }
  }

  qlab::set_thread_count(threads);
  qlab::ExperimentResult result;
  try {
    result = qlab::run_experiment(experiment, config, seed, std::filesystem::path(config_path).parent_path());
  } catch (const qlab::Error& e) {
    std::cerr << e.what() << '\n';
    return e.code() == qlab::ErrorCode::config_error ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  for (const auto& g : result.groups)
    std::cout << qlab::to_string(g.outcome) << ' ' << experiment << '/' << g.name << ": " << g.detail << '\n';
  qlab::write_outputs(out_dir, experiment, config, result);
  return result.passed() ? 0 : 1;
}
