// adjoint-lab: runs named experiments from JSON configs and emits CSV/JSON
// artifacts. Exit codes: 0 all checks passed, 1 numerical failure or failed
// checks, 2 invalid config.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "adjointlab/experiments.hpp"

namespace {

using adjlab::ConfigError;
using adjlab::ExperimentConfig;
using adjlab::ExperimentOutcome;

struct CliOverrides {
  std::optional<std::string> problem, bc, method, pairing, scheme, initial, out;
  std::optional<int> n;
  std::optional<std::string> steps;  // single count or comma list
  std::optional<double> t_final, nu, a, h0;
  std::optional<std::uint64_t> seed;
};

std::vector<int> parse_steps_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("invalid --steps entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--steps needs at least one count");
  return out;
}

ExperimentConfig build_config(const std::string& experiment,
                              const std::optional<std::string>& config_path,
                              const CliOverrides& cli) {
  nlohmann::json doc = nlohmann::json::object();
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw ConfigError("cannot open config file '" + *config_path + "'");
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed JSON config: ") + e.what());
    }
  }
  doc["experiment"] = experiment;

  ExperimentConfig cfg = adjlab::parse_experiment_config(doc);

  if (const char* env_seed = std::getenv("ADJOINT_LAB_SEED")) {
    try {
      cfg.seed = std::stoull(env_seed);
    } catch (const std::exception&) {
      throw ConfigError("ADJOINT_LAB_SEED must be an integer, got '" + std::string(env_seed) +
                        "'");
    }
  }

  if (cli.problem) cfg.problem.kind = adjlab::parse::problem(*cli.problem);
  if (cli.bc) cfg.problem.bc = adjlab::parse::bc(*cli.bc);
  if (cli.method) cfg.method = adjlab::parse::method(*cli.method);
  if (cli.pairing) cfg.pairing = adjlab::parse::pairing(*cli.pairing);
  if (cli.scheme) {
    if (*cli.scheme != "galerkin" && *cli.scheme != "finite-difference") {
      throw ConfigError("unknown scheme '" + *cli.scheme +
                        "'; valid: galerkin, finite-difference");
    }
    cfg.problem.scheme = *cli.scheme;
  }
  if (cli.initial) cfg.problem.initial.profile = *cli.initial;
  if (cli.n) cfg.problem.n = *cli.n;
  if (cli.steps) {
    std::vector<int> counts = parse_steps_list(*cli.steps);
    if (counts.size() == 1) {
      cfg.n_steps = counts.front();
    } else {
      cfg.step_counts = counts;
    }
  }
  if (cli.t_final) cfg.t_final = *cli.t_final;
  if (cli.nu) cfg.problem.nu = *cli.nu;
  if (cli.a) cfg.problem.a = *cli.a;
  if (cli.h0) cfg.h0 = *cli.h0;
  if (cli.seed) cfg.seed = *cli.seed;
  if (cli.out) cfg.out_path = *cli.out;

  if (cfg.n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (cfg.problem.n < 1) throw ConfigError("problem n must be >= 1");
  cfg.problem.initial.build();
  return cfg;
}

int run(const std::string& experiment, const std::optional<std::string>& config_path,
        const CliOverrides& cli) {
  ExperimentConfig cfg = build_config(experiment, config_path, cli);
  ExperimentOutcome outcome = adjlab::run_experiment(cfg);

  namespace fs = std::filesystem;
  fs::path out_dir(cfg.out_path);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const std::string stem = adjlab::to_string(cfg.experiment);
  const fs::path csv_path = out_dir / (stem + ".csv");
  const fs::path json_path = out_dir / (stem + ".json");
  {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << outcome.csv;
  }
  {
    std::ofstream js(json_path, std::ios::binary);
    if (!js) throw std::runtime_error("cannot write " + json_path.string());
    js << outcome.summary.dump(2) << '\n';
  }

  std::cout << stem << ": " << (outcome.passed ? "PASS" : "FAIL") << "  ("
            << csv_path.string() << ", " << json_path.string() << ")\n";
  return outcome.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adjoint-lab: adjoint sensitivity experiments for method-of-lines PDEs"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run a named experiment");
  std::string experiment;
  run_cmd->add_option("experiment", experiment,
                      "one of: conservation, dto-vs-otd, gradient-check, order-study, "
                      "adaptive-counterexample, precondition, equilibrium")
      ->required();

  std::optional<std::string> config_path;
  CliOverrides cli;
  run_cmd->add_option("--config", config_path, "JSON config file");
  run_cmd->add_option("--out", cli.out, "output directory (default '.')");
  run_cmd->add_option("--problem", cli.problem, "heat | advection | burgers");
  run_cmd->add_option("--bc", cli.bc, "dirichlet0 | periodic");
  run_cmd->add_option("--scheme", cli.scheme, "galerkin | finite-difference");
  run_cmd->add_option("--initial", cli.initial, "gaussian | sine | constant");
  run_cmd->add_option("--method", cli.method,
                      "explicit-euler | heun | rk4 | implicit-midpoint | adaptive-euler");
  run_cmd->add_option("--pairing", cli.pairing, "standard | mass-induced");
  run_cmd->add_option("--n", cli.n, "degrees of freedom");
  run_cmd->add_option("--steps", cli.steps, "step count, or comma list for order-study");
  run_cmd->add_option("--t-final", cli.t_final, "final time");
  run_cmd->add_option("--nu", cli.nu, "diffusion coefficient");
  run_cmd->add_option("--a", cli.a, "advection speed");
  run_cmd->add_option("--h0", cli.h0, "initial step for adaptive-euler");
  run_cmd->add_option("--seed", cli.seed, "RNG seed (beats ADJOINT_LAB_SEED)");

  CLI11_PARSE(app, argc, argv);

  try {
    return run(experiment, config_path, cli);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
