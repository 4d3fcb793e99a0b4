// Benchmark and verification driver: rate reports, solver sweeps, epoch
// timing, and the sketched-least-squares equivalence check. Emits CSV/JSON
// for external plotting.
//
// Exit codes: 0 success, 2 configuration error, 3 invariant violation,
// 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdna/bench.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::vector<sdna::Index> taus;
  std::vector<std::string> solvers;
  std::optional<double> epochs;
  std::optional<double> eps;
  std::uint64_t mc_samples = 0;
};

nlohmann::json load_config_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

sdna::ExperimentConfig assemble_config(const CommonFlags& flags,
                                       const nlohmann::json& j) {
  sdna::ExperimentConfig config = sdna::ExperimentConfig::from_json(j);
  if (!flags.seeds.empty()) config.seeds = flags.seeds;
  if (!flags.taus.empty()) config.taus = flags.taus;
  if (!flags.solvers.empty()) config.solvers = flags.solvers;
  if (flags.epochs) config.epochs = *flags.epochs;
  if (flags.eps) config.eps = *flags.eps;
  // Output directory precedence: explicit flag, then environment override,
  // then the config file.
  if (const char* env = std::getenv("SDNA_BENCH_OUT"))
    config.out_dir = env;
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  return config;
}

void write_json_output(const nlohmann::json& j, const std::string& out_dir,
                       const std::string& filename) {
  std::cout << j.dump(2) << std::endl;
  std::filesystem::create_directories(out_dir);
  sdna::write_file_atomic(std::filesystem::path(out_dir) / filename,
                          j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic dual Newton ascent benchmark toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonFlags flags;
  app.add_option("--config", flags.config_path, "JSON configuration file");
  app.add_option("--out", flags.out_dir, "output directory");
  app.add_option("--seed", flags.seeds, "solver seed (repeatable)");
  app.add_option("--tau", flags.taus, "minibatch size (repeatable)");
  app.add_option("--solver", flags.solvers, "sdna|sdca (repeatable)");
  app.add_option("--epochs", flags.epochs, "epoch budget");
  app.add_option("--eps", flags.eps, "duality-gap target");
  app.add_option("--mc-samples", flags.mc_samples,
                 "Monte Carlo samples for non-enumerable rate reports");

  auto* rates_cmd =
      app.add_subcommand("rates", "print the rate constants as JSON");
  std::string fixture = "erm";
  sdna::Index fixture_n = 3;
  sdna::Index fixture_tau = 2;
  std::uint64_t fixture_seed = 0;
  rates_cmd->add_option("--fixture", fixture,
                        "correlated|identity|random|erm");
  rates_cmd->add_option("--n", fixture_n, "fixture dimension");
  rates_cmd->add_option("--rate-tau", fixture_tau, "fixture minibatch size");
  rates_cmd->add_option("--fixture-seed", fixture_seed,
                        "seed for the random fixture");

  auto* solve_cmd =
      app.add_subcommand("solve", "run the (solver, tau, seed) sweep");

  auto* timing_cmd =
      app.add_subcommand("epoch-timing", "time one epoch per cell");
  int timing_samples = 5;
  timing_cmd->add_option("--samples", timing_samples,
                         "timed samples per cell (median reported)");

  auto* ihs_cmd = app.add_subcommand(
      "ihs-verify", "lockstep dual-solver vs sketched-update check");
  long ihs_steps = 50;
  sdna::Index ihs_n = 64, ihs_d = 16, ihs_tau = 4;
  double ihs_tol = 1e-8;
  double inject_scale = 1.0;
  ihs_cmd->add_option("--steps", ihs_steps, "lockstep steps");
  ihs_cmd->add_option("--n", ihs_n, "examples");
  ihs_cmd->add_option("--d", ihs_d, "features");
  ihs_cmd->add_option("--ihs-tau", ihs_tau, "minibatch size");
  ihs_cmd->add_option("--tol", ihs_tol, "iterate discrepancy tolerance");
  ihs_cmd->add_option("--inject-fault", inject_scale,
                      "test hook: scale the sketched 1/n factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const nlohmann::json config_json = load_config_json(flags.config_path);
    sdna::ExperimentConfig config = assemble_config(flags, config_json);

    if (rates_cmd->parsed()) {
      sdna::RatesRequest request;
      request.fixture = fixture;
      request.n = fixture_n;
      request.tau = fixture_tau;
      request.seed = fixture_seed;
      request.mc_samples = flags.mc_samples;
      if (config_json.contains("rates")) {
        const auto& r = config_json.at("rates");
        request.fixture = r.value("fixture", request.fixture);
        request.n = r.value("n", request.n);
        request.tau = r.value("tau", request.tau);
        request.seed = r.value("seed", request.seed);
      }
      write_json_output(sdna::run_rates_request(request, config),
                        config.out_dir, "rates.json");
      return kExitOk;
    }

    if (solve_cmd->parsed()) {
      const sdna::ErmProblem<double> problem = sdna::build_problem(config);
      config.validate_grid(problem.num_examples());
      const auto paths = sdna::run_solve_grid(config, problem);
      std::cout << "wrote " << paths.size() << " trace files to "
                << config.out_dir << std::endl;
      return kExitOk;
    }

    if (timing_cmd->parsed()) {
      const sdna::ErmProblem<double> problem = sdna::build_problem(config);
      config.validate_grid(problem.num_examples());
      const auto rows = sdna::measure_epoch_timing(
          problem, config.solvers, config.taus, config.seeds.front(),
          timing_samples, 0.02, config.gram);
      const std::string csv = sdna::epoch_timing_csv(rows);
      std::cout << csv;
      std::filesystem::create_directories(config.out_dir);
      sdna::write_file_atomic(
          std::filesystem::path(config.out_dir) / "epoch_timing.csv", csv);
      return kExitOk;
    }

    if (ihs_cmd->parsed()) {
      sdna::SyntheticConfig synth;
      synth.d = ihs_d;
      synth.n = ihs_n;
      synth.seed = config.seeds.front();
      synth.density = 1.0;
      synth.label_noise = 0.1;
      sdna::ExperimentConfig ihs_config = config;
      ihs_config.synthetic = synth;
      ihs_config.data_file.reset();
      ihs_config.loss = sdna::LossKind::Quadratic;
      const sdna::ErmProblem<double> problem =
          sdna::build_problem(ihs_config);
      sdna::RngStream rng(config.seeds.front() + 1);
      const auto report = sdna::verify_ihs_equivalence(
          problem, sdna::SamplingSpec::tau_nice(ihs_n, ihs_tau), ihs_steps,
          rng, ihs_tol, inject_scale);
      write_json_output(report.to_json(), config.out_dir, "ihs_verify.json");
      return report.pass ? kExitOk : kExitNumerical;
    }

    return kExitConfig;
  } catch (const sdna::SolverError& e) {
    std::cerr << "invariant violation: " << e.what() << std::endl;
    return kExitInvariant;
  } catch (const sdna::FactorizationError& e) {
    std::cerr << "numerical failure: " << e.what() << std::endl;
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitNumerical;
  }
}
