#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdna/composite.hpp"
#include "sdna/data_io.hpp"
#include "sdna/erm.hpp"
#include "sdna/ihs.hpp"
#include "sdna/rates.hpp"
#include "sdna/smooth.hpp"
#include "sdna/trace.hpp"

namespace sdna {

// One benchmark campaign: dataset source, problem parameters, the
// (solver, tau, seed) grid, budgets, and output location.
struct ExperimentConfig {
  std::optional<std::string> data_file;
  std::optional<SyntheticConfig> synthetic;
  LossKind loss = LossKind::Quadratic;
  std::optional<double> lambda;  // defaults to 1/n
  bool normalize = false;
  std::vector<std::string> solvers = {"sdna", "sdca"};
  std::vector<Index> taus = {1};
  std::vector<std::uint64_t> seeds = {1};
  double epochs = 10;
  double eps = 1e-6;
  GramPolicy gram = GramPolicy::OnTheFly;
  std::string out_dir = ".";

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("data")) {
      const auto& data = j.at("data");
      if (data.contains("file"))
        c.data_file = data.at("file").get<std::string>();
      if (data.contains("synthetic"))
        c.synthetic = SyntheticConfig::from_json(data.at("synthetic"));
    }
    if (j.contains("loss")) {
      const std::string loss = j.at("loss").get<std::string>();
      if (loss == "quadratic") c.loss = LossKind::Quadratic;
      else if (loss == "logistic") c.loss = LossKind::Logistic;
      else throw std::invalid_argument("unknown loss: " + loss);
    }
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    c.normalize = j.value("normalize", false);
    if (j.contains("solvers"))
      c.solvers = j.at("solvers").get<std::vector<std::string>>();
    if (j.contains("taus")) c.taus = j.at("taus").get<std::vector<Index>>();
    if (j.contains("seeds"))
      c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.epochs = j.value("epochs", 10.0);
    c.eps = j.value("eps", 1e-6);
    if (j.contains("gram")) {
      const std::string gram = j.at("gram").get<std::string>();
      if (gram == "on_the_fly") c.gram = GramPolicy::OnTheFly;
      else if (gram == "precompute") c.gram = GramPolicy::Precompute;
      else throw std::invalid_argument("unknown gram policy: " + gram);
    }
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    return c;
  }

  void validate_grid(Index n) const {
    if (seeds.empty()) throw std::invalid_argument("need at least one seed");
    if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
    for (const Index tau : taus)
      if (tau < 1 || tau > n)
        throw std::invalid_argument("tau " + std::to_string(tau) +
                                    " outside [1, n] for n = " +
                                    std::to_string(n));
    for (const auto& solver : solvers)
      if (solver != "sdna" && solver != "sdca" && solver != "alg1" &&
          solver != "pcdm" && solver != "method1" && solver != "method2" &&
          solver != "method3")
        throw std::invalid_argument("unknown solver: " + solver);
  }
};

inline ErmSolver parse_solver(const std::string& name) {
  if (name == "sdna") return ErmSolver::Sdna;
  if (name == "sdca") return ErmSolver::Sdca;
  throw std::invalid_argument("unknown solver: " + name);
}

// The dual of the ERM problem as a composite pair: smooth part
// f(alpha) = (1/(2 lambda n^2)) |A alpha|^2 plus the separable conjugates
// (1/n) phi*(-alpha_i).
template <typename Scalar>
QuadraticObjective<Scalar> dual_smooth_part(const ErmProblem<Scalar>& p) {
  const Scalar n = static_cast<Scalar>(p.num_examples());
  MatrixX<Scalar> m =
      p.features().transpose() * p.features() / (p.lambda() * n * n);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = j + 1; i < m.rows(); ++i) m(i, j) = m(j, i);
  return QuadraticObjective<Scalar>(std::move(m));
}

template <typename Scalar>
SeparableTerm<Scalar> dual_separable_part(const ErmProblem<Scalar>& p) {
  return SeparableTerm<Scalar>::scaled_conjugate(
      p.loss(), p.labels(), Scalar(1) / static_cast<Scalar>(p.num_examples()));
}

// For quadratic losses the whole negated dual is a single quadratic:
// (1/2) alpha' ((1/n) I + (1/lambda n^2) A'A) alpha - (1/n) b' alpha.
template <typename Scalar>
QuadraticObjective<Scalar> dual_full_quadratic(const ErmProblem<Scalar>& p) {
  if (p.loss().kind != LossKind::Quadratic)
    throw std::invalid_argument(
        "the dual is a plain quadratic only for quadratic losses");
  const Scalar n = static_cast<Scalar>(p.num_examples());
  MatrixX<Scalar> m =
      p.features().transpose() * p.features() / (p.lambda() * n * n);
  m.diagonal().array() += Scalar(1) / n;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = j + 1; i < m.rows(); ++i) m(i, j) = m(j, i);
  return QuadraticObjective<Scalar>(std::move(m), p.labels() / n);
}

// Materializes the ERM problem the config describes: load or generate,
// optionally normalize, densify, default lambda to 1/n.
inline ErmProblem<double> build_problem(const ExperimentConfig& config) {
  RawDataset<double> data;
  if (config.data_file) {
    data = load_libsvm<double>(std::filesystem::path(*config.data_file));
  } else if (config.synthetic) {
    data = generate_synthetic<double>(*config.synthetic,
                                      config.loss == LossKind::Quadratic);
  } else {
    throw std::invalid_argument("config needs data.file or data.synthetic");
  }
  if (config.normalize) data = normalize_columns(std::move(data));
  const double lambda =
      config.lambda.value_or(1.0 / static_cast<double>(data.num_examples()));
  return {data.to_dense(), data.labels, config.loss, lambda};
}

// Runs every (solver, tau, seed) cell and writes one CSV per cell into
// out_dir (atomically). The primal/dual solvers (sdna, sdca) trace the
// duality gap in the ERM schema; the dual-side references (alg1, pcdm,
// method1/2/3) trace their own suboptimality in the residual schema. A
// nonpositive epoch budget writes header-only files. Returns the paths.
inline std::vector<std::filesystem::path> run_solve_grid(
    const ExperimentConfig& config, const ErmProblem<double>& problem) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  const Index n = problem.num_examples();
  std::vector<fs::path> written;
  for (const auto& solver_name : config.solvers) {
    const bool erm_solver = solver_name == "sdna" || solver_name == "sdca";
    const bool composite_solver =
        solver_name == "alg1" || solver_name == "pcdm";
    for (const Index tau : config.taus) {
      const SamplingSpec spec = SamplingSpec::tau_nice(n, tau);
      const long iterations = static_cast<long>(
          std::llround(config.epochs * static_cast<double>(n) / tau));
      const long per_epoch = std::max<long>(
          1, static_cast<long>(std::llround(static_cast<double>(n) / tau)));

      // Per-(solver, tau) setup shared across seeds.
      ErmRunOptions<double> erm_options;
      erm_options.epsilon = config.eps;
      erm_options.gram = config.gram;
      if (solver_name == "sdca") {
        const MatrixX<double> gram =
            problem.features().transpose() * problem.features();
        erm_options.eso =
            eso_vector(spec, gram, EsoStrategy::CertifiedScaling);
      }

      for (const std::uint64_t seed : config.seeds) {
        const fs::path path =
            fs::path(config.out_dir) /
            (solver_name + "_tau" + std::to_string(tau) + "_seed" +
             std::to_string(seed) + ".csv");
        RngStream rng(seed);
        if (config.epochs <= 0) {
          write_file_atomic(
              path, erm_solver
                        ? "solver,tau,seed,iter,epoch,seconds,primal,dual,"
                          "gap\n"
                        : "iteration,epoch_equivalent,residual\n");
        } else if (erm_solver) {
          const auto trace = run_erm(parse_solver(solver_name), problem, spec,
                                     config.epochs, rng, erm_options);
          write_file_atomic(path,
                            erm_trace_csv(solver_name, tau, seed, trace));
        } else if (composite_solver) {
          CompositeRunOptions<double> options;
          options.epsilon = config.eps;
          options.checkpoint_every = per_epoch;
          const auto trace = run_composite(
              solver_name == "alg1" ? CompositeAlgorithm::ProximalBlockNewton
                                    : CompositeAlgorithm::Pcdm,
              dual_smooth_part(problem), dual_separable_part(problem), spec,
              VectorX<double>::Zero(n), iterations, rng, options);
          write_file_atomic(path, smooth_trace_csv(trace));
        } else {
          SmoothRunOptions<double> options;
          options.epsilon = config.eps;
          options.checkpoint_every = per_epoch;
          const SmoothMethod method = solver_name == "method1"
                                          ? SmoothMethod::BlockNewton
                                          : (solver_name == "method2"
                                                 ? SmoothMethod::FixedPreconditioner
                                                 : SmoothMethod::Diagonal);
          const auto trace =
              run_smooth(method, dual_full_quadratic(problem), spec,
                         VectorX<double>::Zero(n), iterations, rng, options);
          write_file_atomic(path, smooth_trace_csv(trace));
        }
        written.push_back(path);
      }
    }
  }
  return written;
}

struct EpochTiming {
  Index tau = 0;
  std::string solver;
  double seconds_per_epoch = 0;
};

// Median-of-samples wall time for one expected pass over the data, per
// (solver, tau) cell. Setup (ESO vector, Gram policy) happens outside the
// timed region; no checkpoints are evaluated inside it.
inline std::vector<EpochTiming> measure_epoch_timing(
    const ErmProblem<double>& problem, const std::vector<std::string>& solvers,
    const std::vector<Index>& taus, std::uint64_t seed, int samples = 5,
    double min_sample_seconds = 0.02,
    GramPolicy gram_policy = GramPolicy::OnTheFly) {
  using clock = std::chrono::steady_clock;
  const Index n = problem.num_examples();
  std::vector<EpochTiming> rows;
  for (const auto& solver_name : solvers) {
    const ErmSolver solver = parse_solver(solver_name);
    for (const Index tau : taus) {
      const SamplingSpec spec = SamplingSpec::tau_nice(n, tau);
      const long iters_per_epoch = std::max<long>(
          1, static_cast<long>(std::llround(static_cast<double>(n) / tau)));
      GramCache<double> gram(problem, gram_policy);
      VectorX<double> v;
      if (solver == ErmSolver::Sdca) {
        const MatrixX<double> full =
            problem.features().transpose() * problem.features();
        v = eso_vector(spec, full, EsoStrategy::CertifiedScaling);
      }
      RngStream rng(seed);
      DualState<double> state = make_dual_state(problem);
      const auto run_epochs = [&](long count) {
        for (long e = 0; e < count; ++e) {
          for (long k = 0; k < iters_per_epoch; ++k) {
            const Subset s = draw(spec, rng);
            if (solver == ErmSolver::Sdna)
              sdna_step(gram, state, s);
            else
              sdca_step(problem, state, s, v);
          }
        }
      };
      // Warm up and calibrate the batch size so one sample is measurable.
      const auto t0 = clock::now();
      run_epochs(1);
      const double warm =
          std::chrono::duration<double>(clock::now() - t0).count();
      const long batch = std::max<long>(
          1, static_cast<long>(min_sample_seconds / std::max(warm, 1e-9)));
      std::vector<double> measured;
      for (int rep = 0; rep < samples; ++rep) {
        // Fresh state so late-run convergence cannot shrink the work.
        state = make_dual_state(problem);
        const auto t1 = clock::now();
        run_epochs(batch);
        const double elapsed =
            std::chrono::duration<double>(clock::now() - t1).count();
        measured.push_back(elapsed / static_cast<double>(batch));
      }
      std::sort(measured.begin(), measured.end());
      rows.push_back({tau, solver_name,
                      measured[measured.size() / 2]});
    }
  }
  return rows;
}

inline std::string epoch_timing_csv(const std::vector<EpochTiming>& rows) {
  std::ostringstream os;
  os << "tau,solver,seconds_per_epoch\n";
  for (const auto& row : rows)
    os << row.tau << ',' << row.solver << ','
       << internal::format_number(row.seconds_per_epoch) << '\n';
  return os.str();
}

// Rate-report command core: evaluates one of the built-in fixtures or the
// configured ERM problem and attaches the proven ordering checks.
struct RatesRequest {
  std::string fixture = "erm";  // correlated | identity | random | erm
  Index n = 3;
  Index tau = 2;
  std::uint64_t seed = 0;
  std::uint64_t mc_samples = 0;
};

inline nlohmann::json run_rates_request(const RatesRequest& request,
                                        const ExperimentConfig& config) {
  nlohmann::json out;
  if (request.fixture == "erm") {
    const ErmProblem<double> problem = build_problem(config);
    const SamplingSpec spec =
        SamplingSpec::tau_nice(problem.num_examples(), request.tau);
    RateReport<double> report = erm_rate_report(
        problem.features(), problem.lambda(), problem.gamma_loss(), spec);
    if (!report.sigma1 && request.mc_samples > 0) {
      const double n = static_cast<double>(problem.num_examples());
      MatrixX<double> m = problem.features().transpose() *
                          problem.features() / (problem.lambda() * n);
      m.diagonal().array() += problem.gamma_loss();
      RngStream rng(request.seed);
      report.sigma1 =
          sigma1_monte_carlo(m, m, spec, request.mc_samples, rng);
      report.certified = false;
    }
    out = report.to_json();
    if (report.theta && report.sigma1_prox)
      out["erm_chain_ok"] =
          *report.theta <= *report.sigma1_prox + 1e-12 &&
          (!report.sigma1 || *report.sigma1_prox <= *report.sigma1 + 1e-12);
    return out;
  }

  MatrixX<double> m;
  if (request.fixture == "correlated") {
    m.resize(3, 3);
    m << 1.0000, 0.9900, 0.9999,
         0.9900, 1.0000, 0.9900,
         0.9999, 0.9900, 1.0000;
  } else if (request.fixture == "identity") {
    m = MatrixX<double>::Identity(request.n, request.n);
  } else if (request.fixture == "random") {
    RngStream rng(request.seed);
    MatrixX<double> raw(request.n, request.n);
    for (Index j = 0; j < request.n; ++j)
      for (Index i = 0; i < request.n; ++i) raw(i, j) = rng.next_normal();
    m = raw * raw.transpose() +
        0.5 * MatrixX<double>::Identity(request.n, request.n);
    for (Index j = 0; j < request.n; ++j)
      for (Index i = j + 1; i < request.n; ++i) m(i, j) = m(j, i);
  } else {
    throw std::invalid_argument("unknown rates fixture: " + request.fixture);
  }
  const SamplingSpec spec = SamplingSpec::tau_nice(m.rows(), request.tau);
  const RateReport<double> report =
      matrix_rate_report(m, m, spec, VectorX<double>::Zero(m.rows()));
  out = report.to_json();
  if (report.sigma1 && report.sigma2 && report.sigma3)
    out["rate_ordering_ok"] = 0 < *report.sigma3 &&
                         *report.sigma3 <= *report.sigma2 + 1e-12 &&
                         *report.sigma2 <= *report.sigma1 + 1e-12 &&
                         *report.sigma1 <= 1 + 1e-12;
  if (report.sigma1_prox && report.sigma3_prox)
    out["prox_ordering_ok"] =
        *report.sigma3_prox <= *report.sigma1_prox + 1e-12;
  return out;
}

}  // namespace sdna
