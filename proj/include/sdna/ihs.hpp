#pragma once

#include <string>
#include <utility>

#include <json.hpp>

#include "sdna/erm.hpp"

namespace sdna {

// Least-squares specialization: phi_i(t) = (t - b_i)^2 / 2 with the L2
// regularizer. The dual is an n-dimensional concave quadratic; its optimum
// maps to the primal one through w* = (1/lambda n) A alpha*.
template <typename Scalar>
struct LeastSquaresOptimum {
  VectorX<Scalar> w;
  VectorX<Scalar> alpha;
};

namespace internal {

template <typename Scalar>
void require_quadratic(const ErmProblem<Scalar>& problem) {
  if (problem.loss().kind != LossKind::Quadratic)
    throw std::invalid_argument("least-squares routines need quadratic loss");
}

}  // namespace internal

// alpha* from the dense dual normal equations (I + X) alpha = b with
// X = (1/lambda n) A'A, then w* = (1/lambda n) A alpha*. The primal
// stationarity residual is checked to 1e-10.
template <typename Scalar>
LeastSquaresOptimum<Scalar> least_squares_optimum(
    const ErmProblem<Scalar>& problem) {
  internal::require_quadratic(problem);
  const Index n = problem.num_examples();
  const Scalar scale = problem.lambda() * static_cast<Scalar>(n);
  const MatrixX<Scalar>& a = problem.features();
  MatrixX<Scalar> system = a.transpose() * a / scale;
  system.diagonal().array() += Scalar(1);
  const VectorX<Scalar> alpha = system.ldlt().solve(problem.labels());
  const VectorX<Scalar> w = a * alpha / scale;
  const VectorX<Scalar> stationarity =
      a * (a.transpose() * w - problem.labels()) / static_cast<Scalar>(n) +
      problem.lambda() * w;
  if (stationarity.norm() > Scalar(1e-10) *
          std::max<Scalar>(Scalar(1), problem.labels().norm()))
    throw SolverError("least-squares optimum failed its stationarity check");
  return {w, alpha};
}

// One sketched least-squares update: the exact minimizer of
//   (1/2n) |S'(A'w - b)|^2 + (lambda/2)|w|^2 + <w, (1/n) A I_S alpha - lambda w_k>
// from its d x d normal equations
//   ((1/n) A_S A_S' + lambda I) w = (1/n) A_S (b_S - alpha_S) + lambda w_k.
// `inv_n_scale` is a fault-injection hook for the equivalence checker: it
// multiplies the right-hand side's 1/n factor, so anything other than 1
// corrupts the update from the very first step.
template <typename Scalar, typename WDerived, typename ADerived>
VectorX<Scalar> ihs_update(const ErmProblem<Scalar>& problem,
                           const Eigen::MatrixBase<WDerived>& w_k,
                           const Eigen::MatrixBase<ADerived>& alpha_k,
                           const Subset& s, Scalar inv_n_scale = 1) {
  internal::require_quadratic(problem);
  const Index d = problem.feature_dim();
  if (d > 512)
    throw CapacityError("dense sketched solve limited to d <= 512");
  const Scalar n = static_cast<Scalar>(problem.num_examples());
  const MatrixX<Scalar>& a = problem.features();

  MatrixX<Scalar> system = problem.lambda() * MatrixX<Scalar>::Identity(d, d);
  VectorX<Scalar> sketched = VectorX<Scalar>::Zero(d);  // (1/n) A_S (b - alpha)_S
  for (Index i : s) {
    const auto col = a.col(i);
    system.noalias() += col * col.transpose() / n;
    sketched += col * ((problem.labels()(i) - alpha_k(i)) * inv_n_scale / n);
  }
  const VectorX<Scalar> rhs = sketched + problem.lambda() * w_k;
  return system.ldlt().solve(rhs);
}

// Outcome of the lockstep comparison between the dual block-ascent solver and
// the sketched primal recursion.
template <typename Scalar>
struct IhsReport {
  long steps = 0;
  Scalar max_discrepancy = 0;
  bool pass = false;
  long first_fail_step = -1;  // first step exceeding the tolerance, if any

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["steps"] = steps;
    j["max_discrepancy"] = max_discrepancy;
    j["pass"] = pass;
    if (first_fail_step >= 0) j["first_fail_step"] = first_fail_step;
    return j;
  }
};

// Runs the dual solver and the sketched primal recursion in lockstep with
// identical draws and reports the largest primal-iterate discrepancy. The
// sketched side advances on its own iterates, so any per-step mismatch
// (e.g. an injected fault) accumulates and is flagged at its first step.
template <typename Scalar>
IhsReport<Scalar> verify_ihs_equivalence(const ErmProblem<Scalar>& problem,
                                         const SamplingSpec& spec, long steps,
                                         RngStream& rng, Scalar tol,
                                         Scalar linear_term_scale = 1) {
  internal::require_quadratic(problem);
  const GramCache<Scalar> gram(problem, GramPolicy::OnTheFly);
  DualState<Scalar> state = make_dual_state(problem);
  VectorX<Scalar> w_ihs = VectorX<Scalar>::Zero(problem.feature_dim());

  IhsReport<Scalar> report;
  report.steps = steps;
  for (long k = 1; k <= steps; ++k) {
    const Subset s = draw(spec, rng);
    w_ihs = ihs_update(problem, w_ihs, state.alpha, s, linear_term_scale);
    sdna_step(gram, state, s);
    const Scalar discrepancy =
        (w_ihs - state.primal()).template lpNorm<Eigen::Infinity>();
    report.max_discrepancy = std::max(report.max_discrepancy, discrepancy);
    if (discrepancy > tol && report.first_fail_step < 0)
      report.first_fail_step = k;
  }
  report.pass = report.first_fail_step < 0;
  return report;
}

}  // namespace sdna
