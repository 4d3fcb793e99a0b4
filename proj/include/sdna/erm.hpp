#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdna/composite.hpp"
#include "sdna/linalg.hpp"
#include "sdna/losses.hpp"
#include "sdna/sampling.hpp"
#include "sdna/scalar_root.hpp"
#include "sdna/trace.hpp"

namespace sdna {

// Regularized empirical risk: P(w) = (1/n) sum phi_i(a_i'w) + (lambda/2)|w|^2
// with the examples a_i stored as the columns of a dense d x n matrix. The
// regularizer is fixed to g(w) = |w|^2/2, so g* = g and grad g* = identity.
template <typename Scalar>
class ErmProblem {
 public:
  ErmProblem(MatrixX<Scalar> features, VectorX<Scalar> labels, LossKind loss,
             Scalar lambda)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        loss_{loss},
        lambda_(lambda) {
    if (features_.cols() != labels_.size())
      throw std::invalid_argument("label count must match example count");
    if (features_.rows() < 1 || features_.cols() < 1)
      throw std::invalid_argument("need at least one feature and one example");
    if (!(lambda_ > 0))
      throw std::invalid_argument("regularization lambda must be positive");
    for (Index i = 0; i < labels_.size(); ++i)
      loss_.validate_label(labels_(i));
  }

  Index feature_dim() const { return features_.rows(); }
  Index num_examples() const { return features_.cols(); }
  const MatrixX<Scalar>& features() const { return features_; }
  const VectorX<Scalar>& labels() const { return labels_; }
  const LossFamily<Scalar>& loss() const { return loss_; }
  Scalar gamma_loss() const { return loss_.gamma(); }
  Scalar lambda() const { return lambda_; }

  Scalar primal_value(const VectorX<Scalar>& w) const {
    const Index n = num_examples();
    Scalar risk = 0;
    for (Index i = 0; i < n; ++i)
      risk += loss_.value(features_.col(i).dot(w), labels_(i));
    return risk / static_cast<Scalar>(n) + lambda_ / 2 * w.squaredNorm();
  }

  Scalar dual_value(const VectorX<Scalar>& alpha) const {
    const Index n = num_examples();
    Scalar sum = 0;
    for (Index i = 0; i < n; ++i)
      sum -= loss_.conjugate(-alpha(i), labels_(i));
    const VectorX<Scalar> bar =
        features_ * alpha / (lambda_ * static_cast<Scalar>(n));
    return sum / static_cast<Scalar>(n) - lambda_ / 2 * bar.squaredNorm();
  }

 private:
  MatrixX<Scalar> features_;
  VectorX<Scalar> labels_;
  LossFamily<Scalar> loss_;
  Scalar lambda_;
};

// Dual iterate plus the maintained average alpha_bar = (1/lambda n) A alpha.
// For the L2 regularizer the primal iterate is w = grad g*(alpha_bar) =
// alpha_bar itself.
template <typename Scalar>
struct DualState {
  VectorX<Scalar> alpha;
  VectorX<Scalar> alpha_bar;

  const VectorX<Scalar>& primal() const { return alpha_bar; }
};

template <typename Scalar, typename A0Derived>
DualState<Scalar> make_dual_state(const ErmProblem<Scalar>& problem,
                                  const Eigen::MatrixBase<A0Derived>& alpha0) {
  const Scalar n = static_cast<Scalar>(problem.num_examples());
  VectorX<Scalar> bar = problem.features() * alpha0 / (problem.lambda() * n);
  return {alpha0, std::move(bar)};
}

template <typename Scalar>
DualState<Scalar> make_dual_state(const ErmProblem<Scalar>& problem) {
  return make_dual_state(problem,
                         VectorX<Scalar>::Zero(problem.num_examples()));
}

// |alpha_bar - (1/lambda n) A alpha|: drift of the maintained average.
template <typename Scalar>
Scalar alpha_bar_drift(const ErmProblem<Scalar>& problem,
                       const DualState<Scalar>& state) {
  const Scalar n = static_cast<Scalar>(problem.num_examples());
  return (state.alpha_bar -
          problem.features() * state.alpha / (problem.lambda() * n))
      .norm();
}

// P(w) - D(alpha) for the state's primal/dual pair. Weak duality makes this
// nonnegative; a value below -1e-9 signals a broken state and throws.
template <typename Scalar>
Scalar duality_gap(const ErmProblem<Scalar>& problem,
                   const DualState<Scalar>& state) {
  const Scalar gap = problem.primal_value(state.primal()) -
                     problem.dual_value(state.alpha);
  if (gap < Scalar(-1e-9))
    throw SolverError("duality gap " + std::to_string(gap) +
                      " violates weak duality");
  return gap;
}

enum class GramPolicy {
  OnTheFly,    // gather Gram blocks from columns per step
  Precompute,  // materialize A'A once (n <= 4096)
};

// Access to blocks of X = (1/lambda n) A'A under either policy.
template <typename Scalar>
class GramCache {
 public:
  GramCache(const ErmProblem<Scalar>& problem, GramPolicy policy)
      : problem_(&problem) {
    if (policy == GramPolicy::Precompute) {
      if (problem.num_examples() > 4096)
        throw CapacityError("precomputed Gram limited to n <= 4096");
      full_ = problem.features().transpose() * problem.features();
    }
  }

  Scalar x_diagonal(Index i) const {
    const Scalar scale =
        problem_->lambda() * static_cast<Scalar>(problem_->num_examples());
    if (full_) return (*full_)(i, i) / scale;
    const auto& a = problem_->features();
    return a.col(i).dot(a.col(i)) / scale;
  }

  // Compacted |S| x |S| block of X.
  MatrixX<Scalar> x_block(const Subset& s) const {
    const Index k = s.size();
    const Scalar scale =
        problem_->lambda() * static_cast<Scalar>(problem_->num_examples());
    MatrixX<Scalar> block(k, k);
    if (full_) {
      for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < k; ++i) block(i, j) = (*full_)(s[i], s[j]);
    } else {
      const auto& a = problem_->features();
      for (Index j = 0; j < k; ++j) {
        for (Index i = 0; i <= j; ++i) {
          block(i, j) = a.col(s[i]).dot(a.col(s[j]));
          block(j, i) = block(i, j);
        }
      }
    }
    return block / scale;
  }

  const ErmProblem<Scalar>& problem() const { return *problem_; }

 private:
  const ErmProblem<Scalar>* problem_;
  std::optional<MatrixX<Scalar>> full_;
};

namespace internal {

// Solves the restricted dual subproblem
//   min_h <(A'w)_S, h> + (1/2) h' X_S h + sum_{i in S} phi*(-alpha_i - h_i)
// in compacted coordinates. Quadratic losses reduce to one linear solve;
// otherwise a damped Newton iteration runs to gradient norm <= 1e-10.
template <typename Scalar>
VectorX<Scalar> solve_dual_block(const ErmProblem<Scalar>& problem,
                                 const DualState<Scalar>& state,
                                 const Subset& s,
                                 const MatrixX<Scalar>& x_block) {
  const Index k = s.size();
  const auto& loss = problem.loss();
  const VectorX<Scalar>& w = state.primal();
  VectorX<Scalar> t(k);  // (A'w)_S
  for (Index j = 0; j < k; ++j)
    t(j) = problem.features().col(s[j]).dot(w);

  if (loss.kind == LossKind::Quadratic) {
    VectorX<Scalar> rhs(k);
    for (Index j = 0; j < k; ++j)
      rhs(j) = problem.labels()(s[j]) - state.alpha(s[j]) - t(j);
    if (k == 1) {  // scalar stationarity, no factorization machinery
      rhs(0) /= x_block(0, 0) + Scalar(1);
      return rhs;
    }
    MatrixX<Scalar> system = x_block;
    system.diagonal().array() += Scalar(1);
    return internal::factor_block(system, s).solve(rhs);
  }

  // Damped Newton, kept strictly inside the conjugate domain.
  VectorX<Scalar> lo(k), hi(k), h(k);
  for (Index j = 0; j < k; ++j) {
    const auto [ulo, uhi] = loss.conjugate_domain(problem.labels()(s[j]));
    // u = -alpha - h in [ulo, uhi]  =>  h in [-alpha - uhi, -alpha - ulo].
    lo(j) = -state.alpha(s[j]) - uhi;
    hi(j) = -state.alpha(s[j]) - ulo;
    const Scalar pad = (hi(j) - lo(j)) / 100;
    h(j) = std::clamp(Scalar(0), lo(j) + pad, hi(j) - pad);
  }
  const auto objective = [&](const VectorX<Scalar>& hh) {
    Scalar val = t.dot(hh) + hh.dot(x_block * hh) / 2;
    for (Index j = 0; j < k; ++j)
      val += loss.conjugate(-state.alpha(s[j]) - hh(j), problem.labels()(s[j]));
    return val;
  };
  const auto gradient_norm = [&](const VectorX<Scalar>& hh) {
    VectorX<Scalar> grad = t + x_block * hh;
    for (Index j = 0; j < k; ++j)
      grad(j) -= loss.conjugate_derivative(-state.alpha(s[j]) - hh(j),
                                           problem.labels()(s[j]));
    return grad.norm();
  };

  bool newton_alive = true;
  for (int iter = 0; iter < 200; ++iter) {
    VectorX<Scalar> grad = t + x_block * h;
    MatrixX<Scalar> hess = x_block;
    for (Index j = 0; j < k; ++j) {
      const Scalar u = -state.alpha(s[j]) - h(j);
      const Scalar label = problem.labels()(s[j]);
      grad(j) -= loss.conjugate_derivative(u, label);
      hess(j, j) += loss.conjugate_second_derivative(u, label);
    }
    if (grad.norm() <= Scalar(1e-10)) return h;
    if (!newton_alive) break;
    const VectorX<Scalar> direction = hess.ldlt().solve(-grad);
    Scalar step = 1;
    const Scalar base = objective(h);
    const Scalar slack = Scalar(1e-15) * (1 + std::abs(base));
    newton_alive = false;
    for (int bt = 0; bt < 60; ++bt) {
      VectorX<Scalar> trial = h + step * direction;
      bool inside = true;
      for (Index j = 0; j < k && inside; ++j)
        inside = trial(j) > lo(j) && trial(j) < hi(j);
      if (inside && objective(trial) <= base + slack) {
        h = trial;
        newton_alive = true;
        break;
      }
      step /= 2;
    }
  }

  // Value-based backtracking plateaus once conjugate curvature blows up near
  // a domain end; cyclic scalar solves on the (bracketable) derivative finish
  // the job to the same gradient tolerance.
  for (int sweep = 0; sweep < 200; ++sweep) {
    for (Index j = 0; j < k; ++j) {
      const Scalar label = problem.labels()(s[j]);
      const Scalar alpha_j = state.alpha(s[j]);
      const Scalar offset = t(j) + x_block.row(j).dot(h) -
                            x_block(j, j) * h(j);
      const auto d = [&](Scalar hj) {
        return offset + x_block(j, j) * hj -
               loss.conjugate_derivative(-alpha_j - hj, label);
      };
      const auto dd = [&](Scalar hj) {
        return x_block(j, j) +
               loss.conjugate_second_derivative(-alpha_j - hj, label);
      };
      h(j) = increasing_root<Scalar>(d, dd, lo(j), hi(j), h(j), Scalar(1e-13));
    }
    if (gradient_norm(h) <= Scalar(1e-10)) return h;
  }
  throw SolverError("dual block solve did not reach gradient norm 1e-10 on "
                    "subset " + s.to_string());
}

}  // namespace internal

// One SDNA step: exactly maximize the dual over the sampled coordinate block,
// then refresh the maintained average (and through it the primal iterate).
template <typename Scalar>
void sdna_step(const GramCache<Scalar>& gram, DualState<Scalar>& state,
               const Subset& s) {
  const ErmProblem<Scalar>& problem = gram.problem();
  const Scalar scale =
      problem.lambda() * static_cast<Scalar>(problem.num_examples());
  if (s.size() == 1 && problem.loss().kind == LossKind::Quadratic) {
    // Scalar stationarity; same arithmetic as the block path without its
    // factorization machinery.
    const Index i = s[0];
    const Scalar t = problem.features().col(i).dot(state.primal());
    const Scalar delta = (problem.labels()(i) - state.alpha(i) - t) /
                         (gram.x_diagonal(i) + 1);
    state.alpha(i) += delta;
    state.alpha_bar += problem.features().col(i) * (delta / scale);
    return;
  }
  const VectorX<Scalar> delta =
      internal::solve_dual_block(problem, state, s, gram.x_block(s));
  for (Index j = 0; j < s.size(); ++j) {
    state.alpha(s[j]) += delta(j);
    state.alpha_bar += problem.features().col(s[j]) * (delta(j) / scale);
  }
}

// One minibatch SDCA step: independent scalar subproblems with curvature
// v_i (an A'A-scale ESO vector). The quadratic coefficient actually used is
// v_i / (lambda n), the scale on which the dual smooth part lives.
template <typename Scalar, typename VDerived>
void sdca_step(const ErmProblem<Scalar>& problem, DualState<Scalar>& state,
               const Subset& s, const Eigen::MatrixBase<VDerived>& v) {
  const auto& loss = problem.loss();
  const Scalar scale =
      problem.lambda() * static_cast<Scalar>(problem.num_examples());
  const VectorX<Scalar>& w = state.primal();
  VectorX<Scalar> h(s.size());
  for (Index j = 0; j < s.size(); ++j) {
    const Index i = s[j];
    const Scalar t = problem.features().col(i).dot(w);
    const Scalar vt = v(i) / scale;
    if (loss.kind == LossKind::Quadratic) {
      h(j) = (problem.labels()(i) - state.alpha(i) - t) / (vt + 1);
    } else {
      const Scalar label = problem.labels()(i);
      const auto [ulo, uhi] = loss.conjugate_domain(label);
      const auto d = [&](Scalar hh) {
        return t + vt * hh - loss.conjugate_derivative(-state.alpha(i) - hh,
                                                       label);
      };
      const auto dd = [&](Scalar hh) {
        return vt + loss.conjugate_second_derivative(-state.alpha(i) - hh,
                                                     label);
      };
      h(j) = increasing_root<Scalar>(d, dd, -state.alpha(i) - uhi,
                                     -state.alpha(i) - ulo, Scalar(0),
                                     Scalar(1e-12));
    }
  }
  for (Index j = 0; j < s.size(); ++j) {
    const Index i = s[j];
    state.alpha(i) += h(j);
    state.alpha_bar += problem.features().col(i) * (h(j) / scale);
  }
}

enum class ErmSolver { Sdna, Sdca };

template <typename Scalar>
struct ErmRunOptions {
  // Checkpoint cadence in iterations; 0 means once per expected epoch.
  long checkpoint_every = 0;
  // Stop once the duality gap reaches this (0 disables).
  Scalar epsilon = 0;
  GramPolicy gram = GramPolicy::OnTheFly;
  // ESO vector on the A'A scale for SDCA; certified scaling by default.
  std::optional<VectorX<Scalar>> eso;
  std::optional<VectorX<Scalar>> alpha0;
};

// Runs `epochs * n / E|S|` iterations of the chosen dual solver under a
// uniform sampling and traces (P, D, gap) at checkpoints. SDNA performs
// exact restricted dual ascent, so a decreasing dual value is a hard error.
template <typename Scalar>
std::vector<TraceRecord<Scalar>> run_erm(
    ErmSolver solver, const ErmProblem<Scalar>& problem,
    const SamplingSpec& spec, double epochs, RngStream& rng,
    const ErmRunOptions<Scalar>& options = {}) {
  if (spec.dimension() != problem.num_examples())
    throw std::invalid_argument("sampling dimension must equal example count");
  if (!spec.is_uniform())
    throw SamplingError("ERM solvers require a uniform sampling, got " +
                        spec.describe());

  const double tau = spec.expected_cardinality();
  const Index n = problem.num_examples();
  const long iterations =
      static_cast<long>(std::llround(epochs * static_cast<double>(n) / tau));
  const long every = options.checkpoint_every > 0
                         ? options.checkpoint_every
                         : std::max<long>(1, static_cast<long>(
                                                 std::llround(n / tau)));

  GramCache<Scalar> gram(problem, options.gram);
  VectorX<Scalar> v;
  if (solver == ErmSolver::Sdca) {
    if (options.eso) {
      v = *options.eso;
    } else {
      const MatrixX<Scalar> full_gram =
          problem.features().transpose() * problem.features();
      v = eso_vector(spec, full_gram, EsoStrategy::CertifiedScaling);
    }
  }

  DualState<Scalar> state =
      options.alpha0 ? make_dual_state(problem, *options.alpha0)
                     : make_dual_state(problem);

  std::vector<TraceRecord<Scalar>> trace;
  double seconds = 0;
  Scalar last_dual = -std::numeric_limits<Scalar>::infinity();
  const auto checkpoint = [&](long iter) {
    const Scalar primal = problem.primal_value(state.primal());
    const Scalar dual = problem.dual_value(state.alpha);
    trace.push_back({iter, tau * static_cast<double>(iter) / n, seconds,
                     primal, dual, primal - dual});
    if (solver == ErmSolver::Sdna &&
        dual < last_dual - Scalar(1e-10) * std::max<Scalar>(1, std::abs(dual)))
      throw SolverError("dual objective decreased from " +
                        std::to_string(last_dual) + " to " +
                        std::to_string(dual) + " at iteration " +
                        std::to_string(iter) +
                        "; exact restricted ascent was violated");
    last_dual = dual;
    return primal - dual;
  };

  checkpoint(0);
  for (long k = 1; k <= iterations; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const Subset s = draw(spec, rng);
    if (solver == ErmSolver::Sdna)
      sdna_step(gram, state, s);
    else
      sdca_step(problem, state, s, v);
    seconds += std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - start)
                   .count();
    if (k % every == 0 || k == iterations) {
      if (checkpoint(k) <= options.epsilon && options.epsilon > 0) break;
    }
  }
  return trace;
}

}  // namespace sdna
