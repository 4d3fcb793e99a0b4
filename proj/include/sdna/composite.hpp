#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdna/losses.hpp"
#include "sdna/scalar_root.hpp"
#include "sdna/smooth.hpp"

namespace sdna {

// Separable term sum_i psi_i(x_i) with closed, gamma_i-strongly convex
// coordinates. Three families: zero, per-coordinate quadratics
// psi_i(t) = (a_i/2) t^2 + b_i t, and scaled loss conjugates
// psi_i(t) = scale * phi_i*(-t) (the ERM dual's separable part).
template <typename Scalar>
class SeparableTerm {
 public:
  enum class Kind { Zero, Quadratic, ScaledConjugateLoss };

  static SeparableTerm zero(Index n) {
    SeparableTerm t;
    t.kind_ = Kind::Zero;
    t.gamma_ = VectorX<Scalar>::Zero(n);
    return t;
  }

  static SeparableTerm quadratic(VectorX<Scalar> a, VectorX<Scalar> b) {
    if (a.size() != b.size())
      throw std::invalid_argument("separable quadratic needs matching sizes");
    if ((a.array() < 0).any())
      throw std::invalid_argument("separable quadratic needs a_i >= 0");
    SeparableTerm t;
    t.kind_ = Kind::Quadratic;
    t.gamma_ = a;
    t.a_ = std::move(a);
    t.b_ = std::move(b);
    return t;
  }

  static SeparableTerm scaled_conjugate(LossFamily<Scalar> loss,
                                        VectorX<Scalar> labels, Scalar scale) {
    if (!(scale > 0))
      throw std::invalid_argument("conjugate scale must be positive");
    for (Index i = 0; i < labels.size(); ++i) loss.validate_label(labels(i));
    SeparableTerm t;
    t.kind_ = Kind::ScaledConjugateLoss;
    t.gamma_ = VectorX<Scalar>::Constant(labels.size(), scale * loss.gamma());
    t.loss_ = loss;
    t.labels_ = std::move(labels);
    t.scale_ = scale;
    return t;
  }

  Kind kind() const { return kind_; }
  Index dimension() const { return gamma_.size(); }
  const VectorX<Scalar>& gamma() const { return gamma_; }

  // Whether the proximal subproblems admit the closed-form linear solve.
  bool is_quadratic() const { return kind_ != Kind::ScaledConjugateLoss; }

  Scalar quad_a(Index i) const { return kind_ == Kind::Quadratic ? a_(i) : 0; }
  Scalar quad_b(Index i) const { return kind_ == Kind::Quadratic ? b_(i) : 0; }

  Scalar value(Index i, Scalar t) const {
    switch (kind_) {
      case Kind::Zero: return 0;
      case Kind::Quadratic: return a_(i) * t * t / 2 + b_(i) * t;
      case Kind::ScaledConjugateLoss:
        return scale_ * loss_.conjugate(-t, labels_(i));
    }
    return 0;
  }

  Scalar derivative(Index i, Scalar t) const {
    switch (kind_) {
      case Kind::Zero: return 0;
      case Kind::Quadratic: return a_(i) * t + b_(i);
      case Kind::ScaledConjugateLoss:
        return -scale_ * loss_.conjugate_derivative(-t, labels_(i));
    }
    return 0;
  }

  Scalar second_derivative(Index i, Scalar t) const {
    switch (kind_) {
      case Kind::Zero: return 0;
      case Kind::Quadratic: return a_(i);
      case Kind::ScaledConjugateLoss:
        return scale_ * loss_.conjugate_second_derivative(-t, labels_(i));
    }
    return 0;
  }

  // Interval on which psi_i is finite (open interior is where derivatives
  // are safe to evaluate).
  std::pair<Scalar, Scalar> domain(Index i) const {
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    if (kind_ != Kind::ScaledConjugateLoss) return {-inf, inf};
    const auto [ulo, uhi] = loss_.conjugate_domain(labels_(i));
    return {-uhi, -ulo};
  }

  Scalar total(const VectorX<Scalar>& x) const {
    Scalar sum = 0;
    for (Index i = 0; i < x.size(); ++i) sum += value(i, x(i));
    return sum;
  }

 private:
  Kind kind_ = Kind::Zero;
  VectorX<Scalar> gamma_;
  VectorX<Scalar> a_, b_;
  LossFamily<Scalar> loss_;
  VectorX<Scalar> labels_;
  Scalar scale_ = 0;
};

namespace internal {

// Scalar proximal subproblem: minimize g*h + (kappa/2) h^2 + psi_i(center+h).
// Strictly convex for kappa > 0; solved by the safeguarded Newton root-finder
// on the (strictly increasing) derivative.
template <typename Scalar>
Scalar scalar_prox(Scalar g, Scalar kappa, const SeparableTerm<Scalar>& psi,
                   Index i, Scalar center, Scalar tol) {
  const auto [dlo, dhi] = psi.domain(i);
  const auto d = [&](Scalar h) {
    return g + kappa * h + psi.derivative(i, center + h);
  };
  const auto dd = [&](Scalar h) {
    return kappa + psi.second_derivative(i, center + h);
  };
  return increasing_root<Scalar>(d, dd, dlo - center, dhi - center, Scalar(0),
                                 tol);
}

}  // namespace internal

// One step of the proximal block Newton method: solves
//   h = argmin <grad_S, h> + (1/2) h' M_S h + sum_{i in S} psi_i(x_i + h_i)
// and returns x + h. Quadratic psi gives a closed-form |S| x |S| solve;
// otherwise cyclic coordinate minimization runs until the subproblem
// gradient norm falls below 1e-10 (1 + |model value|).
template <typename Scalar, SmoothOracle<Scalar> Objective>
VectorX<Scalar> alg1_step(const Objective& f, const MatrixX<Scalar>& m,
                          const SeparableTerm<Scalar>& psi, const Subset& s,
                          const VectorX<Scalar>& x) {
  const Index k = s.size();
  VectorX<Scalar> g(k);
  for (Index j = 0; j < k; ++j) g(j) = f.gradient_coordinate(x, s[j]);
  MatrixX<Scalar> block = gather_block(m, s);

  VectorX<Scalar> h(k);
  if (psi.is_quadratic()) {
    VectorX<Scalar> rhs(k);
    for (Index j = 0; j < k; ++j) {
      const Index i = s[j];
      block(j, j) += psi.quad_a(i);
      rhs(j) = -(g(j) + psi.quad_a(i) * x(i) + psi.quad_b(i));
    }
    h = internal::factor_block(block, s).solve(rhs);
  } else {
    h.setZero();
    VectorX<Scalar> bh = VectorX<Scalar>::Zero(k);  // block * h
    const int max_sweeps = 100;
    bool converged = false;
    Scalar grad_norm = 0;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
      for (Index j = 0; j < k; ++j) {
        const Index i = s[j];
        // Partial derivative in coordinate j with the others frozen:
        // g_j + (Bh)_j - B_jj h_j + B_jj t + psi'(x_i + t).
        const Scalar offset = g(j) + bh(j) - block(j, j) * h(j);
        const Scalar old = h(j);
        h(j) = internal::scalar_prox(offset, block(j, j), psi, i, x(i),
                                     Scalar(1e-13));
        bh += block.col(j) * (h(j) - old);
      }
      // Model value and gradient for the stopping rule.
      Scalar model = g.dot(h) + h.dot(bh) / 2;
      grad_norm = 0;
      for (Index j = 0; j < k; ++j) {
        model += psi.value(s[j], x(s[j]) + h(j));
        const Scalar gj = g(j) + bh(j) + psi.derivative(s[j], x(s[j]) + h(j));
        grad_norm += gj * gj;
      }
      converged =
          std::sqrt(grad_norm) <= Scalar(1e-10) * (1 + std::abs(model));
    }
    if (!converged)
      throw SolverError(
          "inner coordinate solver stalled; subproblem gradient norm " +
          std::to_string(std::sqrt(grad_norm)) + " on subset " + s.to_string());
  }

  VectorX<Scalar> next = x;
  for (Index j = 0; j < k; ++j) next(s[j]) += h(j);
  return next;
}

// One PCDM step: independent scalar prox problems
//   h_i = argmin grad_i h + (v_i/2) h^2 + psi_i(x_i + h),   i in S.
template <typename Scalar, SmoothOracle<Scalar> Objective, typename VDerived>
VectorX<Scalar> pcdm_step(const Objective& f,
                          const Eigen::MatrixBase<VDerived>& v,
                          const SeparableTerm<Scalar>& psi, const Subset& s,
                          const VectorX<Scalar>& x) {
  VectorX<Scalar> next = x;
  for (Index i : s) {
    const Scalar g = f.gradient_coordinate(x, i);
    Scalar h;
    if (psi.is_quadratic()) {
      h = -(g + psi.quad_a(i) * x(i) + psi.quad_b(i)) / (v(i) + psi.quad_a(i));
    } else {
      h = internal::scalar_prox(g, v(i), psi, i, x(i), Scalar(1e-12));
    }
    next(i) += h;
  }
  return next;
}

enum class CompositeAlgorithm { ProximalBlockNewton, Pcdm };

template <typename Scalar>
struct CompositeRunOptions {
  long checkpoint_every = 1;
  Scalar epsilon = 0;
  std::optional<VectorX<Scalar>> eso;  // explicit v for PCDM
};

// Reference minimizer of F = f + sum psi: full-support proximal Newton
// iterated to a fixed point. Works uniformly across psi families.
template <typename Scalar>
VectorX<Scalar> composite_minimizer(const QuadraticObjective<Scalar>& f,
                                    const SeparableTerm<Scalar>& psi,
                                    VectorX<Scalar> x) {
  const Subset full = Subset::full(f.dimension());
  for (int it = 0; it < 10000; ++it) {
    const VectorX<Scalar> next = alg1_step(f, f.hessian(), psi, full, x);
    const Scalar step = (next - x).norm();
    x = next;
    if (step < Scalar(1e-13)) return x;
  }
  throw SolverError("composite reference solve did not reach a fixed point");
}

// Runs the chosen composite algorithm under a uniform sampling and traces
// F(x^k) - F(x*).
template <typename Scalar, typename X0Derived>
std::vector<TraceRecord<Scalar>> run_composite(
    CompositeAlgorithm algorithm, const QuadraticObjective<Scalar>& f,
    const SeparableTerm<Scalar>& psi, const SamplingSpec& spec,
    const Eigen::MatrixBase<X0Derived>& x0, long iterations, RngStream& rng,
    const CompositeRunOptions<Scalar>& options = {}) {
  if (!spec.is_uniform())
    throw SamplingError("composite solvers require a uniform sampling, got " +
                        spec.describe());
  if (x0.size() != f.dimension() || psi.dimension() != f.dimension())
    throw std::invalid_argument("run_composite dimension mismatch");

  VectorX<Scalar> v;
  if (algorithm == CompositeAlgorithm::Pcdm)
    v = options.eso ? *options.eso
                    : eso_vector(spec, f.hessian(),
                                 EsoStrategy::CertifiedScaling);

  VectorX<Scalar> x = x0;
  const VectorX<Scalar> xstar = composite_minimizer(f, psi, x);
  const Scalar fstar = f.value(xstar) + psi.total(xstar);
  const double epoch_scale =
      spec.expected_cardinality() / static_cast<double>(spec.dimension());
  const long every = std::max<long>(1, options.checkpoint_every);

  std::vector<TraceRecord<Scalar>> trace;
  double seconds = 0;
  const auto checkpoint = [&](long iter) {
    const Scalar objective = f.value(x) + psi.total(x);
    trace.push_back({iter, epoch_scale * static_cast<double>(iter), seconds,
                     objective, std::numeric_limits<Scalar>::quiet_NaN(),
                     objective - fstar});
    return objective - fstar;
  };

  checkpoint(0);
  for (long k = 1; k <= iterations; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const Subset s = draw(spec, rng);
    x = algorithm == CompositeAlgorithm::ProximalBlockNewton
            ? alg1_step(f, f.hessian(), psi, s, x)
            : pcdm_step(f, v, psi, s, x);
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
