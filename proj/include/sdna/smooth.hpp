#pragma once

#include <chrono>
#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include "sdna/linalg.hpp"
#include "sdna/sampling.hpp"
#include "sdna/trace.hpp"
#include "sdna/types.hpp"

namespace sdna {

// f(x) = (1/2) x' M x - c' x with M > 0. Gradient M x - c, minimizer solves
// M x* = c. Serves as both the smoothness and strong-convexity model
// (Assumptions hold with G = M).
template <typename Scalar>
class QuadraticObjective {
 public:
  QuadraticObjective(MatrixX<Scalar> hessian, VectorX<Scalar> linear)
      : hessian_(std::move(hessian)), linear_(std::move(linear)) {
    if (hessian_.rows() != hessian_.cols() ||
        hessian_.rows() != linear_.size())
      throw std::invalid_argument("quadratic objective dimension mismatch");
    if (!is_symmetric(hessian_, Scalar(0)))
      throw std::invalid_argument("quadratic objective needs a symmetric Hessian");
  }

  explicit QuadraticObjective(MatrixX<Scalar> hessian)
      : QuadraticObjective(std::move(hessian),
                           VectorX<Scalar>::Zero(hessian.rows())) {}

  Index dimension() const { return hessian_.rows(); }
  const MatrixX<Scalar>& hessian() const { return hessian_; }
  const VectorX<Scalar>& linear() const { return linear_; }

  Scalar value(const VectorX<Scalar>& x) const {
    return Scalar(0.5) * x.dot(hessian_ * x) - linear_.dot(x);
  }

  VectorX<Scalar> gradient(const VectorX<Scalar>& x) const {
    return hessian_ * x - linear_;
  }

  Scalar gradient_coordinate(const VectorX<Scalar>& x, Index i) const {
    return hessian_.row(i).dot(x) - linear_(i);
  }

  VectorX<Scalar> minimizer() const {
    const auto ldlt =
        internal::factor_block(hessian_, Subset::full(dimension()));
    return ldlt.solve(linear_);
  }

 private:
  MatrixX<Scalar> hessian_;
  VectorX<Scalar> linear_;
};

// What the subset steps need from an objective. Block-restricted steps only
// ever query the sampled coordinates of the gradient.
template <typename F, typename Scalar>
concept SmoothOracle = requires(const F f, const VectorX<Scalar>& x, Index i) {
  { f.dimension() } -> std::convertible_to<Index>;
  { f.value(x) } -> std::convertible_to<Scalar>;
  { f.gradient(x) } -> std::convertible_to<VectorX<Scalar>>;
  { f.gradient_coordinate(x, i) } -> std::convertible_to<Scalar>;
};

// x + h with h = -(M_S)^+ grad(x): exact minimization of the smoothness
// model over the sampled block. Reads only the S-coordinates of the gradient.
template <typename Scalar, SmoothOracle<Scalar> Objective>
VectorX<Scalar> method1_step(const Objective& f, const MatrixX<Scalar>& m,
                             const Subset& s, const VectorX<Scalar>& x) {
  VectorX<Scalar> g = VectorX<Scalar>::Zero(x.size());
  for (Index i : s) g(i) = f.gradient_coordinate(x, i);
  return x - restricted_solve(m, s, g);
}

// The fixed matrix (E[M_S])^{-1} D(p), inverted once at setup.
template <typename Scalar>
struct FixedPreconditioner {
  MatrixX<Scalar> matrix;
};

template <typename Scalar>
FixedPreconditioner<Scalar> make_fixed_preconditioner(
    const SamplingSpec& spec, const MatrixX<Scalar>& m) {
  if (m.rows() > 4096)
    throw CapacityError("fixed preconditioner setup inverts an n x n matrix; "
                        "n = " + std::to_string(m.rows()) + " exceeds 4096");
  const MatrixX<Scalar> expected = expected_submatrix(spec, m);
  const auto ldlt =
      internal::factor_block(expected, Subset::full(expected.rows()));
  const VectorX<Scalar> p =
      probability_vector(spec).p.template cast<Scalar>();
  return {ldlt.solve(MatrixX<Scalar>(p.asDiagonal()))};
}

// x restricted-updated by the precomputed direction -(E[M_S])^{-1} D(p) grad.
template <typename Scalar, SmoothOracle<Scalar> Objective>
VectorX<Scalar> method2_step(const Objective& f,
                             const FixedPreconditioner<Scalar>& pre,
                             const Subset& s, const VectorX<Scalar>& x) {
  const VectorX<Scalar> direction = pre.matrix * f.gradient(x);
  VectorX<Scalar> next = x;
  for (Index i : s) next(i) -= direction(i);
  return next;
}

// Coordinate-wise h_i = -grad_i / v_i on the sampled set (diagonal curvature
// only). Reads only the S-coordinates of the gradient.
template <typename Scalar, SmoothOracle<Scalar> Objective>
VectorX<Scalar> method3_step(const Objective& f, const VectorX<Scalar>& v,
                             const Subset& s, const VectorX<Scalar>& x) {
  VectorX<Scalar> next = x;
  for (Index i : s) next(i) -= f.gradient_coordinate(x, i) / v(i);
  return next;
}

enum class SmoothMethod {
  BlockNewton = 1,        // exact subspace Newton on the sampled block
  FixedPreconditioner = 2,
  Diagonal = 3,           // ESO-scaled coordinate steps
};

template <typename Scalar>
struct SmoothRunOptions {
  long checkpoint_every = 1;
  // Stop early once f - f* falls to epsilon (0 disables).
  Scalar epsilon = 0;
  // Explicit ESO vector for the diagonal method; certified scaling by default.
  std::optional<VectorX<Scalar>> eso;
};

// Runs `iterations` subset steps of the chosen method and reports the exact
// residual f(x^k) - f(x*) at checkpoints (x* from one dense solve). Aborts
// with a diagnostic if the residual ever grows a million-fold, which points
// at an invalid ESO vector or an indefinite Hessian.
template <typename Scalar, typename X0Derived>
std::vector<TraceRecord<Scalar>> run_smooth(
    SmoothMethod method, const QuadraticObjective<Scalar>& f,
    const SamplingSpec& spec, const Eigen::MatrixBase<X0Derived>& x0,
    long iterations, RngStream& rng,
    const SmoothRunOptions<Scalar>& options = {}) {
  if (x0.size() != f.dimension() || spec.dimension() != f.dimension())
    throw std::invalid_argument("run_smooth dimension mismatch");
  const Scalar fstar = f.value(f.minimizer());

  FixedPreconditioner<Scalar> pre;
  VectorX<Scalar> v;
  if (method == SmoothMethod::FixedPreconditioner)
    pre = make_fixed_preconditioner(spec, f.hessian());
  if (method == SmoothMethod::Diagonal)
    v = options.eso ? *options.eso
                    : eso_vector(spec, f.hessian(),
                                 EsoStrategy::CertifiedScaling);

  const double epoch_scale =
      spec.expected_cardinality() / static_cast<double>(spec.dimension());
  const long every = std::max<long>(1, options.checkpoint_every);

  std::vector<TraceRecord<Scalar>> trace;
  VectorX<Scalar> x = x0;
  const Scalar initial_residual = f.value(x) - fstar;
  double seconds = 0;

  const Scalar divergence_floor =
      initial_residual + Scalar(1e-12) * (Scalar(1) + std::abs(fstar));
  const auto checkpoint = [&](long iter) {
    const Scalar objective = f.value(x);
    const Scalar residual = objective - fstar;
    trace.push_back({iter, epoch_scale * static_cast<double>(iter), seconds,
                     objective, std::numeric_limits<Scalar>::quiet_NaN(),
                     residual});
    if (residual > Scalar(1e6) * divergence_floor)
      throw SolverError(
          "residual grew a million-fold by iteration " + std::to_string(iter) +
          "; the ESO vector or the curvature model is invalid");
    return residual;
  };

  checkpoint(0);
  for (long k = 1; k <= iterations; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const Subset s = draw(spec, rng);
    switch (method) {
      case SmoothMethod::BlockNewton:
        x = method1_step(f, f.hessian(), s, x);
        break;
      case SmoothMethod::FixedPreconditioner:
        x = method2_step(f, pre, s, x);
        break;
      case SmoothMethod::Diagonal:
        x = method3_step(f, v, s, x);
        break;
    }
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
