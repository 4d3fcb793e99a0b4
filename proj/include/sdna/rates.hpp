#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include <json.hpp>

#include "sdna/linalg.hpp"
#include "sdna/sampling.hpp"
#include "sdna/types.hpp"

namespace sdna {

// Convergence-rate constants for one (problem, sampling) pair. sigma1/2/3
// drive the three smooth methods, sigma1_prox / sigma3_prox their proximal
// counterparts, theta the minibatch SDCA dual-ascent rate. `certified` is
// false when an expectation operator was estimated by Monte Carlo rather
// than enumerated exactly.
template <typename Scalar>
struct RateReport {
  std::optional<Scalar> sigma1;
  std::optional<Scalar> sigma2;
  std::optional<Scalar> sigma3;
  std::optional<Scalar> sigma1_prox;
  std::optional<Scalar> sigma3_prox;
  std::optional<Scalar> theta;
  std::string context;
  bool certified = true;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["context"] = context;
    j["certified"] = certified;
    const auto put = [&j](const char* key, const std::optional<Scalar>& val) {
      if (val) j[key] = *val;
    };
    put("sigma1", sigma1);
    put("sigma2", sigma2);
    put("sigma3", sigma3);
    put("sigma1_prox", sigma1_prox);
    put("sigma3_prox", sigma3_prox);
    put("theta", theta);
    return j;
  }
};

namespace internal {

template <typename Scalar>
void require_uniform(const SamplingSpec& spec, const char* what) {
  if (!spec.is_uniform())
    throw SamplingError(std::string(what) +
                        " is only defined for uniform samplings, got " +
                        spec.describe());
}

}  // namespace internal

// lambda_min(G^{1/2} E[(M_S)^+] G^{1/2}): the rate of the exact block Newton
// method.
template <typename Scalar>
Scalar sigma1(const MatrixX<Scalar>& m, const MatrixX<Scalar>& g,
              const SamplingSpec& spec) {
  const MatrixX<Scalar> gh = symmetric_sqrt(g);
  const MatrixX<Scalar> pinv = expected_pseudoinverse(spec, m);
  return smallest_eigenvalue(MatrixX<Scalar>(gh * pinv * gh));
}

// As sigma1 but with a Monte Carlo estimate of E[(M_S)^+]; not certified.
template <typename Scalar>
Scalar sigma1_monte_carlo(const MatrixX<Scalar>& m, const MatrixX<Scalar>& g,
                          const SamplingSpec& spec, std::uint64_t samples,
                          RngStream& rng) {
  const MatrixX<Scalar> gh = symmetric_sqrt(g);
  const auto est = expected_pseudoinverse_monte_carlo(spec, m, samples, rng);
  return smallest_eigenvalue(MatrixX<Scalar>(gh * est.mean * gh));
}

// lambda_min(G^{1/2} D(p) (E[M_S])^{-1} D(p) G^{1/2}).
template <typename Scalar>
Scalar sigma2(const MatrixX<Scalar>& m, const MatrixX<Scalar>& g,
              const SamplingSpec& spec) {
  const SamplingStats stats = probability_vector(spec);
  const VectorX<Scalar> p = stats.p.template cast<Scalar>();
  const MatrixX<Scalar> expected = expected_submatrix(spec, m);
  const auto ldlt =
      internal::factor_block(expected, Subset::full(expected.rows()));
  MatrixX<Scalar> mid =
      p.asDiagonal() * ldlt.solve(MatrixX<Scalar>(p.asDiagonal()));
  mid = ((mid + mid.transpose()) / 2).eval();
  const MatrixX<Scalar> gh = symmetric_sqrt(g);
  return smallest_eigenvalue(MatrixX<Scalar>(gh * mid * gh));
}

// lambda_min(G^{1/2} D(p) D(v^{-1}) G^{1/2}): the diagonal (NSync) rate.
template <typename Scalar, typename VDerived>
Scalar sigma3(const MatrixX<Scalar>& m, const MatrixX<Scalar>& g,
              const SamplingSpec& spec,
              const Eigen::MatrixBase<VDerived>& v_expr) {
  const VectorX<Scalar> v = v_expr;
  if (!verify_eso(spec, m, v,
                  Scalar(1e-9) * std::max<Scalar>(Scalar(1), v.maxCoeff())))
    throw FactorizationError("sigma3 requires an ESO-certified v");
  const SamplingStats stats = probability_vector(spec);
  const VectorX<Scalar> w =
      stats.p.template cast<Scalar>().cwiseQuotient(v);
  const MatrixX<Scalar> gh = symmetric_sqrt(g);
  return smallest_eigenvalue(
      MatrixX<Scalar>(gh * w.asDiagonal() * gh));
}

// (tau/n) min(1, s1) with
//   s1 = lambda_min[ ((n/tau) E[M_S] + D(gamma))^{-1} (D(gamma) + G) ],
// the rate of the proximal block Newton method under a uniform sampling.
// G = 0 is allowed as long as D(gamma) + G > 0.
template <typename Scalar, typename GammaDerived>
Scalar sigma1_prox(const MatrixX<Scalar>& m, const MatrixX<Scalar>& g,
                   const Eigen::MatrixBase<GammaDerived>& gamma,
                   const SamplingSpec& spec) {
  internal::require_uniform<Scalar>(spec, "sigma1_prox");
  const Scalar n = static_cast<Scalar>(spec.dimension());
  const Scalar tau = static_cast<Scalar>(spec.expected_cardinality());
  MatrixX<Scalar> x = (n / tau) * expected_submatrix(spec, m);
  x.diagonal() += gamma;
  MatrixX<Scalar> y = g;
  y.diagonal() += gamma;
  const Scalar s1 = smallest_generalized_eigenvalue(x, y);
  return (tau / n) * std::min<Scalar>(Scalar(1), s1);
}

// (tau/n) min(1, s3) with s3 = lambda_min[ D(v+gamma)^{-1} (D(gamma) + G) ],
// the PCDM rate under a uniform sampling.
template <typename Scalar, typename GammaDerived, typename VDerived>
Scalar sigma3_prox(const MatrixX<Scalar>& m, const MatrixX<Scalar>& g,
                   const Eigen::MatrixBase<GammaDerived>& gamma,
                   const Eigen::MatrixBase<VDerived>& v_expr,
                   const SamplingSpec& spec) {
  internal::require_uniform<Scalar>(spec, "sigma3_prox");
  const VectorX<Scalar> v = v_expr;
  if (!verify_eso(spec, m, v,
                  Scalar(1e-9) * std::max<Scalar>(Scalar(1), v.maxCoeff())))
    throw FactorizationError("sigma3_prox requires an ESO-certified v");
  const Scalar n = static_cast<Scalar>(spec.dimension());
  const Scalar tau = static_cast<Scalar>(spec.expected_cardinality());
  const VectorX<Scalar> denom = v + gamma;
  const VectorX<Scalar> dinv_sqrt = denom.cwiseSqrt().cwiseInverse();
  MatrixX<Scalar> y = g;
  y.diagonal() += gamma;
  const MatrixX<Scalar> scaled =
      dinv_sqrt.asDiagonal() * y * dinv_sqrt.asDiagonal();
  const Scalar s3 = smallest_eigenvalue(scaled);
  return (tau / n) * std::min<Scalar>(Scalar(1), s3);
}

// theta(S) = min_i p_i lambda gamma n / (v_i + lambda gamma n): the SDCA
// dual-ascent factor. v must majorize A'A in the ESO sense.
template <typename VDerived,
          typename Scalar = typename VDerived::Scalar>
Scalar theta(const SamplingSpec& spec, const Eigen::MatrixBase<VDerived>& v,
             Scalar lambda, Scalar gamma_loss) {
  if (!(lambda > 0) || !(gamma_loss > 0))
    throw std::invalid_argument("theta requires lambda > 0 and gamma > 0");
  const SamplingStats stats = probability_vector(spec);
  const Scalar lgn =
      lambda * gamma_loss * static_cast<Scalar>(spec.dimension());
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < v.size(); ++i) {
    best = std::min(best,
                    static_cast<Scalar>(stats.p(i)) * lgn / (v(i) + lgn));
  }
  return best;
}

// (tau/n) min(1, s1) with
//   s1 = lambda_min[ ((1/(tau gamma lambda)) E[(A'A)_S] + I)^{-1} ]:
// the SDNA rate on the ERM dual for a uniform sampling.
template <typename Scalar>
Scalar erm_sigma1_prox(const MatrixX<Scalar>& features, Scalar lambda,
                       Scalar gamma_loss, const SamplingSpec& spec) {
  internal::require_uniform<Scalar>(spec, "erm_sigma1_prox");
  const Scalar n = static_cast<Scalar>(spec.dimension());
  const Scalar tau = static_cast<Scalar>(spec.expected_cardinality());
  const MatrixX<Scalar> gram = features.transpose() * features;
  MatrixX<Scalar> inner =
      expected_submatrix(spec, gram) / (tau * gamma_loss * lambda);
  inner.diagonal().array() += Scalar(1);
  const Scalar s1 = Scalar(1) / largest_eigenvalue(inner);
  return (tau / n) * std::min<Scalar>(Scalar(1), s1);
}

// lambda_min[ E[ ((X + gamma I)_S)^{-1} (X + gamma I) ] ] with
// X = (1/(lambda n)) A'A: the sharpened SDNA rate for quadratic loss,
// equal to sigma1 evaluated at M = G = X + gamma I.
template <typename Scalar>
Scalar erm_sigma1_quadratic(const MatrixX<Scalar>& features, Scalar lambda,
                            Scalar gamma_loss, const SamplingSpec& spec) {
  const Scalar n = static_cast<Scalar>(spec.dimension());
  MatrixX<Scalar> m = (features.transpose() * features) / (lambda * n);
  m.diagonal().array() += gamma_loss;
  return sigma1(m, m, spec);
}

// The tau-nice identity linking the rates of the fixed-preconditioner and
// diagonal methods when G = M and v = beta diag(M):
//   sigma2 = beta sigma3 / ((1 - (tau-1)/(n-1)) + (n/tau)((tau-1)/(n-1)) beta sigma3).
template <typename Scalar>
Scalar tau_nice_sigma2_relation(Scalar beta, Scalar sigma3_value, Index n,
                                Index tau) {
  const Scalar alpha =
      n > 1 ? static_cast<Scalar>(tau - 1) / static_cast<Scalar>(n - 1)
            : Scalar(0);
  const Scalar ratio = static_cast<Scalar>(n) / static_cast<Scalar>(tau);
  return beta * sigma3_value /
         ((Scalar(1) - alpha) + ratio * alpha * beta * sigma3_value);
}

// Full report for a smooth/composite (M, G, sampling) context. gamma defaults
// to zero (plain convex separable terms).
template <typename Scalar, typename GammaDerived>
RateReport<Scalar> matrix_rate_report(
    const MatrixX<Scalar>& m, const MatrixX<Scalar>& g,
    const SamplingSpec& spec, const Eigen::MatrixBase<GammaDerived>& gamma) {
  RateReport<Scalar> report;
  report.context = "matrix n=" + std::to_string(m.rows()) + ", " +
                   spec.describe();
  const VectorX<Scalar> v =
      eso_vector(spec, m, EsoStrategy::CertifiedScaling);
  report.sigma1 = sigma1(m, g, spec);
  report.sigma2 = sigma2(m, g, spec);
  report.sigma3 = sigma3(m, g, spec, v);
  if (spec.is_uniform()) {
    report.sigma1_prox = sigma1_prox(m, g, gamma, spec);
    report.sigma3_prox = sigma3_prox(m, g, gamma, v, spec);
  }
  return report;
}

// Full report for a quadratic-loss ERM context (the theta / sigma1_prox /
// sigma1 chain). v is the ESO vector on A'A that the SDCA solver uses.
template <typename Scalar>
RateReport<Scalar> erm_rate_report(const MatrixX<Scalar>& features,
                                   Scalar lambda, Scalar gamma_loss,
                                   const SamplingSpec& spec) {
  RateReport<Scalar> report;
  report.context = "erm d=" + std::to_string(features.rows()) + ", n=" +
                   std::to_string(features.cols()) + ", " + spec.describe();
  const MatrixX<Scalar> gram = features.transpose() * features;
  const VectorX<Scalar> v =
      eso_vector(spec, gram, EsoStrategy::CertifiedScaling);
  report.theta = theta(spec, v, lambda, gamma_loss);
  report.sigma1_prox = erm_sigma1_prox(features, lambda, gamma_loss, spec);
  if (spec.support_size() <= kEnumerationCap)
    report.sigma1 = erm_sigma1_quadratic(features, lambda, gamma_loss, spec);
  return report;
}

}  // namespace sdna
