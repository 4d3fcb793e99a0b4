#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdna/errors.hpp"
#include "sdna/linalg.hpp"
#include "sdna/rng.hpp"
#include "sdna/types.hpp"

namespace sdna {

// Largest subset support enumerated exactly; beyond this, exact expectation
// operators refuse instead of silently degrading to sampling.
inline constexpr std::uint64_t kEnumerationCap = 1'000'000;

// C(n, k), capped at kEnumerationCap + 1 to avoid overflow.
inline std::uint64_t subset_count(Index n, Index k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t count = 1;
  for (Index i = 1; i <= k; ++i) {
    count = count * static_cast<std::uint64_t>(n - k + i) /
            static_cast<std::uint64_t>(i);
    if (count > kEnumerationCap) return kEnumerationCap + 1;
  }
  return count;
}

// Visits every k-subset of {0,...,n-1} in lexicographic order.
inline void visit_subsets(Index n, Index k,
                          const std::function<void(const Subset&)>& fn) {
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index{0});
  while (true) {
    fn(Subset(idx, n));
    Index j = k - 1;
    while (j >= 0 && idx[static_cast<std::size_t>(j)] == n - k + j) --j;
    if (j < 0) return;
    ++idx[static_cast<std::size_t>(j)];
    for (Index l = j + 1; l < k; ++l)
      idx[static_cast<std::size_t>(l)] = idx[static_cast<std::size_t>(l - 1)] + 1;
  }
}

// Inclusion probabilities p_i = Prob(i in S) and the expected cardinality.
struct SamplingStats {
  VectorX<double> p;
  double tau_expected = 0;
};

// A proper, nonvacuous distribution over nonempty subsets of {0,...,n-1}:
// either tau-nice (uniform over all subsets of cardinality tau; tau = 1 is
// the serial uniform sampling) or an explicit finite list of atoms.
class SamplingSpec {
 public:
  enum class Kind { TauNice, Explicit };

  static SamplingSpec tau_nice(Index n, Index tau) {
    if (n < 1) throw SamplingError("sampling dimension must be >= 1");
    if (tau < 1 || tau > n)
      throw SamplingError("tau-nice cardinality must lie in [1, n], got " +
                          std::to_string(tau));
    return SamplingSpec(Kind::TauNice, n, tau, {});
  }

  static SamplingSpec serial_uniform(Index n) { return tau_nice(n, 1); }

  static SamplingSpec explicit_atoms(
      Index n, std::vector<std::pair<Subset, double>> atoms) {
    if (n < 1) throw SamplingError("sampling dimension must be >= 1");
    if (atoms.empty()) throw SamplingError("explicit sampling needs atoms");
    double total = 0;
    VectorX<double> p = VectorX<double>::Zero(n);
    for (const auto& [set, prob] : atoms) {
      if (set.ambient() != n)
        throw SamplingError("atom ambient dimension mismatch");
      if (prob < 0) throw SamplingError("atom probability must be >= 0");
      total += prob;
      for (Index i : set) p(i) += prob;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw SamplingError("atom probabilities sum to " + std::to_string(total) +
                          ", expected 1");
    for (Index i = 0; i < n; ++i)
      if (!(p(i) > 0))
        throw SamplingError("sampling is not proper: coordinate " +
                            std::to_string(i) +
                            " has zero inclusion probability");
    return SamplingSpec(Kind::Explicit, n, 0, std::move(atoms));
  }

  Kind kind() const { return kind_; }
  Index dimension() const { return n_; }

  // tau-nice cardinality; only meaningful for Kind::TauNice.
  Index tau() const { return tau_; }

  const std::vector<std::pair<Subset, double>>& atoms() const { return atoms_; }

  // |S| is bounded by this almost surely.
  Index max_cardinality() const {
    if (kind_ == Kind::TauNice) return tau_;
    Index m = 0;
    for (const auto& [set, prob] : atoms_)
      if (prob > 0) m = std::max(m, set.size());
    return m;
  }

  double expected_cardinality() const {
    if (kind_ == Kind::TauNice) return static_cast<double>(tau_);
    double e = 0;
    for (const auto& [set, prob] : atoms_)
      e += prob * static_cast<double>(set.size());
    return e;
  }

  // All inclusion probabilities equal (the uniform samplings of the
  // composite and ERM theory).
  bool is_uniform(double tol = 1e-12) const {
    if (kind_ == Kind::TauNice) return true;
    const SamplingStats stats = stats_impl();
    const double p0 = stats.p(0);
    return ((stats.p.array() - p0).abs() <= tol).all();
  }

  std::uint64_t support_size() const {
    if (kind_ == Kind::TauNice) return subset_count(n_, tau_);
    return atoms_.size();
  }

  std::string describe() const {
    if (kind_ == Kind::TauNice)
      return "tau_nice(n=" + std::to_string(n_) + ", tau=" +
             std::to_string(tau_) + ")";
    return "explicit(n=" + std::to_string(n_) + ", atoms=" +
           std::to_string(atoms_.size()) + ")";
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    if (kind_ == Kind::TauNice) {
      j["kind"] = "tau_nice";
      j["n"] = n_;
      j["tau"] = tau_;
    } else {
      j["kind"] = "explicit";
      j["n"] = n_;
      nlohmann::json atoms = nlohmann::json::array();
      for (const auto& [set, prob] : atoms_)
        atoms.push_back({{"set", set.indices()}, {"prob", prob}});
      j["atoms"] = std::move(atoms);
    }
    return j;
  }

  static SamplingSpec from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const Index n = j.at("n").get<Index>();
    if (kind == "tau_nice") return tau_nice(n, j.at("tau").get<Index>());
    if (kind == "serial_uniform") return serial_uniform(n);
    if (kind == "explicit") {
      std::vector<std::pair<Subset, double>> atoms;
      for (const auto& a : j.at("atoms")) {
        atoms.emplace_back(Subset(a.at("set").get<std::vector<Index>>(), n),
                           a.at("prob").get<double>());
      }
      return explicit_atoms(n, std::move(atoms));
    }
    throw SamplingError("unknown sampling kind: " + kind);
  }

 private:
  SamplingSpec(Kind kind, Index n, Index tau,
               std::vector<std::pair<Subset, double>> atoms)
      : kind_(kind), n_(n), tau_(tau), atoms_(std::move(atoms)) {}

  SamplingStats stats_impl() const {
    SamplingStats stats;
    if (kind_ == Kind::TauNice) {
      stats.p = VectorX<double>::Constant(
          n_, static_cast<double>(tau_) / static_cast<double>(n_));
      stats.tau_expected = static_cast<double>(tau_);
    } else {
      stats.p = VectorX<double>::Zero(n_);
      for (const auto& [set, prob] : atoms_)
        for (Index i : set) stats.p(i) += prob;
      stats.tau_expected = expected_cardinality();
    }
    return stats;
  }

  friend SamplingStats probability_vector(const SamplingSpec&);

  Kind kind_;
  Index n_;
  Index tau_;
  std::vector<std::pair<Subset, double>> atoms_;
};

// Exact inclusion probabilities (closed form for tau-nice, atom sums for
// explicit samplings). Properness is already enforced at construction.
inline SamplingStats probability_vector(const SamplingSpec& spec) {
  return spec.stats_impl();
}

// One realization S ~ spec. tau-nice subsets are drawn with Floyd's
// algorithm, so a given (seed, call sequence) reproduces across platforms.
inline Subset draw(const SamplingSpec& spec, RngStream& rng) {
  if (spec.kind() == SamplingSpec::Kind::TauNice) {
    const Index n = spec.dimension();
    const Index tau = spec.tau();
    std::vector<Index> chosen;
    chosen.reserve(static_cast<std::size_t>(tau));
    for (Index j = n - tau; j < n; ++j) {
      const Index t =
          static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(j) + 1));
      if (std::find(chosen.begin(), chosen.end(), t) != chosen.end())
        chosen.push_back(j);
      else
        chosen.push_back(t);
    }
    std::sort(chosen.begin(), chosen.end());
    return Subset(std::move(chosen), n);
  }
  const double u = rng.next_unit();
  double cum = 0;
  const auto& atoms = spec.atoms();
  for (const auto& [set, prob] : atoms) {
    cum += prob;
    if (u < cum) return set;
  }
  return atoms.back().first;
}

// E[M_S]: tau-nice uses the closed form
//   (tau/n) * ((1 - (tau-1)/(n-1)) D(M) + (tau-1)/(n-1) M),
// explicit samplings sum their atoms.
template <typename Derived>
MatrixX<typename Derived::Scalar> expected_submatrix(
    const SamplingSpec& spec, const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Index n = spec.dimension();
  if (m.rows() != n || m.cols() != n)
    throw InvalidSubsetError("matrix dimension does not match sampling");
  if (spec.kind() == SamplingSpec::Kind::TauNice) {
    const Scalar tau = static_cast<Scalar>(spec.tau());
    const Scalar off =
        n > 1 ? (tau - 1) / static_cast<Scalar>(n - 1) : Scalar(0);
    const Scalar scale = tau / static_cast<Scalar>(n);
    MatrixX<Scalar> out = (scale * off) * m;
    out.diagonal() = (scale * (1 - off)) * m.diagonal() +
                     (scale * off) * m.diagonal();
    return out;
  }
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(n, n);
  for (const auto& [set, prob] : spec.atoms()) {
    if (prob == 0) continue;
    for (Index j : set)
      for (Index i : set) out(i, j) += static_cast<Scalar>(prob) * m(i, j);
  }
  return out;
}

// E[(M_S)^+] by exact enumeration of the support. Every atom's block must be
// positive definite; supports larger than kEnumerationCap are refused.
template <typename Derived>
MatrixX<typename Derived::Scalar> expected_pseudoinverse(
    const SamplingSpec& spec, const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Index n = spec.dimension();
  if (m.rows() != n || m.cols() != n)
    throw InvalidSubsetError("matrix dimension does not match sampling");
  MatrixX<Scalar> acc = MatrixX<Scalar>::Zero(n, n);
  const auto add_atom = [&](const Subset& s, Scalar weight) {
    const MatrixX<Scalar> block = gather_block(m, s);
    const auto ldlt = internal::factor_block(block, s);
    const MatrixX<Scalar> inv =
        ldlt.solve(MatrixX<Scalar>::Identity(s.size(), s.size()));
    for (Index j = 0; j < s.size(); ++j)
      for (Index i = 0; i < s.size(); ++i) acc(s[i], s[j]) += weight * inv(i, j);
  };
  if (spec.kind() == SamplingSpec::Kind::TauNice) {
    const std::uint64_t count = subset_count(n, spec.tau());
    if (count > kEnumerationCap)
      throw CapacityError(
          "support of " + spec.describe() + " exceeds " +
          std::to_string(kEnumerationCap) +
          " subsets; use the Monte Carlo estimator instead");
    const Scalar weight = Scalar(1) / static_cast<Scalar>(count);
    visit_subsets(n, spec.tau(),
                  [&](const Subset& s) { add_atom(s, weight); });
  } else {
    for (const auto& [set, prob] : spec.atoms())
      if (prob > 0) add_atom(set, static_cast<Scalar>(prob));
  }
  return acc;
}

// Empirical mean of (M_S)^+ over `samples` independent draws.
template <typename Scalar>
struct MonteCarloMatrix {
  MatrixX<Scalar> mean;
  std::uint64_t samples = 0;
};

template <typename Derived>
MonteCarloMatrix<typename Derived::Scalar> expected_pseudoinverse_monte_carlo(
    const SamplingSpec& spec, const Eigen::MatrixBase<Derived>& m,
    std::uint64_t samples, RngStream& rng) {
  using Scalar = typename Derived::Scalar;
  const Index n = spec.dimension();
  if (samples == 0) throw std::invalid_argument("need at least one sample");
  MatrixX<Scalar> acc = MatrixX<Scalar>::Zero(n, n);
  for (std::uint64_t k = 0; k < samples; ++k) {
    const Subset s = draw(spec, rng);
    const MatrixX<Scalar> block = gather_block(m, s);
    const auto ldlt = internal::factor_block(block, s);
    const MatrixX<Scalar> inv =
        ldlt.solve(MatrixX<Scalar>::Identity(s.size(), s.size()));
    for (Index j = 0; j < s.size(); ++j)
      for (Index i = 0; i < s.size(); ++i) acc(s[i], s[j]) += inv(i, j);
  }
  return {acc / static_cast<Scalar>(samples), samples};
}

// max_h { h' M h : h' D(M) h <= 1 }, i.e. the largest eigenvalue of the
// diagonally normalized matrix.
template <typename Derived>
typename Derived::Scalar diagonal_normalized_lambda_max(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if ((m.diagonal().array() <= Scalar(0)).any())
    throw FactorizationError("matrix diagonal must be positive");
  const VectorX<Scalar> dinv_sqrt = m.diagonal().cwiseSqrt().cwiseInverse();
  const MatrixX<Scalar> scaled =
      dinv_sqrt.asDiagonal() * m * dinv_sqrt.asDiagonal();
  return largest_eigenvalue(scaled);
}

enum class EsoStrategy {
  // v_i = min(tau_max, lambda'(M)) * M_ii: valid for any sampling with
  // |S| <= tau_max almost surely.
  Conservative,
  // v_i = beta * M_ii with the smallest beta in [1, tau_max] (to 1e-6
  // relative, by bisection) that makes D(p) D(v) - E[M_S] PSD.
  CertifiedScaling,
};

// true iff E[M_S] <= D(p) D(v) within tol.
template <typename Derived>
bool verify_eso(const SamplingSpec& spec, const Eigen::MatrixBase<Derived>& m,
                const VectorX<typename Derived::Scalar>& v,
                typename Derived::Scalar tol) {
  using Scalar = typename Derived::Scalar;
  const SamplingStats stats = probability_vector(spec);
  const MatrixX<Scalar> expected = expected_submatrix(spec, m);
  MatrixX<Scalar> diff = -expected;
  diff.diagonal() += stats.p.template cast<Scalar>().cwiseProduct(v);
  return is_psd(diff, tol);
}

template <typename Derived>
VectorX<typename Derived::Scalar> eso_vector(const SamplingSpec& spec,
                                             const Eigen::MatrixBase<Derived>& m,
                                             EsoStrategy strategy) {
  using Scalar = typename Derived::Scalar;
  if ((m.diagonal().array() <= Scalar(0)).any())
    throw FactorizationError("ESO vector requires a positive diagonal");
  const Scalar tau_max = static_cast<Scalar>(spec.max_cardinality());
  VectorX<Scalar> v;
  if (strategy == EsoStrategy::Conservative) {
    const Scalar factor =
        std::min(tau_max, diagonal_normalized_lambda_max(m));
    v = factor * m.diagonal();
  } else {
    // beta = tau_max always certifies; bisect down towards 1.
    const SamplingStats stats = probability_vector(spec);
    const MatrixX<Scalar> expected = expected_submatrix(spec, m);
    const VectorX<Scalar> pd =
        stats.p.template cast<Scalar>().cwiseProduct(m.diagonal());
    const Scalar psd_tol =
        Scalar(1e-14) * std::max<Scalar>(Scalar(1), expected.norm());
    const auto certifies = [&](Scalar beta) {
      MatrixX<Scalar> diff = -expected;
      diff.diagonal() += beta * pd;
      return is_psd(diff, psd_tol);
    };
    Scalar lo = 1, hi = tau_max;
    if (certifies(lo)) {
      hi = lo;
    } else {
      while (hi - lo > Scalar(1e-6) * hi) {
        const Scalar mid = (lo + hi) / 2;
        (certifies(mid) ? hi : lo) = mid;
      }
    }
    v = hi * m.diagonal();
  }
  if (!verify_eso(spec, m, v,
                  Scalar(1e-9) * std::max<Scalar>(Scalar(1), v.maxCoeff())))
    throw FactorizationError("computed ESO vector failed verification");
  return v;
}

}  // namespace sdna
