#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "sdna/types.hpp"

namespace sdna {

enum class LossKind { Quadratic, Logistic };

// Scalar loss family phi(t; label) together with its Fenchel conjugate
// phi*(u; label) and derivatives. The conjugate of a (1/gamma)-smooth loss is
// gamma-strongly convex, which is what every dual rate in this library leans
// on: gamma = 1 for the quadratic loss, gamma = 4 for the logistic loss.
template <typename Scalar>
struct LossFamily {
  LossKind kind = LossKind::Quadratic;

  static LossFamily quadratic() { return {LossKind::Quadratic}; }
  static LossFamily logistic() { return {LossKind::Logistic}; }

  Scalar gamma() const {
    return kind == LossKind::Quadratic ? Scalar(1) : Scalar(4);
  }

  // phi(t): (1/2)(t - b)^2, or log(1 + exp(-b t)) for labels b = +-1.
  Scalar value(Scalar t, Scalar label) const {
    if (kind == LossKind::Quadratic) {
      const Scalar r = t - label;
      return r * r / 2;
    }
    const Scalar z = -label * t;
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

  Scalar derivative(Scalar t, Scalar label) const {
    if (kind == LossKind::Quadratic) return t - label;
    const Scalar z = -label * t;
    return -label / (1 + std::exp(-z));
  }

  // Conjugate domain as an interval for u (outside it phi* = +infinity):
  // all of R for the quadratic loss, -label*u in [0,1] for the logistic.
  std::pair<Scalar, Scalar> conjugate_domain(Scalar label) const {
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    if (kind == LossKind::Quadratic) return {-inf, inf};
    return label > 0 ? std::pair<Scalar, Scalar>{-1, 0}
                     : std::pair<Scalar, Scalar>{0, 1};
  }

  // phi*(u): (1/2)u^2 + b u, or the binary entropy s ln s + (1-s) ln(1-s)
  // at s = -b u. Returns +infinity outside the domain.
  Scalar conjugate(Scalar u, Scalar label) const {
    if (kind == LossKind::Quadratic) return u * u / 2 + label * u;
    const Scalar s = -label * u;
    if (s < 0 || s > 1) return std::numeric_limits<Scalar>::infinity();
    const Scalar left = s > 0 ? s * std::log(s) : Scalar(0);
    const Scalar right = s < 1 ? (1 - s) * std::log1p(-s) : Scalar(0);
    return left + right;
  }

  // d/du phi*(u); for the logistic loss this diverges at the domain ends.
  Scalar conjugate_derivative(Scalar u, Scalar label) const {
    if (kind == LossKind::Quadratic) return u + label;
    const Scalar s = -label * u;
    return -label * (std::log(s) - std::log1p(-s));
  }

  Scalar conjugate_second_derivative(Scalar u, Scalar label) const {
    if (kind == LossKind::Quadratic) return Scalar(1);
    const Scalar s = -label * u;
    return 1 / s + 1 / (1 - s);
  }

  // Logistic labels must be +-1; quadratic targets are unrestricted.
  void validate_label(Scalar label) const {
    if (kind == LossKind::Logistic && label != Scalar(1) && label != Scalar(-1))
      throw std::invalid_argument("logistic loss needs labels in {-1, +1}");
  }
};

}  // namespace sdna
