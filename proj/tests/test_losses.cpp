#include <doctest.h>

#include <cmath>
#include <limits>

#include "sdna/losses.hpp"
#include "sdna/rng.hpp"

using namespace sdna;

TEST_CASE("conjugate strong-convexity moduli") {
  CHECK(LossFamily<double>::quadratic().gamma() == 1.0);
  CHECK(LossFamily<double>::logistic().gamma() == 4.0);
}

TEST_CASE("quadratic loss closed forms") {
  const auto loss = LossFamily<double>::quadratic();
  CHECK(loss.value(3.0, 1.0) == doctest::Approx(2.0));
  CHECK(loss.derivative(3.0, 1.0) == doctest::Approx(2.0));
  CHECK(loss.conjugate(2.0, 1.0) == doctest::Approx(4.0));  // u^2/2 + b u
  CHECK(loss.conjugate(0.0, 5.0) == 0.0);
  CHECK(loss.conjugate_derivative(2.0, 1.0) == doctest::Approx(3.0));
}

TEST_CASE("logistic loss value is stable far from the margin") {
  const auto loss = LossFamily<double>::logistic();
  CHECK(loss.value(0.0, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(loss.value(40.0, 1.0) == doctest::Approx(std::exp(-40.0)));
  CHECK(loss.value(-40.0, 1.0) == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(std::isfinite(loss.value(700.0, -1.0)));
}

TEST_CASE("logistic conjugate domain and boundary values") {
  const auto loss = LossFamily<double>::logistic();
  CHECK(loss.conjugate(0.0, 1.0) == 0.0);
  CHECK(loss.conjugate(-1.0, 1.0) == 0.0);
  CHECK(loss.conjugate(-0.5, 1.0) == doctest::Approx(-std::log(2.0)));
  CHECK(loss.conjugate(0.5, 1.0) == std::numeric_limits<double>::infinity());
  CHECK(loss.conjugate(0.5, -1.0) == doctest::Approx(-std::log(2.0)));
  const auto [lo, hi] = loss.conjugate_domain(1.0);
  CHECK(lo == -1.0);
  CHECK(hi == 0.0);
}

TEST_CASE("loss derivatives match central differences") {
  RngStream rng(301);
  for (const auto loss :
       {LossFamily<double>::quadratic(), LossFamily<double>::logistic()}) {
    for (int rep = 0; rep < 200; ++rep) {
      const double label =
          loss.kind == LossKind::Quadratic ? rng.next_normal()
                                           : (rng.next_unit() < 0.5 ? 1 : -1);
      const double t = 3 * rng.next_normal();
      const double eps = 1e-6;
      const double fd =
          (loss.value(t + eps, label) - loss.value(t - eps, label)) / (2 * eps);
      CHECK(loss.derivative(t, label) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("fenchel-young holds with equality at u = phi'(t)") {
  RngStream rng(302);
  for (const auto loss :
       {LossFamily<double>::quadratic(), LossFamily<double>::logistic()}) {
    for (int rep = 0; rep < 10000; ++rep) {
      const double label =
          loss.kind == LossKind::Quadratic ? rng.next_normal()
                                           : (rng.next_unit() < 0.5 ? 1 : -1);
      const double t = 3 * rng.next_normal();
      const double u = loss.derivative(t, label);
      const double lhs = loss.value(t, label) + loss.conjugate(u, label);
      CHECK(std::abs(lhs - t * u) <= 1e-10);
    }
  }
}

TEST_CASE("fenchel-young inequality for mismatched pairs") {
  RngStream rng(303);
  for (const auto loss :
       {LossFamily<double>::quadratic(), LossFamily<double>::logistic()}) {
    for (int rep = 0; rep < 2000; ++rep) {
      const double label = loss.kind == LossKind::Quadratic
                               ? rng.next_normal()
                               : (rng.next_unit() < 0.5 ? 1 : -1);
      const double t = 2 * rng.next_normal();
      double u;
      if (loss.kind == LossKind::Quadratic) {
        u = 2 * rng.next_normal();
      } else {
        const auto [lo, hi] = loss.conjugate_domain(label);
        u = lo + (hi - lo) * rng.next_unit();
      }
      CHECK(loss.value(t, label) + loss.conjugate(u, label) >= t * u - 1e-12);
    }
  }
}

TEST_CASE("conjugate curvature is at least gamma") {
  RngStream rng(304);
  const auto logistic = LossFamily<double>::logistic();
  for (int rep = 0; rep < 1000; ++rep) {
    const double label = rng.next_unit() < 0.5 ? 1 : -1;
    const auto [lo, hi] = logistic.conjugate_domain(label);
    const double u = lo + (hi - lo) * (0.01 + 0.98 * rng.next_unit());
    CHECK(logistic.conjugate_second_derivative(u, label) >= 4.0 - 1e-12);
  }
  CHECK(LossFamily<double>::quadratic().conjugate_second_derivative(0.3, 2.0) ==
        1.0);
}

TEST_CASE("logistic labels are validated") {
  const auto logistic = LossFamily<double>::logistic();
  CHECK_THROWS_AS(logistic.validate_label(0.5), std::invalid_argument);
  CHECK_NOTHROW(logistic.validate_label(1.0));
  CHECK_NOTHROW(LossFamily<double>::quadratic().validate_label(0.37));
}
