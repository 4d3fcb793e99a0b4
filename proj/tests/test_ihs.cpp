#include <doctest.h>

#include <cmath>

#include "sdna/data_io.hpp"
#include "sdna/ihs.hpp"
#include "test_helpers.hpp"

using namespace sdna;

namespace {

ErmProblem<double> least_squares_instance(Index d, Index n, RngStream& rng,
                                          double lambda) {
  MatrixX<double> a(d, n);
  VectorX<double> b(n);
  for (Index j = 0; j < n; ++j) {
    a.col(j) = test::random_vector(d, rng);
    a.col(j).normalize();
    b(j) = rng.next_normal();
  }
  return {a, b, LossKind::Quadratic, lambda};
}

}  // namespace

TEST_CASE("zero targets give the zero optimum") {
  RngStream rng(601);
  MatrixX<double> a(3, 5);
  for (Index j = 0; j < 5; ++j) a.col(j) = test::random_vector(3, rng);
  const ErmProblem<double> p(a, VectorX<double>::Zero(5),
                             LossKind::Quadratic, 0.3);
  const auto opt = least_squares_optimum(p);
  CHECK(opt.alpha.norm() == 0.0);
  CHECK(opt.w.norm() == 0.0);
}

TEST_CASE("identity features with lambda = 1/n halve the targets") {
  const Index n = 4;
  RngStream rng(602);
  const VectorX<double> b = test::random_vector(n, rng);
  const ErmProblem<double> p(MatrixX<double>::Identity(n, n), b,
                             LossKind::Quadratic, 1.0 / n);
  const auto opt = least_squares_optimum(p);
  CHECK((opt.alpha - b / 2).norm() <= 1e-12);
  CHECK((opt.w - b / 2).norm() <= 1e-12);
}

TEST_CASE("dual-route optimum matches the primal normal equations") {
  RngStream rng(603);
  const auto p = least_squares_instance(5, 12, rng, 0.2);
  const auto opt = least_squares_optimum(p);
  const Index n = p.num_examples();
  const MatrixX<double>& a = p.features();
  // Primal route: ((1/n) A A' + lambda I) w = (1/n) A b.
  MatrixX<double> system = a * a.transpose() / static_cast<double>(n);
  system.diagonal().array() += p.lambda();
  const VectorX<double> w_primal =
      system.ldlt().solve(a * p.labels() / static_cast<double>(n));
  CHECK((opt.w - w_primal).norm() <= 1e-10);
  // The optimum pair also links through the maintained-average identity.
  CHECK((opt.w - a * opt.alpha / (p.lambda() * n)).norm() <= 1e-10);
}

TEST_CASE("full-subset sketched update lands on the optimum from any "
          "consistent pair") {
  RngStream rng(604);
  const auto p = least_squares_instance(4, 9, rng, 0.15);
  const auto opt = least_squares_optimum(p);
  for (int rep = 0; rep < 5; ++rep) {
    const VectorX<double> alpha = test::random_vector(9, rng);
    const VectorX<double> w = p.features() * alpha / (p.lambda() * 9);
    const VectorX<double> next = ihs_update(p, w, alpha, Subset::full(9));
    CHECK((next - opt.w).norm() <= 1e-10);
  }
}

TEST_CASE("dominant regularization shrinks the update to first order") {
  RngStream rng(605);
  const double lambda = 1e6;
  const auto p = least_squares_instance(3, 6, rng, lambda);
  const VectorX<double> alpha = test::random_vector(6, rng);
  const Subset s({1, 4}, 6);
  const VectorX<double> next =
      ihs_update(p, VectorX<double>::Zero(3), alpha, s);
  VectorX<double> first_order = VectorX<double>::Zero(3);
  for (Index i : s)
    first_order +=
        p.features().col(i) * ((p.labels()(i) - alpha(i)) / (lambda * 6));
  CHECK((next - first_order).norm() <= 1e-9 * first_order.norm() + 1e-12);
}

TEST_CASE("dual solver and sketched recursion coincide step by step") {
  RngStream data_rng(606);
  const auto p = least_squares_instance(16, 64, data_rng, 1.0 / 64);
  RngStream rng(607);
  const auto report =
      verify_ihs_equivalence(p, SamplingSpec::tau_nice(64, 4), 50, rng, 1e-8);
  CHECK(report.pass);
  CHECK(report.steps == 50);
  CHECK(report.max_discrepancy <= 1e-8);
  CHECK(report.first_fail_step == -1);
  const auto j = report.to_json();
  CHECK(j.at("pass").get<bool>());
  CHECK_FALSE(j.contains("first_fail_step"));
}

TEST_CASE("full-subset sampling converges in one step on both routes") {
  RngStream data_rng(608);
  const auto p = least_squares_instance(4, 10, data_rng, 0.1);
  RngStream rng(609);
  const auto report =
      verify_ihs_equivalence(p, SamplingSpec::tau_nice(10, 10), 3, rng, 1e-8);
  CHECK(report.pass);
  // After the first full step both paths sit at w*.
  const auto opt = least_squares_optimum(p);
  const GramCache<double> gram(p, GramPolicy::OnTheFly);
  DualState<double> state = make_dual_state(p);
  sdna_step(gram, state, Subset::full(10));
  CHECK((state.primal() - opt.w).norm() <= 1e-10);
}

TEST_CASE("an injected scaling fault is flagged at the first step") {
  RngStream data_rng(611);
  const auto p = least_squares_instance(5, 20, data_rng, 1.0 / 20);
  RngStream rng(612);
  const auto report = verify_ihs_equivalence(
      p, SamplingSpec::tau_nice(20, 4), 10, rng, 1e-8, 1.001);
  CHECK_FALSE(report.pass);
  CHECK(report.first_fail_step == 1);
  CHECK(report.to_json().at("first_fail_step").get<long>() == 1);
}

TEST_CASE("the sketched solve refuses feature dimensions beyond 512") {
  RngStream rng(614);
  const Index d = 513, n = 4;
  MatrixX<double> a = MatrixX<double>::Zero(d, n);
  for (Index j = 0; j < n; ++j) a(j, j) = 1.0;
  const ErmProblem<double> p(a, VectorX<double>::Ones(n),
                             LossKind::Quadratic, 0.5);
  CHECK_THROWS_AS((void)ihs_update(p, VectorX<double>::Zero(d),
                                   VectorX<double>::Zero(n), Subset::full(n)),
                  CapacityError);
}

TEST_CASE("least-squares routines reject other losses") {
  RngStream rng(613);
  MatrixX<double> a(2, 3);
  for (Index j = 0; j < 3; ++j) a.col(j) = test::random_vector(2, rng);
  VectorX<double> b(3);
  b << 1, -1, 1;
  const ErmProblem<double> logistic(a, b, LossKind::Logistic, 0.5);
  CHECK_THROWS_AS((void)least_squares_optimum(logistic),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)ihs_update(logistic, VectorX<double>::Zero(2), b,
                                   Subset::full(3)),
                  std::invalid_argument);
}
