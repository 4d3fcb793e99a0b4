#include <doctest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sdna/sampling.hpp"
#include "test_helpers.hpp"

using namespace sdna;

TEST_CASE("tau = n sampling always draws the full subset") {
  const SamplingSpec spec = SamplingSpec::tau_nice(3, 3);
  RngStream rng(1);
  for (int i = 0; i < 100; ++i) CHECK(draw(spec, rng) == Subset::full(3));
}

TEST_CASE("2-nice on three coordinates hits each pair a third of the time") {
  const SamplingSpec spec = SamplingSpec::tau_nice(3, 2);
  RngStream rng(2);
  std::map<std::string, int> counts;
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++counts[draw(spec, rng).to_string()];
  CHECK(counts.size() == 3);
  for (const auto& [key, count] : counts)
    CHECK(std::abs(count / static_cast<double>(draws) - 1.0 / 3) < 0.01);
}

TEST_CASE("explicit atom frequencies match their probabilities") {
  const SamplingSpec spec = SamplingSpec::explicit_atoms(
      2, {{Subset({0}, 2), 0.7}, {Subset({1}, 2), 0.3}});
  RngStream rng(3);
  const int draws = 100000;
  int first = 0;
  for (int i = 0; i < draws; ++i)
    if (draw(spec, rng).contains(0)) ++first;
  const double freq = first / static_cast<double>(draws);
  CHECK(std::abs(freq - 0.7) < 0.01);
  // Pearson chi-square with one degree of freedom, 99.9% quantile.
  const double e0 = 0.7 * draws, e1 = 0.3 * draws;
  const double chi2 = (first - e0) * (first - e0) / e0 +
                      (draws - first - e1) * (draws - first - e1) / e1;
  CHECK(chi2 < 10.83);
}

TEST_CASE("tau-nice draws are uniform over all subsets of size tau") {
  const SamplingSpec spec = SamplingSpec::tau_nice(5, 3);
  RngStream rng(4);
  std::map<std::string, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[draw(spec, rng).to_string()];
  CHECK(counts.size() == subset_count(5, 3));
  const double expected = draws / 10.0;
  double chi2 = 0;
  for (const auto& [key, count] : counts)
    chi2 += (count - expected) * (count - expected) / expected;
  CHECK(chi2 < 27.88);  // chi-square df=9, 99.9% quantile
}

TEST_CASE("probability vectors") {
  const SamplingStats nice = probability_vector(SamplingSpec::tau_nice(3, 2));
  CHECK(nice.p.size() == 3);
  for (Index i = 0; i < 3; ++i)
    CHECK(nice.p(i) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(nice.tau_expected == doctest::Approx(2.0));

  const SamplingStats serial =
      probability_vector(SamplingSpec::serial_uniform(4));
  for (Index i = 0; i < 4; ++i)
    CHECK(serial.p(i) == doctest::Approx(0.25).epsilon(1e-15));

  const SamplingStats explicit_stats =
      probability_vector(SamplingSpec::explicit_atoms(
          3, {{Subset({0, 1}, 3), 0.5}, {Subset({1, 2}, 3), 0.5}}));
  CHECK(explicit_stats.p(0) == doctest::Approx(0.5));
  CHECK(explicit_stats.p(1) == doctest::Approx(1.0));
  CHECK(explicit_stats.p(2) == doctest::Approx(0.5));
  CHECK(explicit_stats.tau_expected == doctest::Approx(2.0));
}

TEST_CASE("improper or inconsistent explicit samplings are rejected") {
  CHECK_THROWS_AS(SamplingSpec::explicit_atoms(
                      3, {{Subset({0, 1}, 3), 1.0}}),  // index 2 never drawn
                  SamplingError);
  CHECK_THROWS_AS(SamplingSpec::explicit_atoms(
                      2, {{Subset({0}, 2), 0.6}, {Subset({1}, 2), 0.3}}),
                  SamplingError);
  CHECK_THROWS_AS(SamplingSpec::tau_nice(3, 4), SamplingError);
  CHECK_THROWS_AS(SamplingSpec::tau_nice(3, 0), SamplingError);
}

TEST_CASE("draw marginals follow the probability vector") {
  RngStream instance_rng(5);
  const std::vector<SamplingSpec> specs = {
      SamplingSpec::tau_nice(6, 2),
      SamplingSpec::explicit_atoms(4, {{Subset({0, 1, 2}, 4), 0.25},
                                       {Subset({3}, 4), 0.5},
                                       {Subset({1, 3}, 4), 0.25}})};
  const int draws = 100000;
  for (const auto& spec : specs) {
    const SamplingStats stats = probability_vector(spec);
    VectorX<double> hits = VectorX<double>::Zero(spec.dimension());
    RngStream rng = instance_rng.split(spec.dimension());
    for (int k = 0; k < draws; ++k)
      for (Index i : draw(spec, rng)) hits(i) += 1;
    for (Index i = 0; i < spec.dimension(); ++i) {
      const double p = stats.p(i);
      const double band = 4 * std::sqrt(p * (1 - p) / draws);
      CHECK(std::abs(hits(i) / draws - p) <= band + 1e-12);
    }
  }
}

TEST_CASE("expected submatrix: full subset returns the matrix itself") {
  RngStream rng(6);
  const MatrixX<double> m = test::random_spd(4, rng);
  CHECK((expected_submatrix(SamplingSpec::tau_nice(4, 4), m) - m).norm() <=
        1e-14 * m.norm());
}

TEST_CASE("expected submatrix: serial sampling keeps only the diagonal") {
  RngStream rng(7);
  const MatrixX<double> m = test::random_spd(4, rng);
  const MatrixX<double> e =
      expected_submatrix(SamplingSpec::serial_uniform(4), m);
  const MatrixX<double> oracle = (m.diagonal() / 4.0).asDiagonal();
  CHECK((e - oracle).norm() <= 1e-15);
}

TEST_CASE("closed-form tau-nice expectation equals subset enumeration") {
  RngStream rng(8);
  for (Index n : {2, 3, 5, 6}) {
    const MatrixX<double> m = test::random_spd(n, rng);
    for (Index tau = 1; tau <= n; ++tau) {
      const SamplingSpec spec = SamplingSpec::tau_nice(n, tau);
      MatrixX<double> brute = MatrixX<double>::Zero(n, n);
      const double weight = 1.0 / static_cast<double>(subset_count(n, tau));
      visit_subsets(n, tau, [&](const Subset& s) {
        brute += weight * principal_submatrix(m, s);
      });
      CHECK((expected_submatrix(spec, m) - brute).norm() <= 1e-12);
    }
  }
}

TEST_CASE("probability vector equals the diagonal of E[I_S]") {
  const SamplingSpec spec = SamplingSpec::explicit_atoms(
      4, {{Subset({0, 1, 2}, 4), 0.25},
          {Subset({3}, 4), 0.5},
          {Subset({1, 3}, 4), 0.25}});
  const MatrixX<double> e =
      expected_submatrix(spec, MatrixX<double>::Identity(4, 4));
  const SamplingStats stats = probability_vector(spec);
  CHECK((e.diagonal() - stats.p).norm() <= 1e-15);
}

TEST_CASE("expected pseudoinverse of the identity is D(p)") {
  const SamplingSpec spec = SamplingSpec::tau_nice(5, 2);
  const MatrixX<double> e =
      expected_pseudoinverse(spec, MatrixX<double>::Identity(5, 5));
  const SamplingStats stats = probability_vector(spec);
  CHECK((e - MatrixX<double>(stats.p.asDiagonal())).norm() <= 1e-12);
}

TEST_CASE("expected pseudoinverse of the correlated example") {
  const MatrixX<double> m = test::correlated3();
  const MatrixX<double> e =
      expected_pseudoinverse(SamplingSpec::tau_nice(3, 2), m);
  MatrixX<double> printed(3, 3);
  printed << 1683.50, -16.58, -1666.58,
             -16.58, 33.50, -16.58,
             -1666.58, -16.58, 1683.50;
  CHECK((e - printed).cwiseAbs().maxCoeff() <= 0.01);
}

TEST_CASE("fixed-preconditioner matrix of the correlated example") {
  const MatrixX<double> m = test::correlated3();
  const SamplingSpec spec = SamplingSpec::tau_nice(3, 2);
  const SamplingStats stats = probability_vector(spec);
  const MatrixX<double> expected = expected_submatrix(spec, m);
  const MatrixX<double> mid =
      stats.p.asDiagonal() *
      expected.ldlt().solve(MatrixX<double>(stats.p.asDiagonal()));
  MatrixX<double> printed(3, 3);
  printed << 0.9967, -0.3268, -0.3365,
             -0.3268, 0.9902, -0.3268,
             -0.3365, -0.3268, 0.9967;
  CHECK((mid - printed).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("monte carlo pseudoinverse approaches exact enumeration") {
  RngStream rng(9);
  const MatrixX<double> m = test::random_spd(5, rng);
  const SamplingSpec spec = SamplingSpec::tau_nice(5, 2);
  const MatrixX<double> exact = expected_pseudoinverse(spec, m);
  RngStream mc_rng(10);
  const auto estimate =
      expected_pseudoinverse_monte_carlo(spec, m, 1000000, mc_rng);
  CHECK(estimate.samples == 1000000);
  CHECK((estimate.mean - exact).norm() <= 0.01 * exact.norm());
}

TEST_CASE("exact pseudoinverse refuses oversized supports") {
  const MatrixX<double> m = MatrixX<double>::Identity(50, 50);
  try {
    expected_pseudoinverse(SamplingSpec::tau_nice(50, 25), m);
    FAIL("expected CapacityError");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("Monte Carlo") != std::string::npos);
  }
}

TEST_CASE("positive definiteness of E[M_S] for proper samplings") {
  RngStream rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 2 + static_cast<Index>(rng.next_below(5));
    const MatrixX<double> m = test::random_spd(n, rng);
    const Index tau = 1 + static_cast<Index>(rng.next_below(n));
    CHECK(smallest_eigenvalue(
              expected_submatrix(SamplingSpec::tau_nice(n, tau), m)) > 0);
  }
  // An explicit proper sampling with overlapping atoms.
  const SamplingSpec spec = SamplingSpec::explicit_atoms(
      3, {{Subset({0, 1}, 3), 0.4}, {Subset({1, 2}, 3), 0.4},
          {Subset({0, 2}, 3), 0.2}});
  const MatrixX<double> m = test::correlated3();
  CHECK(smallest_eigenvalue(expected_submatrix(spec, m)) > 0);
}

TEST_CASE("expected pseudoinverse dominates D(p) E[M_S]^{-1} D(p)") {
  RngStream rng(12);
  for (int rep = 0; rep < 25; ++rep) {
    const Index n = 2 + static_cast<Index>(rng.next_below(7));
    const MatrixX<double> m = test::random_spd(n, rng);
    const Index tau = 1 + static_cast<Index>(rng.next_below(n));
    const SamplingSpec spec = SamplingSpec::tau_nice(n, tau);
    const MatrixX<double> pinv = expected_pseudoinverse(spec, m);
    const SamplingStats stats = probability_vector(spec);
    const MatrixX<double> mid =
        stats.p.asDiagonal() *
        expected_submatrix(spec, m).ldlt().solve(
            MatrixX<double>(stats.p.asDiagonal()));
    CHECK(smallest_eigenvalue(MatrixX<double>(pinv - mid)) >= -1e-9);
  }
}

TEST_CASE("certified scaling on the correlated example lands near two") {
  const MatrixX<double> m = test::correlated3();
  const SamplingSpec spec = SamplingSpec::tau_nice(3, 2);
  const VectorX<double> v =
      eso_vector(spec, m, EsoStrategy::CertifiedScaling);
  for (Index i = 0; i < 3; ++i) CHECK(v(i) == doctest::Approx(2.0).epsilon(0.01));
  CHECK(verify_eso(spec, m, v, 1e-9));
}

TEST_CASE("identity matrix certifies with v = 1 under any uniform sampling") {
  const MatrixX<double> m = MatrixX<double>::Identity(6, 6);
  for (Index tau : {1, 3, 6}) {
    const SamplingSpec spec = SamplingSpec::tau_nice(6, tau);
    const VectorX<double> v =
        eso_vector(spec, m, EsoStrategy::CertifiedScaling);
    CHECK((v - VectorX<double>::Ones(6)).norm() <= 1e-9);
    CHECK(verify_eso(spec, m, VectorX<double>::Ones(6), 1e-12));
  }
}

TEST_CASE("conservative ESO dominates certified scaling entrywise") {
  RngStream rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 3 + static_cast<Index>(rng.next_below(5));
    const MatrixX<double> m = test::random_spd(n, rng);
    const Index tau = 1 + static_cast<Index>(rng.next_below(n));
    const SamplingSpec spec = SamplingSpec::tau_nice(n, tau);
    const VectorX<double> certified =
        eso_vector(spec, m, EsoStrategy::CertifiedScaling);
    const VectorX<double> conservative =
        eso_vector(spec, m, EsoStrategy::Conservative);
    // Domination holds up to the bisection's 1e-6 relative stopping slack
    // (the two coincide exactly when tau = n).
    CHECK((conservative - certified).minCoeff() >=
          -2e-6 * conservative.maxCoeff());
    CHECK(verify_eso(spec, m, conservative, 1e-9));
    CHECK(verify_eso(spec, m, certified, 1e-9));
  }
}

TEST_CASE("verify_eso rejects an undersized vector") {
  const MatrixX<double> m = test::correlated3();
  const SamplingSpec spec = SamplingSpec::tau_nice(3, 2);
  CHECK(verify_eso(spec, m, VectorX<double>::Constant(3, 2.0), 1e-12));
  CHECK_FALSE(verify_eso(spec, m, VectorX<double>::Constant(3, 0.1), 1e-12));
}

TEST_CASE("eso_vector requires a positive diagonal") {
  MatrixX<double> m = MatrixX<double>::Identity(3, 3);
  m(1, 1) = 0.0;
  CHECK_THROWS_AS(eso_vector(SamplingSpec::tau_nice(3, 2), m,
                             EsoStrategy::CertifiedScaling),
                  FactorizationError);
}

TEST_CASE("sampling specs round-trip through JSON") {
  const SamplingSpec nice = SamplingSpec::tau_nice(7, 3);
  const SamplingSpec nice2 = SamplingSpec::from_json(nice.to_json());
  CHECK(nice2.kind() == SamplingSpec::Kind::TauNice);
  CHECK(nice2.dimension() == 7);
  CHECK(nice2.tau() == 3);

  const SamplingSpec expl = SamplingSpec::explicit_atoms(
      3, {{Subset({0, 1}, 3), 0.5}, {Subset({1, 2}, 3), 0.5}});
  const SamplingSpec expl2 = SamplingSpec::from_json(expl.to_json());
  CHECK(expl2.kind() == SamplingSpec::Kind::Explicit);
  CHECK(expl2.atoms().size() == 2);
  CHECK(expl2.atoms()[0].first == Subset({0, 1}, 3));
  CHECK(expl2.atoms()[0].second == doctest::Approx(0.5));
  CHECK(probability_vector(expl2).p(1) == doctest::Approx(1.0));
}

TEST_CASE("draws are deterministic given the seed") {
  const SamplingSpec spec = SamplingSpec::tau_nice(10, 4);
  RngStream a(77), b(77);
  for (int i = 0; i < 200; ++i) CHECK(draw(spec, a) == draw(spec, b));
}
