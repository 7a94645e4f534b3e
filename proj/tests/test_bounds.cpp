#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ot/bounds.hpp"
#include "ot/brenier.hpp"
#include "ot/measures.hpp"
#include "ot/rng.hpp"
#include "ot/transport.hpp"

using namespace ot;

namespace {

Matrix col(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double v : xs) m(i++, 0) = v;
  return m;
}

PointCloudMeasure uniform_cloud(const Matrix& pts) {
  return make_measure(pts,
                      Vector::Constant(pts.rows(), 1.0 / double(pts.rows())));
}

Matrix random_points(Rng& rng, Index n, Index d, double radius = 1.0) {
  Matrix pts(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) pts(i, k) = rng.uniform(-radius, radius);
  return pts;
}

Vector random_weights(Rng& rng, Index n) {
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = 0.05 + rng.uniform();
  return w / w.sum();
}

// max(|x| - 1/2): atoms ±1 with zero offsets.
BrenierPotential abs_potential() {
  return from_dual(col({-1.0, 1.0}), Vector::Zero(2));
}

}  // namespace

TEST_CASE("wasserstein closed forms") {
  Rng rng(1313, 0);
  SUBCASE("identical measures vanish") {
    const auto mu = make_measure(random_points(rng, 12, 2, 1.0),
                                 random_weights(rng, 12));
    CHECK(wasserstein(mu, mu, 1) <= 1e-10);
    CHECK(wasserstein(mu, mu, 2) <= 1e-7);  // sqrt amplifies roundoff
  }
  SUBCASE("point masses give the displacement norm") {
    Matrix x(1, 3), y(1, 3);
    x << 0.0, 0.0, 0.0;
    y << 1.0, 2.0, 2.0;
    const auto mu = uniform_cloud(x);
    const auto nu = uniform_cloud(y);
    CHECK(wasserstein(mu, nu, 1) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(wasserstein(mu, nu, 2) == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("interleaved pairs move by one") {
    const auto mu = uniform_cloud(col({0.0, 2.0}));
    const auto nu = uniform_cloud(col({1.0, 3.0}));
    CHECK(wasserstein(mu, nu, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wasserstein(mu, nu, 2) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("order must be 1 or 2") {
    const auto mu = uniform_cloud(col({0.0}));
    CHECK_THROWS_AS(wasserstein(mu, mu, 3), std::invalid_argument);
  }
}

TEST_CASE("wasserstein triangle inequality") {
  Rng rng(1414, 0);
  for (int t = 0; t < 12; ++t) {
    const Index d = 1 + Index(rng.next32() % 2);
    const Index n = 5 + Index(rng.next32() % 30);
    const auto m1 =
        make_measure(random_points(rng, n, d, 1.0), random_weights(rng, n));
    const auto m2 = make_measure(random_points(rng, n + 3, d, 1.0),
                                 random_weights(rng, n + 3));
    const auto m3 = make_measure(random_points(rng, n + 7, d, 1.0),
                                 random_weights(rng, n + 7));
    for (int order : {1, 2}) {
      const double d13 = wasserstein(m1, m3, order);
      const double d12 = wasserstein(m1, m2, order);
      const double d23 = wasserstein(m2, m3, order);
      CHECK(d13 <= d12 + d23 + 1e-9);
    }
  }
}

TEST_CASE("coupling measures from transport plans") {
  Rng rng(1515, 0);
  const auto mu =
      make_measure(random_points(rng, 14, 2, 1.0), random_weights(rng, 14));
  const auto nu =
      make_measure(random_points(rng, 9, 2, 1.0), random_weights(rng, 9));
  const OtSolution sol = solve(mu, nu);
  const CouplingMeasure gamma = coupling_from(sol.plan, mu, nu);

  CHECK(gamma.pair_dim() == 4);
  CHECK(std::abs(gamma.masses.sum() - 1.0) <= 1e-10);
  CHECK(gamma.masses.minCoeff() > 0.0);
  for (Index e = 0; e < gamma.size(); ++e) {
    const PlanEntry& cell = sol.plan.entries[size_t(e)];
    CHECK((gamma.pairs.row(e).head(2) - mu.points.row(cell.i)).norm() == 0.0);
    CHECK((gamma.pairs.row(e).tail(2) - nu.points.row(cell.j)).norm() == 0.0);
  }
  CHECK(coupling_w2(gamma, gamma) <= 1e-8);
}

TEST_CASE("coupling distance closed forms and symmetry") {
  SUBCASE("two single-pair couplings") {
    CouplingMeasure g1, g2;
    g1.pairs.resize(1, 4);
    g1.pairs << 0.0, 0.0, 1.0, 1.0;
    g1.masses = Vector::Ones(1);
    g2.pairs.resize(1, 4);
    g2.pairs << 1.0, 0.0, 1.0, 3.0;
    g2.masses = Vector::Ones(1);
    // displacement (1,0,0,2): norm sqrt(5)
    CHECK(coupling_w2(g1, g2) ==
          doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
    CHECK(coupling_w2(g2, g1) ==
          doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
  }
  SUBCASE("two-pair couplings match the endpoint oracle") {
    // With two support points on each side the transport polytope is the
    // segment P11 in [max(0, a+b-1), min(a, b)]; a linear objective is
    // minimized at an endpoint.
    Rng rng(1616, 0);
    for (int t = 0; t < 25; ++t) {
      CouplingMeasure g1, g2;
      g1.pairs = random_points(rng, 2, 2);  // d = 1: pairs live in R^2
      g2.pairs = random_points(rng, 2, 2);
      const double a = 0.1 + 0.8 * rng.uniform();
      const double b = 0.1 + 0.8 * rng.uniform();
      g1.masses = Vector(2);
      g1.masses << a, 1.0 - a;
      g2.masses = Vector(2);
      g2.masses << b, 1.0 - b;

      Matrix cost(2, 2);
      for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j)
          cost(i, j) = (g1.pairs.row(i) - g2.pairs.row(j)).squaredNorm();
      auto value_at = [&](double p11) {
        return p11 * cost(0, 0) + (a - p11) * cost(0, 1) +
               (b - p11) * cost(1, 0) + (1.0 - a - b + p11) * cost(1, 1);
      };
      const double lo = std::max(0.0, a + b - 1.0);
      const double hi = std::min(a, b);
      const double oracle =
          std::sqrt(std::min(value_at(lo), value_at(hi)));
      CHECK(coupling_w2(g1, g2) == doctest::Approx(oracle).epsilon(1e-12));
    }
  }
  SUBCASE("distinct couplings are separated") {
    CouplingMeasure g1, g2;
    g1.pairs.resize(1, 2);
    g1.pairs << 0.0, 0.0;
    g1.masses = Vector::Ones(1);
    g2.pairs.resize(1, 2);
    g2.pairs << 0.25, 0.0;
    g2.masses = Vector::Ones(1);
    CHECK(coupling_w2(g1, g2) > 0.2);
  }
  SUBCASE("oversized support products are refused") {
    CouplingMeasure g1, g2;
    g1.pairs = Matrix::Zero(4000, 2);
    g1.pairs.col(0).setLinSpaced(4000, 0.0, 1.0);
    g1.masses = Vector::Constant(4000, 1.0 / 4000.0);
    g2.pairs = Matrix::Zero(3000, 2);
    g2.pairs.col(0).setLinSpaced(3000, 0.0, 1.0);
    g2.masses = Vector::Constant(3000, 1.0 / 3000.0);
    CHECK_THROWS_AS(coupling_w2(g1, g2), std::invalid_argument);
  }
}

TEST_CASE("explicit constants match frozen references") {
  // Reference values computed independently with 30-digit arithmetic.
  CHECK(constants(1.0, 1.0, 1, 1.0).C_Rd ==
        doctest::Approx(3245.0895183930159).epsilon(1e-12));
  CHECK(constants(1.0, 1.0, 2, 1.0).C_Rd ==
        doctest::Approx(321865.99679032985).epsilon(1e-12));
  CHECK(constants(1.0, 1.0, 3, 1.0).C_Rd ==
        doctest::Approx(15323739.226690013).epsilon(1e-12));
  // (2R)^{d-1} structure: R-free in d=1, doubling in d=2.
  CHECK(constants(2.0, 1.0, 1, 1.0).C_Rd ==
        doctest::Approx(3245.0895183930159).epsilon(1e-12));
  CHECK(constants(2.0, 1.0, 2, 1.0).C_Rd ==
        doctest::Approx(2.0 * 321865.99679032985).epsilon(1e-12));

  CHECK(constants(1.0, 1.0, 1, 1.0).C_cor45 ==
        doctest::Approx(268.0).epsilon(1e-12));
  CHECK(constants(4.0, 1.0, 1, 1.0).C_cor45 ==
        doctest::Approx(536.0).epsilon(1e-12));
  CHECK(constants(1.0, 1000.0, 2, 1.0).C_cor45 ==
        doctest::Approx(901.05492068274269).epsilon(1e-12));
  // Tiny density bound: the 268 sqrt(R) branch dominates.
  CHECK(constants(1.0, 1e-12, 1, 1.0).C_cor45 ==
        doctest::Approx(268.0).epsilon(1e-12));

  BoundConstants c = constants(1.0, 1.0, 1, 1.0);
  c.L = 1.0;
  CHECK(case_threshold(c, 1.0) ==
        doctest::Approx(101.40904744978175).epsilon(1e-12));
  CHECK(case1_bound(c, 1.0, 2e4) ==
        doctest::Approx(640565.68542494924).epsilon(1e-12));
  CHECK(case2_bound(c, 1.0, 0.01) ==
        doctest::Approx(9.5469942664252499).epsilon(1e-12));

  CHECK_THROWS_AS(constants(-1.0, 1.0, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(constants(1.0, 0.0, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(constants(1.0, 1.0, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(constants(1.0, 1.0, 1, 2.5), std::invalid_argument);
}

TEST_CASE("carlier remainder hand examples") {
  const BrenierPotential phi = abs_potential();
  Vector x(1), p(1);
  SUBCASE("subgradient pairs sit at equality") {
    x << 0.3;
    p << 1.0;
    const auto r = carlier_remainder(phi, x, p, 1.0);
    CHECK(std::abs(r.lhs) <= 1e-12);
    CHECK(std::abs(r.rhs) <= 1e-12);
  }
  SUBCASE("soft-threshold example") {
    x << 0.3;
    p << -1.0;
    const auto r = carlier_remainder(phi, x, p, 1.0);
    CHECK(r.lhs == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.rhs == doctest::Approx(0.09).epsilon(1e-12));
  }
  SUBCASE("slopes outside the hull give an infinite left side") {
    x << 0.0;
    p << 2.0;
    const auto r = carlier_remainder(phi, x, p, 1.0);
    CHECK(std::isinf(r.lhs));
    CHECK(std::isfinite(r.rhs));
  }
}

TEST_CASE("carlier remainder randomized corpus") {
  Rng rng(0xCA21, 0);
  int trials = 0;
  while (trials < 10000) {
    const Index d = 1 + Index(rng.next32() % 3);
    const Index m = 1 + Index(rng.next32() % 8);
    Matrix atoms = random_points(rng, m, d, 1.5);
    Vector g(m);
    for (Index k = 0; k < m; ++k) g[k] = rng.uniform(-1.0, 1.0);
    const BrenierPotential phi = from_dual(atoms, g);

    Vector x(d), p(d);
    for (Index k = 0; k < d; ++k) x[k] = rng.uniform(-2.0, 2.0);
    // p as a convex combination of atoms stays in the hull.
    Vector lam(m);
    for (Index k = 0; k < m; ++k) lam[k] = rng.uniform();
    lam /= lam.sum();
    p = atoms.transpose() * lam;
    const double lambda = std::pow(10.0, rng.uniform(-3.0, 1.0));

    const auto r = carlier_remainder(phi, x, p, lambda);
    REQUIRE(r.lhs >= r.rhs - 1e-8);
    ++trials;
  }
}

TEST_CASE("dual gap of optimal potentials") {
  Rng rng(0xD7A1, 0);
  const auto mu =
      make_measure(random_points(rng, 60, 1, 0.8), random_weights(rng, 60));
  const auto nu =
      make_measure(random_points(rng, 8, 1, 0.8), random_weights(rng, 8));
  const OtSolution sol = solve(mu, nu);
  const BrenierPotential phibar = tighten(from_dual(nu, sol.duals.g));

  SUBCASE("gap vanishes at the oracle itself") {
    CHECK(std::abs(dual_gap(phibar, phibar, mu, nu)) <= 1e-12);
  }
  SUBCASE("gap is shift invariant") {
    for (double c : {-4.0, 0.9}) {
      const BrenierPotential shifted = from_dual(nu, sol.duals.g.array() + c);
      CHECK(std::abs(dual_gap(shifted, phibar, mu, nu)) <= 1e-9);
    }
  }
  SUBCASE("suboptimal potentials have positive gap") {
    Vector g = sol.duals.g;
    for (Index j = 0; j < g.size(); ++j) g[j] += (j % 2 ? 0.2 : -0.2);
    const BrenierPotential off = from_dual(nu, g);
    CHECK(dual_gap(off, phibar, mu, nu) > 1e-4);
  }
}

TEST_CASE("error bound check on randomized potentials") {
  Rng rng(0xE881, 0);
  const Index nsamp = 20000;
  const DistributionSpec box =
      DistributionSpec::uniform_box(Vector::Constant(1, -0.6),
                                    Vector::Constant(1, 0.6));
  int case2_seen = 0;
  for (int t = 0; t < 30; ++t) {
    const Index m = 3 + Index(rng.next32() % 6);
    Matrix atoms = random_points(rng, m, 1, 0.7);
    Vector gbar(m), g(m);
    for (Index k = 0; k < m; ++k) {
      gbar[k] = rng.uniform(-0.3, 0.3);
      g[k] = gbar[k] + rng.uniform(-0.2, 0.2);
    }
    const BrenierPotential phibar = from_dual(atoms, gbar);
    const BrenierPotential phi = from_dual(atoms, g);

    const PointCloudMeasure samples = sample(box, nsamp, 77, uint64_t(t));
    const double L = atoms.rowwise().norm().maxCoeff();
    BoundConstants c = constants(0.6, 1.0 / 1.2, 1, 1.0);
    c.L = std::max(L, 1e-6);
    const double q = 1.0 + rng.uniform();

    const auto rep = error_bound_check(phi, phibar, samples.points, c, q);
    REQUIRE(rep.holds);
    CHECK(rep.delta >= -1e-12);
    CHECK(rep.lhs >= 0.0);
    CHECK(rep.lhs_stderr >= 0.0);
    if (rep.bound_case == 2) ++case2_seen;
  }
  CHECK(case2_seen == 30);  // mild perturbations stay under the threshold

  SUBCASE("identical potentials sit at zero") {
    const BrenierPotential phi = abs_potential();
    const PointCloudMeasure samples = sample(box, 500, 78, 0);
    BoundConstants c = constants(0.6, 1.0 / 1.2, 1, 1.0);
    const auto rep = error_bound_check(phi, phi, samples.points, c, 1.0);
    CHECK(rep.lhs <= 1e-12);
    CHECK(std::abs(rep.delta) <= 1e-12);
    CHECK(rep.holds);
  }
}

TEST_CASE("error bound case selection for an inflated gap") {
  // The remainder phi(x) + phi*(p) - <x,p> is shift invariant, so offsets
  // only inflate it when the argmax atom and the conjugate's support pull in
  // opposite directions: the far atom carries +40 (dominating the max) while
  // p = -1/2 must be represented mostly by the -40 atoms.
  const BrenierPotential phibar = from_dual(col({-0.5}), Vector::Zero(1));
  Vector g(3);
  g << -40.0, -40.0, 40.0;
  const BrenierPotential phi = from_dual(col({-0.6, -0.4, 0.7}), g);
  const DistributionSpec box = DistributionSpec::uniform_box(
      Vector::Constant(1, -0.6), Vector::Constant(1, 0.6));
  const PointCloudMeasure samples = sample(box, 5000, 79, 0);

  BoundConstants c = constants(0.6, 1.0 / 1.2, 1, 1.0);
  c.L = 0.7;
  const auto rep = error_bound_check(phi, phibar, samples.points, c, 1.0);
  CHECK(rep.bound_case == 1);
  CHECK(rep.delta > rep.threshold);
  // gap(x) = 1.2 x + 39.755 + 442.405/13 on U[-0.6, 0.6]; the sample mean of
  // the linear part is within a few hundredths of zero at n = 5000.
  CHECK(rep.delta == doctest::Approx(39.755 + 442.405 / 13.0).epsilon(0.001));
  CHECK(rep.lhs == doctest::Approx(1.2).epsilon(1e-9));
  CHECK(rep.holds);
}

TEST_CASE("covering check geometry") {
  SUBCASE("affine potentials have no singularities") {
    const BrenierPotential phi = from_dual(col({0.7}), Vector::Zero(1));
    const auto rep = covering_check(phi, 1.0, 0.05, 1.0, 0.0125);
    CHECK(rep.detected_points == 0);
    CHECK(rep.estimated_count == 0);
  }
  SUBCASE("single kink of the absolute value") {
    const auto rep = covering_check(abs_potential(), 1.0, 0.05, 1.0, 0.0125);
    CHECK(rep.detected_points > 0);
    CHECK(rep.estimated_count == 1);
    CHECK(rep.theorem_bound == doctest::Approx(48.0).epsilon(1e-12));
  }
  SUBCASE("random planar potentials stay under the bound") {
    Rng rng(0xC0E1, 0);
    for (int t = 0; t < 20; ++t) {
      const Index m = 2 + Index(rng.next32() % 19);
      Matrix atoms = random_points(rng, m, 2, 1.0);
      Vector g(m);
      for (Index k = 0; k < m; ++k) g[k] = rng.uniform(-0.2, 0.2);
      const BrenierPotential phi = from_dual(atoms, g);
      // covering_check enforces count <= bound internally; a throw here
      // would be a violation.
      const auto rep = covering_check(phi, 1.0, 0.1, 0.4, 0.025);
      CHECK(double(rep.estimated_count) <= rep.theorem_bound);
    }
  }
  SUBCASE("three dimensional smoke test") {
    Rng rng(0xC0E2, 0);
    Matrix atoms = random_points(rng, 5, 3, 0.8);
    Vector g = Vector::Zero(5);
    const auto rep = covering_check(from_dual(atoms, g), 0.5, 0.125, 0.5, 0.03125);
    CHECK(double(rep.estimated_count) <= rep.theorem_bound);
  }
  SUBCASE("input validation") {
    Rng rng(0xC0E3, 0);
    Matrix atoms4 = random_points(rng, 3, 4, 1.0);
    CHECK_THROWS_AS(covering_check(from_dual(atoms4, Vector::Zero(3)), 1.0,
                                   0.1, 0.5, 0.025),
                    std::invalid_argument);
    CHECK_THROWS_AS(covering_check(abs_potential(), 1.0, 0.05, 1.0, 0.05),
                    std::invalid_argument);  // grid step above eta/4
  }
}
