#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <vector>

#include "ot/measures.hpp"
#include "ot/rng.hpp"
#include "ot/transport.hpp"

using namespace ot;

namespace {

PointCloudMeasure cloud(const Matrix& pts, const Vector& w) {
  return make_measure(pts, w);
}

PointCloudMeasure uniform_cloud(const Matrix& pts) {
  return make_measure(pts, Vector::Constant(pts.rows(), 1.0 / double(pts.rows())));
}

Matrix col(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double v : xs) m(i++, 0) = v;
  return m;
}

// Exhaustive assignment minimum for n=m with uniform weights 1/n.
double permutation_minimum(const Matrix& C) {
  const Index n = C.rows();
  std::vector<Index> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), Index(0));
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (Index i = 0; i < n; ++i) cost += C(i, perm[i]);
    best = std::min(best, cost / double(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Matrix random_points(Rng& rng, Index n, Index d, double lo, double hi) {
  Matrix P(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) P(i, k) = rng.uniform(lo, hi);
  return P;
}

Vector random_weights(Rng& rng, Index n) {
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = 0.05 + rng.uniform();
  w /= w.sum();
  return w;
}

}  // namespace

TEST_CASE("cost matrix formula") {
  CHECK(build_cost(col({0.0}), col({0.0}))(0, 0) == 0.0);

  const Matrix C = build_cost(col({0.0, 2.0}), col({1.0, 3.0}));
  CHECK(C(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(C(0, 1) == doctest::Approx(4.5).epsilon(1e-15));
  CHECK(C(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(C(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("cost matrix symmetry and exact zeros") {
  Rng rng(11, 0);
  const Matrix X = random_points(rng, 7, 3, -2.0, 2.0);
  Matrix Y = random_points(rng, 5, 3, -2.0, 2.0);
  Y.row(2) = X.row(4);  // shared point must give an exact zero
  const Matrix C = build_cost(X, Y);
  const Matrix Ct = build_cost(Y, X);
  CHECK((C - Ct.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(C(4, 2) == 0.0);
  CHECK(C.minCoeff() >= 0.0);
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 5; ++j)
      if (i != 4 || j != 2) CHECK(C(i, j) > 0.0);

  CHECK_THROWS_AS(build_cost(random_points(rng, 3, 2, 0, 1), random_points(rng, 3, 3, 0, 1)),
                  std::invalid_argument);
}

TEST_CASE("point mass to itself") {
  const auto mu = uniform_cloud(col({0.0}));
  const auto sol = solve(mu, mu);
  CHECK(sol.primal_value == 0.0);
  REQUIRE(sol.plan.entries.size() == 1);
  CHECK(sol.plan.entries[0].mass == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sol.duals.f[0] + sol.duals.g[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(sol.duals.g[0] == 0.0);
}

TEST_CASE("two atoms prefer the monotone matching") {
  const auto mu = uniform_cloud(col({0.0, 2.0}));
  const auto nu = uniform_cloud(col({1.0, 3.0}));
  const auto sol = solve(mu, nu);
  CHECK(sol.primal_value == doctest::Approx(0.5).epsilon(1e-14));
  // Crossing plan costs 0.5*4.5 + 0.5*0.5 = 2.5; the solver must beat it.
  CHECK(sol.primal_value < 2.5);
  REQUIRE(sol.plan.entries.size() == 2);
  CHECK(sol.plan.entries[0].i == 0);
  CHECK(sol.plan.entries[0].j == 0);
  CHECK(sol.plan.entries[0].mass == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(sol.plan.entries[1].i == 1);
  CHECK(sol.plan.entries[1].j == 1);
  CHECK(sol.plan.entries[1].mass == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("matches exhaustive permutation oracle for small uniform instances") {
  for (Index n = 2; n <= 6; ++n) {
    for (Index d = 1; d <= 2; ++d) {
      for (uint64_t seed = 0; seed < 4; ++seed) {
        Rng rng(1000 * static_cast<uint64_t>(n) + 10 * static_cast<uint64_t>(d) + seed, 0);
        const auto mu = uniform_cloud(random_points(rng, n, d, -1.0, 1.0));
        const auto nu = uniform_cloud(random_points(rng, n, d, -1.0, 1.0));
        const Matrix C = build_cost(mu, nu);
        const auto sol = solve(mu, nu);
        CHECK(sol.primal_value == doctest::Approx(permutation_minimum(C)).epsilon(1e-12));
        // Generic points: the optimal vertex is a permutation scaled by 1/n.
        REQUIRE(sol.plan.entries.size() == static_cast<size_t>(n));
        std::vector<int> row_hits(static_cast<size_t>(n), 0), col_hits(static_cast<size_t>(n), 0);
        for (const auto& e : sol.plan.entries) {
          CHECK(e.mass == doctest::Approx(1.0 / double(n)).epsilon(1e-12));
          ++row_hits[static_cast<size_t>(e.i)];
          ++col_hits[static_cast<size_t>(e.j)];
        }
        for (Index i = 0; i < n; ++i) {
          CHECK(row_hits[static_cast<size_t>(i)] == 1);
          CHECK(col_hits[static_cast<size_t>(i)] == 1);
        }
      }
    }
  }
}

TEST_CASE("random corpus: duality gap, marginals, slackness, basic size") {
  int instances = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(500 + seed, 0);
    const Index d = 1 + static_cast<Index>(rng.next32() % 3);
    const Index n = 1 + static_cast<Index>(rng.next32() % 200);
    const Index m = 1 + static_cast<Index>(rng.next32() % 200);
    const auto mu = cloud(random_points(rng, n, d, -3.0, 3.0), random_weights(rng, n));
    const auto nu = cloud(random_points(rng, m, d, -3.0, 3.0), random_weights(rng, m));
    const Matrix C = build_cost(mu, nu);
    const auto sol = solve(mu, nu);
    ++instances;

    CHECK(std::abs(sol.primal_value - sol.dual_value) <=
          1e-9 * (1.0 + std::abs(sol.primal_value)));
    CHECK(sol.plan.marginal_residual() <= 1e-10);
    CHECK(sol.plan.entries.size() <= static_cast<size_t>(n + m - 1));
    CHECK(sol.plan.basic);
    CHECK(sol.duals.g[m - 1] == 0.0);
    for (const auto& e : sol.plan.entries) CHECK(e.mass > 0.0);

    const auto rep = verify_slackness(sol, C);
    CHECK(rep.max_dual_violation <= 1e-9);
    CHECK(rep.max_active_residual <= 1e-8);
  }
  CHECK(instances == 100);
}

TEST_CASE("dual objective is invariant under the constant shift") {
  Rng rng(77, 0);
  const auto mu = cloud(random_points(rng, 40, 2, -1.0, 1.0), random_weights(rng, 40));
  const auto nu = cloud(random_points(rng, 25, 2, -1.0, 1.0), random_weights(rng, 25));
  const auto sol = solve(mu, nu);
  const double base = sol.duals.f.dot(mu.weights) + sol.duals.g.dot(nu.weights);
  for (double c : {-5.0, 0.3, 12.0}) {
    const Vector f2 = sol.duals.f.array() + c;
    const Vector g2 = sol.duals.g.array() - c;
    const double shifted = f2.dot(mu.weights) + g2.dot(nu.weights);
    CHECK(shifted == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("slackness report flags hand-built violations") {
  Rng rng(33, 0);
  const auto mu = cloud(random_points(rng, 12, 2, -1.0, 1.0), random_weights(rng, 12));
  const auto nu = cloud(random_points(rng, 9, 2, -1.0, 1.0), random_weights(rng, 9));
  const Matrix C = build_cost(mu, nu);
  auto sol = solve(mu, nu);

  auto rep = verify_slackness(sol, C);
  CHECK(rep.max_active_residual <= 1e-8);
  CHECK(rep.max_dual_violation <= 1e-9);
  CHECK(rep.active_cells > 0);

  OtSolution bad = sol;
  bad.duals.f.setConstant(1000.0);
  bad.duals.g.setConstant(1000.0);
  CHECK(verify_slackness(bad, C).max_dual_violation >= 1000.0);

  OtSolution perturbed = sol;
  perturbed.duals.f[sol.plan.entries[0].i] += 1e-3;
  CHECK(verify_slackness(perturbed, C).max_active_residual >= 1e-3 - 1e-9);
}

TEST_CASE("general cost interface handles non-quadratic costs") {
  // 1-d linear cost |x-y|: any monotone rearrangement is optimal; the value
  // is fixed by the marginals. Two atoms at 0,1 to targets 2,3: value 2.
  Matrix C(2, 2);
  C << 2.0, 3.0, 1.0, 2.0;
  const Vector a = Vector::Constant(2, 0.5), b = Vector::Constant(2, 0.5);
  const auto sol = solve_with_cost(C, a, b);
  CHECK(sol.primal_value == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(sol.plan.marginal_residual() <= 1e-12);
}

TEST_CASE("input validation") {
  Rng rng(1, 0);
  const Matrix C = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(solve_with_cost(C, Vector::Constant(2, 0.5), Vector::Constant(3, 1.0 / 3)),
                  std::invalid_argument);
  Vector bad_total(2);
  bad_total << 0.7, 0.7;
  CHECK_THROWS_AS(solve_with_cost(C, bad_total, Vector::Constant(2, 0.5)),
                  std::invalid_argument);
  Matrix Cbad = C;
  Cbad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve_with_cost(Cbad, Vector::Constant(2, 0.5), Vector::Constant(2, 0.5)),
                  std::invalid_argument);

  // Desk-scale cap refuses before allocating the dense cost.
  const Index big = 5001;
  PointCloudMeasure mu_big = uniform_cloud(Matrix::Random(big, 1));
  PointCloudMeasure nu_big = uniform_cloud(Matrix::Random(5000, 1));
  CHECK_THROWS_AS(solve(mu_big, nu_big), std::invalid_argument);
}

TEST_CASE("plan csv and duals json round trip") {
  Rng rng(9, 0);
  const auto mu = cloud(random_points(rng, 8, 2, -1.0, 1.0), random_weights(rng, 8));
  const auto nu = cloud(random_points(rng, 5, 2, -1.0, 1.0), random_weights(rng, 5));
  const auto sol = solve(mu, nu);

  const std::string plan_path = "test_plan_tmp.csv";
  const std::string duals_path = "test_duals_tmp.json";
  write_plan_csv(sol.plan, plan_path);
  write_duals_json(sol.duals, duals_path);

  std::ifstream in(plan_path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "i,j,mass");
  size_t rows = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == sol.plan.entries.size());

  const DualPair back = read_duals_json(duals_path);
  CHECK((back.f - sol.duals.f).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.g - sol.duals.g).cwiseAbs().maxCoeff() == 0.0);

  std::remove(plan_path.c_str());
  std::remove(duals_path.c_str());
}

TEST_CASE("identical supports ship mass diagonally") {
  Rng rng(21, 0);
  const Matrix X = random_points(rng, 30, 2, -1.0, 1.0);
  const auto mu = cloud(X, random_weights(rng, 30));
  const auto sol = solve(mu, mu);
  CHECK(sol.primal_value <= 1e-15);
  // Every atom keeps its own mass: the only zero-cost plan for distinct atoms.
  REQUIRE(sol.plan.entries.size() == 30);
  for (const auto& e : sol.plan.entries) {
    CHECK(e.i == e.j);
    CHECK(e.mass == doctest::Approx(mu.weights[e.i]).epsilon(1e-12));
  }
}
