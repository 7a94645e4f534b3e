#include "ot/linprog.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace ot {
namespace {

// Pivot tolerance relative to the tableau scale.
constexpr double kEps = 1e-11;

// Bland-rule simplex on the condensed tableau T = [B^-1 A | B^-1 b]. The
// phase cost vector `cfull` covers all columns; reduced costs are recomputed
// from the tableau every iteration (cheap at our row counts, and immune to
// the drift that incremental updates accumulate across degenerate pivots).
// `allowed` masks the columns that may enter. Returns false on an unbounded
// ray.
bool run_simplex(Matrix& T, std::vector<int>& basis, const Vector& cfull,
                 std::vector<bool>& allowed, double scale) {
  const Index r = T.rows();
  const Index ncols = T.cols() - 1;
  const double tol = kEps * scale;
  const double rhs_snap = 1e-13 * scale;
  const Index max_iter = 2000 + 200 * ncols;

  for (Index iter = 0; iter < max_iter; ++iter) {
    // Exact reduced costs: c_j - c_B' (B^-1 A_j).
    Index enter = -1;
    for (Index j = 0; j < ncols && enter < 0; ++j) {
      if (!allowed[size_t(j)]) continue;
      double red = cfull[j];
      for (Index i = 0; i < r; ++i) red -= cfull[basis[size_t(i)]] * T(i, j);
      if (red < -tol) enter = j;  // Bland: lowest improving index
    }
    if (enter < 0) return true;

    // Ratio test: exact minimum over safely-sized pivots, then Bland's
    // smallest-basis-index rule among the rows attaining it.
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < r; ++i) {
      const double a = T(i, enter);
      if (a > tol) best = std::min(best, T(i, ncols) / a);
    }
    if (!std::isfinite(best)) return false;
    Index leave = -1;
    const double window = best + 1e-12 * (1.0 + std::abs(best));
    for (Index i = 0; i < r; ++i) {
      const double a = T(i, enter);
      if (a > tol && T(i, ncols) / a <= window &&
          (leave < 0 || basis[size_t(i)] < basis[size_t(leave)])) {
        leave = i;
      }
    }

    const double piv = T(leave, enter);
    T.row(leave) /= piv;
    for (Index i = 0; i < r; ++i) {
      if (i == leave) continue;
      const double f = T(i, enter);
      if (f != 0.0) T.row(i) -= f * T.row(leave);
    }
    basis[size_t(leave)] = int(enter);

    // Snap rounding noise on the right-hand side. Feasibility demands
    // rhs >= 0; anything meaningfully below zero is a breakdown, not noise.
    for (Index i = 0; i < r; ++i) {
      double& v = T(i, ncols);
      if (std::abs(v) <= rhs_snap) v = 0.0;
      ensure(v >= -1e-9 * scale, "solve_lp: lost primal feasibility");
    }
  }
  ensure(false, "solve_lp: iteration limit exceeded");
  return false;
}

}  // namespace

LpResult solve_lp(const Matrix& A, const Vector& b, const Vector& c) {
  const Index r = A.rows();
  const Index n = A.cols();
  require(b.size() == r && c.size() == n, "solve_lp: dimension mismatch");

  const double scale =
      1.0 + std::max({A.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1.0});

  // Tableau [A | I | b] with rows flipped so that b >= 0; the identity block
  // holds the phase-1 artificial variables.
  Matrix T(r, n + r + 1);
  T.leftCols(n) = A;
  T.middleCols(n, r).setIdentity();
  T.col(n + r) = b;
  for (Index i = 0; i < r; ++i) {
    if (T(i, n + r) < 0.0) T.row(i) *= -1.0;
  }

  std::vector<int> basis(static_cast<size_t>(r));
  for (Index i = 0; i < r; ++i) basis[size_t(i)] = int(n + i);

  // Phase 1: minimize the sum of artificials. Artificial columns are barred
  // from entering — the initial basis already holds them, and re-admitting
  // one after it leaves only invites degenerate churn.
  Vector cost1 = Vector::Zero(n + r);
  cost1.tail(r).setOnes();
  std::vector<bool> allowed(size_t(n + r), true);
  for (Index j = n; j < n + r; ++j) allowed[size_t(j)] = false;
  ensure(run_simplex(T, basis, cost1, allowed, scale),
         "solve_lp: phase 1 reported an unbounded ray");

  LpResult res;
  // Direct measure: total artificial mass still in the basis.
  double art_mass = 0.0;
  for (Index i = 0; i < r; ++i)
    if (basis[size_t(i)] >= int(n)) art_mass += std::max(0.0, T(i, n + r));
  res.infeasibility = art_mass;
  if (res.infeasibility > 1e-9 * scale) {
    res.status = LpStatus::Infeasible;
    return res;
  }

  // Drive any artificial still in the basis out of it (or leave it for a
  // redundant row: its value is 0). Such rows have rhs 0, so the replacement
  // pivot keeps feasibility for any pivot sign; take the largest magnitude
  // for stability.
  for (Index i = 0; i < r; ++i) {
    if (basis[size_t(i)] >= int(n)) {
      T(i, n + r) = 0.0;
      Index best_j = -1;
      double best_a = kEps * scale;
      for (Index j = 0; j < n; ++j) {
        if (std::abs(T(i, j)) > best_a) {
          best_a = std::abs(T(i, j));
          best_j = j;
        }
      }
      if (best_j < 0) continue;
      const double piv = T(i, best_j);
      T.row(i) /= piv;
      for (Index k = 0; k < r; ++k) {
        if (k == i) continue;
        const double f = T(k, best_j);
        if (f != 0.0) T.row(k) -= f * T.row(i);
      }
      basis[size_t(i)] = int(best_j);
    }
  }

  // Phase 2: original costs over the structural columns only.
  Vector cost2 = Vector::Zero(n + r);
  cost2.head(n) = c;
  for (Index j = 0; j < n; ++j) allowed[size_t(j)] = true;
  for (Index j = n; j < n + r; ++j) allowed[size_t(j)] = false;
  if (!run_simplex(T, basis, cost2, allowed, scale)) {
    res.status = LpStatus::Unbounded;
    return res;
  }

  res.status = LpStatus::Optimal;
  res.x = Vector::Zero(n);
  for (Index i = 0; i < r; ++i) {
    const int j = basis[size_t(i)];
    if (j < int(n)) res.x[j] = T(i, n + r);
  }
  ensure(res.x.minCoeff() >= -1e-8 * scale,
         "solve_lp: negative basic variable " + std::to_string(res.x.minCoeff()));
  res.x = res.x.cwiseMax(0.0);
  res.value = c.dot(res.x);
  return res;
}

double hull_membership_residual(const Matrix& P, const Vector& y) {
  const Index m = P.rows();
  const Index d = P.cols();
  require(y.size() == d, "hull_membership_residual: dimension mismatch");
  Matrix A(d + 1, m);
  A.topRows(d) = P.transpose();
  A.row(d).setOnes();
  Vector b(d + 1);
  b.head(d) = y;
  b[d] = 1.0;
  const LpResult r = solve_lp(A, b, Vector::Zero(m));
  return r.infeasibility;
}

}  // namespace ot
