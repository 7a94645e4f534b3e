#pragma once

// Dense two-phase primal simplex for small linear programs in standard form:
//
//   minimize    c'x
//   subject to  A x = b,  x >= 0.
//
// Bland's rule guarantees termination; the implementation targets problems
// with at most a few hundred rows (convex-hull memberships, conjugates and
// similar certificates), not large-scale LP.

#include "ot/common.hpp"

namespace ot {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  double value = 0.0;      ///< objective at the optimum (when Optimal)
  Vector x;                ///< primal solution, empty unless Optimal
  double infeasibility = 0.0;  ///< phase-1 residual; 0 when a feasible point exists
};

/// Solves min c'x s.t. Ax = b, x >= 0.
LpResult solve_lp(const Matrix& A, const Vector& b, const Vector& c);

/// L1 distance certificate for membership of y in conv{rows of P}:
/// phase-1 residual of { P'w = y, sum w = 1, w >= 0 }. Zero (up to
/// tolerance) iff y lies in the convex hull.
double hull_membership_residual(const Matrix& P, const Vector& y);

}  // namespace ot
