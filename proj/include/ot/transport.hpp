#pragma once

// Exact discrete optimal transport.
//
// solve() runs a network simplex on the bipartite transportation graph and
// returns a basic optimal plan together with complementary dual potentials
// for the half-squared Euclidean cost. solve_with_cost() accepts any dense
// cost matrix (used e.g. for linear-cost W1).

#include "ot/common.hpp"
#include "ot/measures.hpp"

#include <string>
#include <vector>

namespace ot {

/// Mass threshold under which a plan cell is not considered active in
/// complementary-slackness checks.
inline constexpr double kActiveMassEps = 1e-12;

/// Dense half-squared-Euclidean cost: C(i,j) = 0.5*|x_i - y_j|^2.
Matrix build_cost(const Matrix& X, const Matrix& Y);
Matrix build_cost(const PointCloudMeasure& mu, const PointCloudMeasure& nu);

struct PlanEntry {
  Index i = 0, j = 0;
  double mass = 0.0;
};

/// Sparse coupling with prescribed marginals. Solver outputs are basic:
/// at most n+m-1 strictly positive entries.
struct TransportPlan {
  Index n = 0, m = 0;
  std::vector<PlanEntry> entries;  ///< strictly positive masses, sorted by (i,j)
  Vector row_marginal;             ///< a, length n
  Vector col_marginal;             ///< b, length m
  bool basic = false;

  Vector row_sums() const;
  Vector col_sums() const;
  /// Max absolute marginal residual over rows and columns.
  double marginal_residual() const;
};

/// Dual variables with f_i + g_j <= C(i,j); cost convention is fixed to the
/// half-squared Euclidean cost for solve(), and to the caller's matrix for
/// solve_with_cost(). solve() normalizes g so that the last coordinate is 0.
struct DualPair {
  Vector f, g;
};

struct OtSolution {
  TransportPlan plan;
  DualPair duals;
  double primal_value = 0.0;
  double dual_value = 0.0;
  Index pivots = 0;
};

/// Exact OT between two measures under the half-squared Euclidean cost.
OtSolution solve(const PointCloudMeasure& mu, const PointCloudMeasure& nu);

/// Exact transportation problem for an arbitrary dense cost. Refuses
/// instances beyond the desk-scale dense cap (5000x5000).
OtSolution solve_with_cost(const Matrix& C, const Vector& a, const Vector& b);

struct SlacknessReport {
  double max_active_residual = 0.0;  ///< max |f_i+g_j-C_ij| over cells with mass > kActiveMassEps
  double max_dual_violation = 0.0;   ///< max (f_i+g_j-C_ij)_+ over all cells
  Index active_cells = 0;
};

SlacknessReport verify_slackness(const OtSolution& sol, const Matrix& C);

/// Plan triplet CSV (`i,j,mass`) and duals JSON ({"f":[...],"g":[...]}).
void write_plan_csv(const TransportPlan& plan, const std::string& path);
void write_duals_json(const DualPair& duals, const std::string& path);
DualPair read_duals_json(const std::string& path);

}  // namespace ot
