#pragma once

#include <vector>

#include "ot/brenier.hpp"
#include "ot/common.hpp"
#include "ot/measures.hpp"

namespace ot {

// Semi-discrete dual problem data: a discrete target ν = Σ_j b_j δ_{y_j},
// a sampled (or quadrature) source μ̂ = Σ_i a_i δ_{x_i}, and the dual
// offsets g ∈ R^m being optimized. The objective
//
//   F(g) = Σ_i a_i φ_g(x_i) + Σ_j b_j (½‖y_j‖² − g_j)
//
// is convex and piecewise linear in g; its minimum equals
// Σ_i a_i ½‖x_i‖² + Σ_j b_j ½‖y_j‖² − OT(μ̂, ν), so the LP route provides
// an independent value check.
struct SemiDual {
  PointCloudMeasure target;          // ν
  PointCloudMeasure source_samples;  // μ̂ (samples or quadrature nodes)
  Vector g;                          // dual offsets, length target.size()
};

// F(g) above. The potential piece φ_g(x) = max_j <x,y_j> + g_j − ½‖y_j‖².
double objective(const SemiDual& sd);

// Laguerre-cell assignment: each sample goes to the argmax piece of φ_g,
// lowest index winning ties. cell_mass[j] is the μ̂-mass assigned to atom j;
// cell_mass − b is a subgradient of F at g (exact wherever no sample is
// tied).
struct LaguerreAssignment {
  std::vector<Index> cell;  // per-sample atom index
  Vector cell_mass;         // length m, sums to total source mass
};
LaguerreAssignment laguerre_assign(const SemiDual& sd);

// cell_mass − b, the subgradient used by minimize.
Vector subgradient(const SemiDual& sd);

struct MinimizeReport {
  Vector g;                // normalized: last entry zero
  double value;            // objective at g
  Index iterations;        // outer rounds consumed
  double subgradient_norm; // ‖cell_mass − b‖ at the returned g
  bool converged;          // round-over-round improvement fell below tol
};

// Minimizes F over g by alternating Polyak-style subgradient bursts with
// exact coordinate sweeps (each coordinate minimization is a weighted
// quantile of switch thresholds, so sweeps land exactly on kinks). The
// returned g is normalized to g[m-1] = 0. Non-convergence is reported, not
// thrown: the caller can inspect subgradient_norm and value.
MinimizeReport minimize(const SemiDual& sd, double tol, Index max_iter);

}  // namespace ot
