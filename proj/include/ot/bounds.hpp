#pragma once

#include "ot/brenier.hpp"
#include "ot/common.hpp"
#include "ot/measures.hpp"
#include "ot/transport.hpp"

namespace ot {

// A transport plan viewed as a discrete measure on R^{2d}: one support point
// per active cell, concatenating the source and target coordinates.
struct CouplingMeasure {
  Matrix pairs;   // k x 2d, row = (x_i, y_j)
  Vector masses;  // positive, sums to one
  Index size() const { return pairs.rows(); }
  Index pair_dim() const { return pairs.cols(); }
};

CouplingMeasure coupling_from(const TransportPlan& plan,
                              const PointCloudMeasure& mu,
                              const PointCloudMeasure& nu);

// Wasserstein distance between discrete measures. Order 1 uses the linear
// cost ‖x−y‖ directly; order 2 is sqrt of twice the half-squared-cost
// optimum.
double wasserstein(const PointCloudMeasure& mu, const PointCloudMeasure& nu,
                   int order);

// W2 between couplings as measures on R^{2d}. Refuses support-size products
// beyond 1e7 (dense cost would not fit the desk-scale budget).
double coupling_w2(const CouplingMeasure& g1, const CouplingMeasure& g2);

// Explicit constants of the error-bound machinery:
//   C_Rd    = 4 e / (sqrt(2π) sqrt(d/2+1)) · (64 π e / (d/2+1))^{d/2}
//             · 48 d² (2R)^{d−1}
//   C_cor45 = max(268 sqrt(R), 4 (8 R³ M C_Rd)^{1/4})
// L defaults to 2R (the Lipschitz modulus available for Brenier potentials
// of measures in B_R); callers may override it before using the bounds.
struct BoundConstants {
  double R;
  double M;
  double L;
  double q;
  Index d;
  double C_Rd;
  double C_cor45;
};
BoundConstants constants(double R, double M, Index d, double q);

// Case machinery of the dual error bound, exposed for direct value checks:
// the threshold on the Fenchel-Young gap delta, and the two right-hand
// sides.
double case_threshold(const BoundConstants& c, double q);
double case1_bound(const BoundConstants& c, double q, double delta);
double case2_bound(const BoundConstants& c, double q, double delta);

// Fenchel-Young inequality with remainder:
//   phi(x) + phi*(p) − <x,p>  ≥  ‖x − prox_{λφ}(x + λp)‖² / λ.
// Returns both sides; lhs is +inf when p falls outside the atom hull.
struct CarlierRemainder {
  double lhs;
  double rhs;
};
CarlierRemainder carlier_remainder(const BrenierPotential& phi, const Vector& x,
                                   const Vector& p, double lambda);

// Dual suboptimality gap ∫φ dμ̂ + ∫φ* dν − (∫φ̄ dμ̂ + ∫φ̄* dν) where the
// conjugates are evaluated at the target atoms. Nonnegative whenever phibar
// is optimal for (μ̂, ν); values below −1e-6 are rejected as inconsistent.
double dual_gap(const BrenierPotential& phi, const BrenierPotential& phibar,
                const PointCloudMeasure& mu_samples,
                const PointCloudMeasure& nu);

// Monte-Carlo check of the dual error bound: estimates
// ‖∇φ̄ − ∇φ‖_{L^q(μ)} and the Fenchel-Young gap delta over the given
// samples, selects the applicable case, and compares against the bound.
struct ErrorBoundReport {
  double lhs;         // gradient L^q distance estimate
  double rhs;         // case bound evaluated at the estimated delta
  double delta;       // mean Fenchel-Young remainder
  double threshold;   // case-selection threshold
  double lhs_stderr;  // standard error of the L^q estimate
  int bound_case;     // 1 or 2
  bool holds;         // lhs <= rhs + 1e-6 (1 + rhs)
};
ErrorBoundReport error_bound_check(const BrenierPotential& phi,
                                   const BrenierPotential& phibar,
                                   const Matrix& mu_samples,
                                   const BoundConstants& c, double q);

// Covering-number check for the singularity set
//   Σ_{η,α} = {x : diam ∂φ(B(x,η)) ≥ α}:
// detects grid points whose sampled subdifferential diameter reaches alpha,
// covers them greedily with radius-8η balls and compares the count against
//   48 d² (R+4η)^{d−1} Lip(φ) / (α η^{d−1}).
// The sampled diameter can only under-estimate, which shrinks the detected
// set and keeps the comparison one-sided. d ≤ 3 only.
struct CoveringReport {
  Index estimated_count;  // greedy ball count
  double theorem_bound;
  Index detected_points;  // grid points flagged inside the singular set
};
CoveringReport covering_check(const BrenierPotential& phi, double R,
                              double eta, double alpha, double grid_step);

}  // namespace ot
