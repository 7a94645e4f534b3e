#pragma once

// Piecewise-affine convex potentials of the form
//   phi(x) = max_k <x, y_k> + g_k - 0.5*|y_k|^2,
// built from transport duals: evaluation, active sets, the induced transport
// map (average of active atoms), the Legendre conjugate on conv{y_k}, offset
// tightening, and the proximal operator.

#include "ot/common.hpp"
#include "ot/measures.hpp"
#include "ot/transport.hpp"

#include <string>
#include <vector>

namespace ot {

struct BrenierPotential {
  Matrix atoms;       ///< m x d support of the target measure
  Vector g;           ///< offsets, one per atom
  Vector intercept;   ///< derived: g_k - 0.5*|y_k|^2
  bool tightened = false;

  Index size() const { return atoms.rows(); }
  Index dim() const { return atoms.cols(); }
};

BrenierPotential from_dual(const Matrix& atoms, const Vector& g);
BrenierPotential from_dual(const PointCloudMeasure& nu, const Vector& g);

double eval(const BrenierPotential& phi, const Vector& x);
/// Row-wise batch evaluation (chunked matrix products).
Vector eval(const BrenierPotential& phi, const Matrix& X);

/// Scale-aware tie tolerance used when no explicit tolerance is given.
inline double default_active_tol(double value) { return 1e-9 * (1.0 + std::abs(value)); }

struct ActiveSet {
  std::vector<Index> indices;  ///< sorted ascending, never empty
  double value = 0.0;          ///< phi(x)
  double tol = 0.0;            ///< tolerance the set was computed with
};

ActiveSet active_set(const BrenierPotential& phi, const Vector& x);
ActiveSet active_set(const BrenierPotential& phi, const Vector& x, double tol_act);

/// Uniform average of the active atoms; always a subgradient at x.
Vector monge_map(const BrenierPotential& phi, const Vector& x);
Matrix monge_map(const BrenierPotential& phi, const Matrix& X);

/// Legendre conjugate, finite exactly on conv{y_k}:
///   phi*(y) = min { sum_k l_k (0.5*|y_k|^2 - g_k) : l in simplex, sum_k l_k y_k = y },
/// and +infinity outside the hull.
double conjugate(const BrenierPotential& phi, const Vector& y);

/// Raise every offset to the largest value that leaves the pointwise maximum
/// unchanged. Afterwards every piece touches the graph and the conjugate at
/// each atom equals 0.5*|y_j|^2 - g_j.
BrenierPotential tighten(const BrenierPotential& phi);

/// prox_{lambda*phi}(x): unique minimizer of 0.5*|z-x|^2 + lambda*phi(z).
/// The returned point carries an optimality certificate: (x-z)/lambda lies in
/// the convex hull of the atoms active at z with membership residual <= 1e-8.
Vector prox(const BrenierPotential& phi, double lambda, const Vector& x);

struct PushforwardReport {
  double max_affine_residual = 0.0;  ///< max |A_j(x_i) - phi(x_i)| over active plan cells
  Index violations = 0;              ///< cells with residual above 1e-8
  bool permutation = false;          ///< plan is a scaled permutation
  double max_map_deviation = 0.0;    ///< permutation case: max |T(x_i) - y_sigma(i)|
};

/// Check that the potential built from a transport solution is consistent
/// with the plan: every active cell's piece attains the max, and when the
/// plan is an assignment, the induced map sends each sample to its partner.
PushforwardReport pushforward_check(const BrenierPotential& phi, const OtSolution& sol,
                                    const PointCloudMeasure& mu,
                                    const PointCloudMeasure& nu);

/// JSON {"atoms": [[..]], "g": [..], "tightened": bool}.
void write_potential_json(const BrenierPotential& phi, const std::string& path);
BrenierPotential read_potential_json(const std::string& path);

}  // namespace ot
