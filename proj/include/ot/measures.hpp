#pragma once

// Finitely supported probability measures and the population distributions
// used by the experiments. Sampling is a pure function of (spec, n, seed,
// stream); see ot/rng.hpp for the generator contract.

#include "ot/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ot {

/// Discrete probability measure: n atoms in R^d with positive weights
/// summing to one (1e-12 absolute).
struct PointCloudMeasure {
  Matrix points;   ///< n x d atom coordinates
  Vector weights;  ///< n positive weights

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
  void check() const;  ///< throws std::invalid_argument on invariant violations
};

/// Validating constructor: merges exactly-equal atoms, drops zero weights,
/// rejects weights below 1e-15 after normalization.
PointCloudMeasure make_measure(const Matrix& points, const Vector& weights);

/// Max Euclidean atom norm.
double support_radius(const PointCloudMeasure& m);

enum class SpecKind {
  UniformBox,       ///< uniform on an axis-aligned box
  UniformTwoBoxes,  ///< mixture of two disjoint boxes (disconnected support)
  UniformAnnulus,   ///< uniform on a planar annulus
  FiniteAtoms,      ///< fixed discrete distribution
  Product1d,        ///< independent axes, each uniform on one or two intervals
};

struct Interval {
  double lo = 0.0, hi = 1.0;
};

/// Population distribution with compact support, computable support radius
/// and (for absolutely continuous kinds) a density upper bound.
struct DistributionSpec {
  SpecKind kind = SpecKind::UniformBox;
  Index dim = 1;

  Vector lo, hi;        // UniformBox / first box of UniformTwoBoxes
  Vector lo2, hi2;      // second box
  double w1 = 0.5;      // mixture weight of the first box

  Vector center;        // UniformAnnulus
  double r_inner = 0.0;
  double r_outer = 1.0;

  Matrix atoms;         // FiniteAtoms
  Vector atom_weights;

  std::vector<std::vector<Interval>> axes;  // Product1d: 1 or 2 disjoint intervals per axis

  static DistributionSpec uniform_box(const Vector& lo, const Vector& hi);
  static DistributionSpec uniform_two_boxes(const Vector& lo1, const Vector& hi1,
                                            const Vector& lo2, const Vector& hi2,
                                            double w1 = 0.5);
  static DistributionSpec uniform_annulus(const Vector& center, double r_inner,
                                          double r_outer);
  static DistributionSpec finite_atoms(const Matrix& atoms, const Vector& weights);
  static DistributionSpec product_1d(std::vector<std::vector<Interval>> axes);

  void check() const;
  double support_radius() const;
  /// Density upper bound M for absolutely continuous kinds; throws for
  /// FiniteAtoms.
  double density_bound() const;
};

/// n i.i.d. draws with uniform weights 1/n. Deterministic in
/// (spec, n, seed, stream); atoms are not deduplicated.
PointCloudMeasure sample(const DistributionSpec& spec, Index n, std::uint64_t seed,
                         std::uint64_t stream = 0);

enum class FileFormat { Csv, Json };

/// CSV header is `w,x1,...,xd`; JSON mirrors the struct fields
/// ({"dim":d,"points":[[...]],"weights":[...]}). Round trips are lossless
/// to 1e-15 per coordinate.
PointCloudMeasure read_measure(const std::string& path, FileFormat fmt);
void write_measure(const PointCloudMeasure& m, const std::string& path, FileFormat fmt);

}  // namespace ot
