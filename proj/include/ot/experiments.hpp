#pragma once

// Ground-truth oracles and rate experiments.
//
// The 1-d oracle is the monotone rearrangement T = Q_nu ∘ F_mu between
// populations with piecewise-affine CDFs; the 2-d semi-discrete oracle is a
// semidual solve on a fine quadrature grid. Rate runners sample empirical
// measures, estimate the map (or coupling), measure the error against the
// oracle by Monte Carlo, and summarize medians, log-log slopes and rate
// envelopes. All runs are pure functions of (config, seed).

#include "ot/bounds.hpp"
#include "ot/brenier.hpp"
#include "ot/common.hpp"
#include "ot/measures.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ot {

inline constexpr const char* kOtmapVersion = "0.1.0";

/// On [x0, x1] the transport map interpolates affinely from t0 to t1.
struct MapSegment {
  double x0, x1, t0, t1;
};

/// Monotone rearrangement between 1-d populations: T = Q_nu ∘ F_mu with the
/// standard conventions (right-continuous CDF, left-continuous quantile).
/// potential(x) = ∫_0^x T(t) dt is convex with derivative T a.e.
struct Oracle1D {
  std::vector<MapSegment> segments;  ///< ascending, contiguous up to gaps
  bool discrete_target = false;
  /// Finite targets only: exact max-affine potential with the same gradient.
  BrenierPotential atom_potential;

  double map(double x) const;
  Vector map(const Vector& xs) const;
  double potential(double x) const;
  /// Mass-centered source quantiles Q_mu((k+1/2)/K), ascending.
  Vector source_quantiles(Index K) const;

  // internal: source intervals and potential prefix values per segment
  Vector piece_lo, piece_hi, piece_w;
  Vector prefix;
  double phi_at_zero = 0.0;
};

/// Build the 1-d oracle. Sources must be absolutely continuous (uniform box,
/// two boxes, or a 1-axis product); targets may additionally be finite.
Oracle1D oracle_1d(const DistributionSpec& mu, const DistributionSpec& nu);

/// Reference potential for a semi-discrete pair (continuous mu, finite nu):
/// semidual minimization over a cell-centered k^d quadrature grid of the
/// source box, tightened. The cell-mass residual is bounded by the grid
/// granularity (a boundary band of one cell width).
struct SemidiscreteReference {
  BrenierPotential potential;
  double cell_mass_residual = 0.0;  ///< ‖grid cell masses − b‖₂
  Index grid_points = 0;
  Index grid_side = 0;
};
SemidiscreteReference oracle_semidiscrete_ref(const DistributionSpec& mu_spec,
                                              const PointCloudMeasure& nu,
                                              Index n_ref);

enum class Scenario {
  MapRate1d,
  MapRate2dSemidiscrete,
  CouplingRate,
  Figure1Demo,
};
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct ExperimentConfig {
  Scenario scenario = Scenario::MapRate1d;
  DistributionSpec mu;
  DistributionSpec nu;
  std::vector<Index> n_grid;  ///< ascending sample sizes
  std::vector<Index> m_grid;  ///< empty: m = n; one entry: fixed; else paired
  Index trials = 1;
  std::uint64_t seed = 0;
  Index mc_points = 100000;  ///< Monte-Carlo budget for error integrals
  Index ref_points = 0;      ///< oracle grid size; 0 = scenario default
  Index grid_side = 161;     ///< figure1 evaluation lattice side
  bool check_reference = false;  ///< semi-discrete: also build a 4x reference
  std::string output;            ///< directory for CSV/JSON artifacts; "" = none

  void check() const;
  Index resolved_m(size_t idx) const;
  Index resolved_ref_points() const;

  static ExperimentConfig map_rate_1d_defaults();
  static ExperimentConfig semidiscrete_defaults();
  static ExperimentConfig coupling_defaults();
  static ExperimentConfig figure1_defaults();
};

/// Per-trial RNG streams: channel 0 draws mu-hat, 1 draws nu-hat, 2 the
/// Monte-Carlo evaluation points. Records carry the channel-0 value.
std::uint64_t trial_stream(Index n, Index trial, int channel);

struct RateRecord {
  Index n = 0, m = 0;
  Index trial = 0;
  std::uint64_t seed = 0;
  double error_value = 0.0;  ///< L1(mu) map error, or coupling W2
  std::string oracle_kind;
  double wall_time_ms = 0.0;
};

struct RateSummary {
  std::vector<Index> n_levels;
  Vector medians;
  Vector means;
  double slope = 0.0;  ///< log-log LS fit over the upper half of the grid
  double envelope_exponent = 0.0;
  double envelope_constant = 0.0;  ///< fitted at the smallest n
  bool envelope_ok = false;        ///< all medians under the envelope
  Index inversions = 0;            ///< strict median increases along the grid
  double reference_drift = -1.0;   ///< 4x-grid map disagreement; -1 = unchecked
};

struct RateResult {
  std::vector<RateRecord> records;
  RateSummary summary;
  std::vector<std::string> files;  ///< artifacts written (when output set)
};

RateResult run_map_rate(const ExperimentConfig& cfg);
RateResult run_coupling_rate(const ExperimentConfig& cfg);

struct Figure1Result {
  std::vector<Index> n_levels;
  std::vector<Index> distinct_values;  ///< distinct map images per level
  std::vector<double> boundary_shift;  ///< cell disagreement mass, consecutive levels
  Index grid_side = 0;
  std::vector<std::string> files;
};
Figure1Result run_figure1(const ExperimentConfig& cfg);

/// Header `n,m,trial,seed,error_value,oracle_kind,wall_time_ms`.
void write_records_csv(const std::vector<RateRecord>& records,
                       const std::string& path);
void write_summary_json(const RateSummary& summary, const std::string& path);
/// Reproducibility manifest: config echo, seed, version, artifact list.
void write_manifest(const ExperimentConfig& cfg,
                    const std::vector<std::string>& outputs,
                    const std::string& path);

}  // namespace ot
