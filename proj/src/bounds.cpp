#include "ot/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ot/linprog.hpp"
#include "ot/rng.hpp"

namespace ot {

CouplingMeasure coupling_from(const TransportPlan& plan,
                              const PointCloudMeasure& mu,
                              const PointCloudMeasure& nu) {
  require(plan.n == mu.size() && plan.m == nu.size(),
          "coupling_from: plan shape does not match the measures");
  require(mu.dim() == nu.dim(), "coupling_from: dimension mismatch");
  const Index d = mu.dim();
  const Index k = Index(plan.entries.size());
  require(k > 0, "coupling_from: empty plan");

  CouplingMeasure out;
  out.pairs.resize(k, 2 * d);
  out.masses.resize(k);
  for (Index e = 0; e < k; ++e) {
    const PlanEntry& cell = plan.entries[size_t(e)];
    out.pairs.row(e).head(d) = mu.points.row(cell.i);
    out.pairs.row(e).tail(d) = nu.points.row(cell.j);
    out.masses[e] = cell.mass;
  }
  ensure(std::abs(out.masses.sum() - 1.0) <= 1e-10,
         "coupling_from: masses do not sum to one");
  return out;
}

double wasserstein(const PointCloudMeasure& mu, const PointCloudMeasure& nu,
                   int order) {
  require(order == 1 || order == 2, "wasserstein: order must be 1 or 2");
  require(mu.dim() == nu.dim(), "wasserstein: dimension mismatch");
  if (order == 2) {
    const OtSolution sol = solve(mu, nu);
    return std::sqrt(std::max(0.0, 2.0 * sol.primal_value));
  }
  const Index n = mu.size();
  const Index m = nu.size();
  require(n * m <= 25'000'000, "wasserstein: dense cost matrix too large");
  Matrix C(n, m);
  for (Index j = 0; j < m; ++j)
    C.col(j) = (mu.points.rowwise() - nu.points.row(j)).rowwise().norm();
  return solve_with_cost(C, mu.weights, nu.weights).primal_value;
}

double coupling_w2(const CouplingMeasure& g1, const CouplingMeasure& g2) {
  require(g1.pair_dim() == g2.pair_dim(), "coupling_w2: dimension mismatch");
  require(g1.size() * g2.size() <= 10'000'000,
          "coupling_w2: support size product exceeds 1e7");
  const PointCloudMeasure m1 = make_measure(g1.pairs, g1.masses);
  const PointCloudMeasure m2 = make_measure(g2.pairs, g2.masses);
  return wasserstein(m1, m2, 2);
}

BoundConstants constants(double R, double M, Index d, double q) {
  require(R > 0.0, "constants: R must be positive");
  require(M > 0.0, "constants: M must be positive");
  require(d >= 1, "constants: d must be at least 1");
  require(q >= 1.0 && q <= 2.0, "constants: q must lie in [1,2]");

  const double pi = 3.14159265358979323846;
  const double e = std::exp(1.0);
  const double half_d1 = 0.5 * double(d) + 1.0;
  const double c_rd = 4.0 * e / (std::sqrt(2.0 * pi) * std::sqrt(half_d1)) *
                      std::pow(pi * e * 64.0 / half_d1, 0.5 * double(d)) *
                      48.0 * double(d) * double(d) *
                      std::pow(2.0 * R, double(d) - 1.0);

  BoundConstants c;
  c.R = R;
  c.M = M;
  c.L = 2.0 * R;
  c.q = q;
  c.d = d;
  c.C_Rd = c_rd;
  c.C_cor45 = std::max(268.0 * std::sqrt(R),
                       4.0 * std::pow(8.0 * R * R * R * M * c_rd, 0.25));
  return c;
}

double case_threshold(const BoundConstants& c, double q) {
  return std::pow(c.R / 8.0, (q + 3.0) / (q + 1.0)) * 2.0 * c.L *
         std::pow(c.M * c.C_Rd, 2.0 / (q + 1.0));
}

double case1_bound(const BoundConstants& c, double q, double delta) {
  return 4.0 * std::sqrt(c.L / c.R) * std::sqrt(delta) +
         c.L * std::pow(32.0 * delta / (c.R * c.L), (q + 1.0) / (2.0 * q));
}

double case2_bound(const BoundConstants& c, double q, double delta) {
  return 4.0 * std::pow(std::pow(c.L, q + 2.0) * c.M * c.C_Rd * delta,
                        1.0 / (q + 3.0));
}

CarlierRemainder carlier_remainder(const BrenierPotential& phi, const Vector& x,
                                   const Vector& p, double lambda) {
  require(lambda > 0.0, "carlier_remainder: lambda must be positive");
  require(x.size() == phi.dim() && p.size() == phi.dim(),
          "carlier_remainder: dimension mismatch");
  CarlierRemainder out;
  const double conj = conjugate(phi, p);
  out.lhs = std::isfinite(conj)
                ? eval(phi, x) + conj - x.dot(p)
                : std::numeric_limits<double>::infinity();
  const Vector z = prox(phi, lambda, x + lambda * p);
  out.rhs = (x - z).squaredNorm() / lambda;
  return out;
}

double dual_gap(const BrenierPotential& phi, const BrenierPotential& phibar,
                const PointCloudMeasure& mu_samples,
                const PointCloudMeasure& nu) {
  require(phi.dim() == phibar.dim() && phi.dim() == mu_samples.dim() &&
              phi.dim() == nu.dim(),
          "dual_gap: dimension mismatch");
  const Vector phi_mu = eval(phi, mu_samples.points);
  const Vector phibar_mu = eval(phibar, mu_samples.points);
  double gap = mu_samples.weights.dot(phi_mu - phibar_mu);
  for (Index j = 0; j < nu.size(); ++j) {
    const Vector y = nu.points.row(j).transpose();
    gap += nu.weights[j] * (conjugate(phi, y) - conjugate(phibar, y));
  }
  ensure(gap >= -1e-6, "dual_gap: negative gap indicates a non-optimal oracle");
  return gap;
}

ErrorBoundReport error_bound_check(const BrenierPotential& phi,
                                   const BrenierPotential& phibar,
                                   const Matrix& mu_samples,
                                   const BoundConstants& c, double q) {
  require(q >= 1.0 && q <= 2.0, "error_bound_check: q must lie in [1,2]");
  require(mu_samples.cols() == phi.dim() && phi.dim() == phibar.dim(),
          "error_bound_check: dimension mismatch");
  const Index n = mu_samples.rows();
  require(n > 0, "error_bound_check: no samples");

  const Matrix grad_bar = monge_map(phibar, mu_samples);
  const Matrix grad_phi = monge_map(phi, mu_samples);

  // L^q(mu) distance of the gradient selections, with the standard error of
  // the mean of ‖·‖^q propagated through the final power.
  const Vector dq = (grad_bar - grad_phi).rowwise().norm().array().pow(q);
  const double mean_q = dq.mean();
  const double var_q = (dq.array() - mean_q).square().sum() / double(n);
  const double se_mean = std::sqrt(var_q / double(n));
  const double lhs = std::pow(mean_q, 1.0 / q);
  const double lhs_se =
      mean_q > 0.0 ? se_mean * lhs / (q * mean_q) : se_mean;

  // Fenchel-Young remainder delta = E[phi(x) + phi*(∇φ̄(x)) − <x, ∇φ̄(x)>].
  // ∇φ̄ lands on a φ̄ atom off the tie set, so conjugate values are cached
  // per atom; mixed-face points fall back to a direct evaluation.
  const Vector phi_vals = eval(phi, mu_samples);
  std::vector<double> atom_conj(static_cast<size_t>(phibar.size()),
                                std::numeric_limits<double>::quiet_NaN());
  double delta = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Vector x = mu_samples.row(i).transpose();
    const Vector p = grad_bar.row(i).transpose();
    const ActiveSet act = active_set(phibar, x);
    double conj;
    if (act.indices.size() == 1) {
      const size_t k = size_t(act.indices[0]);
      if (std::isnan(atom_conj[k])) atom_conj[k] = conjugate(phi, p);
      conj = atom_conj[k];
    } else {
      conj = conjugate(phi, p);
    }
    delta += phi_vals[i] + conj - x.dot(p);
  }
  delta /= double(n);

  ErrorBoundReport rep;
  rep.lhs = lhs;
  rep.lhs_stderr = lhs_se;
  rep.delta = delta;
  rep.threshold = case_threshold(c, q);
  if (delta > rep.threshold) {
    rep.bound_case = 1;
    rep.rhs = case1_bound(c, q, delta);
  } else {
    rep.bound_case = 2;
    rep.rhs = case2_bound(c, q, delta);
  }
  rep.holds = rep.lhs <= rep.rhs + 1e-6 * (1.0 + rep.rhs);
  return rep;
}

namespace {

// Greedy net: walk the detected points, opening a radius-`radius` ball at
// every point not yet covered.
Index greedy_cover_count(const Matrix& pts, double radius) {
  std::vector<Index> centers;
  for (Index i = 0; i < pts.rows(); ++i) {
    bool covered = false;
    for (const Index c : centers) {
      if ((pts.row(i) - pts.row(c)).norm() <= radius) {
        covered = true;
        break;
      }
    }
    if (!covered) centers.push_back(i);
  }
  return Index(centers.size());
}

}  // namespace

CoveringReport covering_check(const BrenierPotential& phi, double R, double eta,
                              double alpha, double grid_step) {
  const Index d = phi.dim();
  require(d <= 3, "covering_check: d > 3 grids are not feasible at desk scale");
  require(R > 0.0 && eta > 0.0 && alpha > 0.0,
          "covering_check: R, eta, alpha must be positive");
  require(grid_step > 0.0 && grid_step <= eta / 4.0 + 1e-15,
          "covering_check: grid step must not exceed eta/4");

  const Index steps = Index(std::floor(2.0 * R / grid_step)) + 1;
  double total = 1.0;
  for (Index k = 0; k < d; ++k) total *= double(steps);
  require(total <= 5e6, "covering_check: grid too fine");

  // Fixed ball-sampling offsets: 32 points uniform in the unit ball plus the
  // center, scaled by eta and reused at every grid point.
  Rng rng(0x5eedc0de, 7);
  std::vector<Vector> offsets;
  offsets.push_back(Vector::Zero(d));
  while (offsets.size() < 33) {
    Vector u(d);
    for (Index k = 0; k < d; ++k) u[k] = rng.uniform(-1.0, 1.0);
    if (u.norm() <= 1.0) offsets.push_back(eta * u);
  }

  // Detect grid points whose sampled subdifferential diameter reaches alpha.
  std::vector<Vector> detected;
  std::vector<Index> idx(static_cast<size_t>(d), 0);
  Vector x(d);
  std::vector<char> active(static_cast<size_t>(phi.size()), 0);
  while (true) {
    for (Index k = 0; k < d; ++k) x[k] = -R + grid_step * double(idx[size_t(k)]);
    if (x.norm() <= R) {
      std::fill(active.begin(), active.end(), char(0));
      for (const Vector& off : offsets) {
        const ActiveSet act = active_set(phi, x + off);
        for (const Index a : act.indices) active[size_t(a)] = 1;
      }
      double diam = 0.0;
      for (Index a = 0; a < phi.size(); ++a) {
        if (!active[size_t(a)]) continue;
        for (Index b = a + 1; b < phi.size(); ++b) {
          if (!active[size_t(b)]) continue;
          diam = std::max(diam, (phi.atoms.row(a) - phi.atoms.row(b)).norm());
        }
      }
      if (diam >= alpha) detected.push_back(x);
    }
    Index k = 0;
    while (k < d && ++idx[size_t(k)] == steps) idx[size_t(k++)] = 0;
    if (k == d) break;
  }

  Matrix det(Index(detected.size()), d);
  for (Index i = 0; i < det.rows(); ++i) det.row(i) = detected[size_t(i)];

  const double lip = phi.size() > 0 ? phi.atoms.rowwise().norm().maxCoeff() : 0.0;
  CoveringReport rep;
  rep.detected_points = det.rows();
  rep.estimated_count = greedy_cover_count(det, 8.0 * eta);
  rep.theorem_bound = 48.0 * double(d) * double(d) *
                      std::pow(R + 4.0 * eta, double(d) - 1.0) * lip /
                      (alpha * std::pow(eta, double(d) - 1.0));
  ensure(double(rep.estimated_count) <= rep.theorem_bound,
         "covering_check: greedy count exceeded the theorem bound");
  return rep;
}

}  // namespace ot
