#include "ot/experiments.hpp"

#include "ot/rng.hpp"
#include "ot/semidiscrete.hpp"
#include "ot/transport.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <utility>

namespace ot {

namespace {

struct Piece {
  double lo, hi, w;
};

// Canonical interval decomposition of an absolutely continuous 1-d spec:
// disjoint intervals ascending with positive masses summing to one.
std::vector<Piece> ac_pieces(const DistributionSpec& spec, const char* side) {
  spec.check();
  require(spec.dim == 1,
          std::string("oracle_1d: ") + side + " must be one dimensional");
  std::vector<Piece> ps;
  switch (spec.kind) {
    case SpecKind::UniformBox:
      ps.push_back({spec.lo[0], spec.hi[0], 1.0});
      break;
    case SpecKind::UniformTwoBoxes:
      ps.push_back({spec.lo[0], spec.hi[0], spec.w1});
      ps.push_back({spec.lo2[0], spec.hi2[0], 1.0 - spec.w1});
      break;
    case SpecKind::Product1d: {
      const auto& ax = spec.axes[0];
      double len = 0.0;
      for (const auto& iv : ax) len += iv.hi - iv.lo;
      for (const auto& iv : ax)
        ps.push_back({iv.lo, iv.hi, (iv.hi - iv.lo) / len});
      break;
    }
    default:
      throw std::invalid_argument(std::string("oracle_1d: unsupported ") +
                                  side + " distribution kind");
  }
  std::sort(ps.begin(), ps.end(),
            [](const Piece& a, const Piece& b) { return a.lo < b.lo; });
  for (size_t i = 1; i < ps.size(); ++i)
    require(ps[i - 1].hi <= ps[i].lo,
            std::string("oracle_1d: ") + side + " intervals overlap");
  return ps;
}

std::vector<double> cumulative(const std::vector<Piece>& ps) {
  std::vector<double> cum(ps.size());
  double acc = 0.0;
  for (size_t i = 0; i < ps.size(); ++i) {
    acc += ps[i].w;
    cum[i] = acc;
  }
  cum.back() = 1.0;
  return cum;
}

// Left-continuous quantile inf{x : F(x) >= u}; lands on the closing endpoint
// when u sits exactly on a piece boundary.
double quantile_minus(const std::vector<Piece>& ps,
                      const std::vector<double>& cum, double u) {
  size_t i = 0;
  while (i + 1 < ps.size() && u > cum[i] + 1e-15) ++i;
  const double prev = i == 0 ? 0.0 : cum[i - 1];
  return ps[i].lo + (u - prev) / ps[i].w * (ps[i].hi - ps[i].lo);
}

// Right limit of the quantile: at a boundary level the next piece opens.
double quantile_plus(const std::vector<Piece>& ps,
                     const std::vector<double>& cum, double u) {
  size_t i = 0;
  while (i + 1 < ps.size() && u >= cum[i] - 1e-15) ++i;
  const double prev = i == 0 ? 0.0 : cum[i - 1];
  return ps[i].lo + (u - prev) / ps[i].w * (ps[i].hi - ps[i].lo);
}

std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

Oracle1D oracle_1d(const DistributionSpec& mu, const DistributionSpec& nu) {
  const std::vector<Piece> src = ac_pieces(mu, "source");
  const std::vector<double> scum = cumulative(src);

  Oracle1D o;
  o.piece_lo.resize(Index(src.size()));
  o.piece_hi.resize(Index(src.size()));
  o.piece_w.resize(Index(src.size()));
  for (size_t i = 0; i < src.size(); ++i) {
    o.piece_lo[Index(i)] = src[i].lo;
    o.piece_hi[Index(i)] = src[i].hi;
    o.piece_w[Index(i)] = src[i].w;
  }

  // Target representation: sorted atoms with cumulative masses, or interval
  // pieces for absolutely continuous targets.
  std::vector<double> ys, tw, tcum;
  std::vector<Piece> tgt;
  if (nu.kind == SpecKind::FiniteAtoms) {
    nu.check();
    require(nu.dim == 1, "oracle_1d: target must be one dimensional");
    std::vector<std::pair<double, double>> aw;
    for (Index j = 0; j < nu.atoms.rows(); ++j)
      aw.emplace_back(nu.atoms(j, 0), nu.atom_weights[j]);
    std::sort(aw.begin(), aw.end());
    for (const auto& [y, w] : aw) {
      if (!ys.empty() && y == ys.back()) {
        tw.back() += w;
      } else {
        ys.push_back(y);
        tw.push_back(w);
      }
    }
    double acc = 0.0;
    for (double w : tw) {
      acc += w;
      tcum.push_back(acc);
    }
    tcum.back() = 1.0;
    o.discrete_target = true;
  } else {
    tgt = ac_pieces(nu, "target");
  }
  const std::vector<double> tgt_cum = tgt.empty() ? std::vector<double>{} : cumulative(tgt);

  // Mass levels where either side has a kink.
  std::vector<double> levels{0.0, 1.0};
  for (size_t i = 0; i + 1 < scum.size(); ++i) levels.push_back(scum[i]);
  if (o.discrete_target) {
    for (size_t j = 0; j + 1 < tcum.size(); ++j) levels.push_back(tcum[j]);
  } else {
    for (size_t i = 0; i + 1 < tgt_cum.size(); ++i) levels.push_back(tgt_cum[i]);
  }
  std::sort(levels.begin(), levels.end());
  std::vector<double> uniq;
  for (double u : levels)
    if (uniq.empty() || u - uniq.back() > 1e-14) uniq.push_back(u);

  // Quantile of the target at a level (left-continuous), used for bridges.
  auto target_minus = [&](double u) {
    if (o.discrete_target) {
      size_t j = 0;
      while (j + 1 < ys.size() && u > tcum[j] + 1e-15) ++j;
      return ys[j];
    }
    return quantile_minus(tgt, tgt_cum, u);
  };

  for (size_t p = 0; p + 1 < uniq.size(); ++p) {
    const double u0 = uniq[p], u1 = uniq[p + 1];
    MapSegment s;
    s.x0 = quantile_plus(src, scum, u0);
    s.x1 = quantile_minus(src, scum, u1);
    if (o.discrete_target) {
      size_t j = 0;
      while (j + 1 < ys.size() && u0 >= tcum[j] - 1e-15) ++j;
      s.t0 = s.t1 = ys[j];
    } else {
      s.t0 = quantile_plus(tgt, tgt_cum, u0);
      s.t1 = quantile_minus(tgt, tgt_cum, u1);
    }
    // A source support gap carries no mass; bridge it with the constant
    // quantile at the gap level so the map stays defined and monotone.
    if (!o.segments.empty() && s.x0 > o.segments.back().x1) {
      const double tb = target_minus(u0);
      o.segments.push_back({o.segments.back().x1, s.x0, tb, tb});
    }
    o.segments.push_back(s);
  }
  ensure(!o.segments.empty(), "oracle_1d: empty rearrangement");

  // Exact trapezoid prefix integrals (the map is affine per segment).
  o.prefix.resize(Index(o.segments.size()) + 1);
  o.prefix[0] = 0.0;
  for (size_t s = 0; s < o.segments.size(); ++s) {
    const MapSegment& seg = o.segments[s];
    o.prefix[Index(s) + 1] =
        o.prefix[Index(s)] + (seg.x1 - seg.x0) * 0.5 * (seg.t0 + seg.t1);
  }
  o.phi_at_zero = 0.0;
  o.phi_at_zero = o.potential(0.0);

  if (o.discrete_target) {
    // Closed-form potential: offsets chosen so slope j hands over to slope
    // j+1 exactly at the cell boundary Q_mu(B_j).
    const Index m = Index(ys.size());
    Vector g(m);
    double c = 0.0;
    g[0] = c + 0.5 * ys[0] * ys[0];
    for (Index j = 1; j < m; ++j) {
      const double boundary = quantile_minus(src, scum, tcum[size_t(j) - 1]);
      c -= boundary * (ys[size_t(j)] - ys[size_t(j) - 1]);
      g[j] = c + 0.5 * ys[size_t(j)] * ys[size_t(j)];
    }
    g.array() -= g[m - 1];
    Matrix ym(m, 1);
    for (Index j = 0; j < m; ++j) ym(j, 0) = ys[size_t(j)];
    o.atom_potential = tighten(from_dual(ym, g));
  }
  return o;
}

double Oracle1D::map(double x) const {
  require(!segments.empty(), "oracle map is empty");
  if (x <= segments.front().x0) return segments.front().t0;
  if (x >= segments.back().x1) return segments.back().t1;
  size_t lo = 0, hi = segments.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi) / 2;
    if (segments[mid].x1 < x) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  const MapSegment& s = segments[lo];
  if (s.x1 <= s.x0) return s.t0;
  const double w = (x - s.x0) / (s.x1 - s.x0);
  return s.t0 + w * (s.t1 - s.t0);
}

Vector Oracle1D::map(const Vector& xs) const {
  Vector out(xs.size());
  for (Index i = 0; i < xs.size(); ++i) out[i] = map(xs[i]);
  return out;
}

double Oracle1D::potential(double x) const {
  require(!segments.empty(), "oracle map is empty");
  double raw;
  if (x <= segments.front().x0) {
    raw = (x - segments.front().x0) * segments.front().t0;
  } else if (x >= segments.back().x1) {
    raw = prefix[Index(segments.size())] +
          (x - segments.back().x1) * segments.back().t1;
  } else {
    size_t lo = 0, hi = segments.size() - 1;
    while (lo < hi) {
      const size_t mid = (lo + hi) / 2;
      if (segments[mid].x1 < x) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    const MapSegment& s = segments[lo];
    const double dx = x - s.x0;
    const double slope = s.x1 > s.x0 ? (s.t1 - s.t0) / (s.x1 - s.x0) : 0.0;
    raw = prefix[Index(lo)] + dx * s.t0 + 0.5 * slope * dx * dx;
  }
  return raw - phi_at_zero;
}

Vector Oracle1D::source_quantiles(Index K) const {
  require(K >= 1, "quantile count must be positive");
  const Index P = piece_lo.size();
  Vector out(K);
  for (Index k = 0; k < K; ++k) {
    const double u = (double(k) + 0.5) / double(K);
    Index i = 0;
    double cum = piece_w[0];
    while (i + 1 < P && u > cum + 1e-15) cum += piece_w[++i];
    const double prev = cum - piece_w[i];
    out[k] = piece_lo[i] + (u - prev) / piece_w[i] * (piece_hi[i] - piece_lo[i]);
  }
  return out;
}

SemidiscreteReference oracle_semidiscrete_ref(const DistributionSpec& mu_spec,
                                              const PointCloudMeasure& nu,
                                              Index n_ref) {
  mu_spec.check();
  nu.check();
  require(mu_spec.kind == SpecKind::UniformBox,
          "semi-discrete reference requires a uniform-box source");
  const Index d = mu_spec.dim;
  require(d == nu.dim(), "semi-discrete reference: dimension mismatch");
  require(d <= 2, "semi-discrete reference grids supported for d <= 2");
  require(d == 1 ? n_ref >= 1000 : n_ref >= 100000,
          "semi-discrete reference grid too coarse");

  const Index k =
      d == 1 ? n_ref : Index(std::ceil(std::sqrt(double(n_ref)) - 1e-9));
  const Index total = d == 1 ? k : k * k;
  require(total * nu.size() <= 25'000'000,
          "semi-discrete reference instance too large");

  Matrix grid(total, d);
  if (d == 1) {
    for (Index i = 0; i < k; ++i)
      grid(i, 0) = mu_spec.lo[0] +
                   (mu_spec.hi[0] - mu_spec.lo[0]) * (double(i) + 0.5) / double(k);
  } else {
    Index r = 0;
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < k; ++j, ++r) {
        grid(r, 0) = mu_spec.lo[0] +
                     (mu_spec.hi[0] - mu_spec.lo[0]) * (double(i) + 0.5) / double(k);
        grid(r, 1) = mu_spec.lo[1] +
                     (mu_spec.hi[1] - mu_spec.lo[1]) * (double(j) + 0.5) / double(k);
      }
  }

  SemiDual sd;
  sd.target = nu;
  sd.source_samples =
      make_measure(grid, Vector::Constant(total, 1.0 / double(total)));
  sd.g = Vector::Zero(nu.size());
  const MinimizeReport rep = minimize(sd, 1e-10, 300);
  ensure(rep.converged, "semi-discrete reference solve did not converge");
  // One boundary band of cells bounds how far the quadrature masses can sit
  // from b at the optimum.
  ensure(rep.subgradient_norm <= 8.0 * double(nu.size()) / double(k),
         "semi-discrete reference residual above grid tolerance");

  SemidiscreteReference ref;
  ref.potential = tighten(from_dual(nu, rep.g));
  ref.cell_mass_residual = rep.subgradient_norm;
  ref.grid_points = total;
  ref.grid_side = k;
  return ref;
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::MapRate1d:
      return "map-rate-1d";
    case Scenario::MapRate2dSemidiscrete:
      return "map-rate-2d-semidiscrete";
    case Scenario::CouplingRate:
      return "coupling-rate";
    case Scenario::Figure1Demo:
      return "figure1-demo";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "map-rate-1d") return Scenario::MapRate1d;
  if (name == "map-rate-2d-semidiscrete") return Scenario::MapRate2dSemidiscrete;
  if (name == "coupling-rate") return Scenario::CouplingRate;
  if (name == "figure1-demo") return Scenario::Figure1Demo;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

void ExperimentConfig::check() const {
  require(!n_grid.empty(), "n_grid must not be empty");
  for (size_t i = 0; i < n_grid.size(); ++i) {
    require(n_grid[i] >= 2, "sample sizes must be at least 2");
    if (i > 0) require(n_grid[i] > n_grid[i - 1], "n_grid must be ascending");
  }
  require(trials >= 1, "trials must be at least 1");
  require(m_grid.empty() || m_grid.size() == 1 || m_grid.size() == n_grid.size(),
          "m_grid must be empty, a single value, or paired with n_grid");
  for (Index m : m_grid) require(m >= 1, "target sizes must be positive");
  require(mc_points >= 100, "mc_points below the minimum of 100");
  require(grid_side >= 3, "grid_side below the minimum of 3");
  mu.check();
  nu.check();
}

Index ExperimentConfig::resolved_m(size_t idx) const {
  if (m_grid.empty()) return n_grid[idx];
  if (m_grid.size() == 1) return m_grid[0];
  return m_grid[idx];
}

Index ExperimentConfig::resolved_ref_points() const {
  if (ref_points > 0) return ref_points;
  return scenario == Scenario::CouplingRate ? 2000 : 100000;
}

ExperimentConfig ExperimentConfig::map_rate_1d_defaults() {
  ExperimentConfig c;
  c.scenario = Scenario::MapRate1d;
  c.mu = DistributionSpec::uniform_box(Vector::Constant(1, 0.0),
                                       Vector::Constant(1, 1.0));
  c.nu = DistributionSpec::uniform_box(Vector::Constant(1, 2.0),
                                       Vector::Constant(1, 3.0));
  c.n_grid = {50, 100, 200, 400, 800, 1600, 3200};
  c.trials = 20;
  c.seed = 1234501;
  return c;
}

namespace {

Matrix default_square_atoms() {
  Matrix atoms(4, 2);
  atoms << 0.2, 0.3, -0.4, 0.1, 0.1, -0.5, -0.2, -0.15;
  return atoms;
}

}  // namespace

ExperimentConfig ExperimentConfig::semidiscrete_defaults() {
  ExperimentConfig c;
  c.scenario = Scenario::MapRate2dSemidiscrete;
  c.mu = DistributionSpec::uniform_box(Vector::Constant(2, -1.0),
                                       Vector::Constant(2, 1.0));
  Vector b(4);
  b << 0.3, 0.3, 0.2, 0.2;
  c.nu = DistributionSpec::finite_atoms(default_square_atoms(), b);
  c.n_grid = {100, 200, 400, 800, 1600, 3200};
  c.trials = 20;
  c.seed = 1234502;
  return c;
}

ExperimentConfig ExperimentConfig::coupling_defaults() {
  ExperimentConfig c;
  c.scenario = Scenario::CouplingRate;
  c.mu = DistributionSpec::uniform_box(Vector::Constant(1, 0.0),
                                       Vector::Constant(1, 1.0));
  c.nu = DistributionSpec::uniform_box(Vector::Constant(1, 2.0),
                                       Vector::Constant(1, 3.0));
  c.n_grid = {12, 25, 50, 100};
  c.trials = 20;
  c.seed = 1234503;
  return c;
}

ExperimentConfig ExperimentConfig::figure1_defaults() {
  ExperimentConfig c;
  c.scenario = Scenario::Figure1Demo;
  c.mu = DistributionSpec::uniform_box(Vector::Constant(2, 0.0),
                                       Vector::Constant(2, 1.0));
  Matrix atoms(4, 2);
  atoms << 0.75, 0.75, 0.25, 0.7, 0.2, 0.2, 0.7, 0.3;
  c.nu = DistributionSpec::finite_atoms(atoms, Vector::Constant(4, 0.25));
  c.n_grid = {100, 1000, 10000};
  c.trials = 1;
  c.seed = 1234504;
  return c;
}

std::uint64_t trial_stream(Index n, Index trial, int channel) {
  return (std::uint64_t(n) << 24) ^ (std::uint64_t(trial) << 4) ^
         std::uint64_t(channel);
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t k = v.size();
  return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

RateSummary summarize(const std::vector<std::vector<double>>& errs,
                      const std::vector<Index>& n_levels, const Vector& v,
                      double exponent) {
  const size_t L = errs.size();
  RateSummary s;
  s.n_levels = n_levels;
  s.medians.resize(Index(L));
  s.means.resize(Index(L));
  for (size_t i = 0; i < L; ++i) {
    s.medians[Index(i)] = median_of(errs[i]);
    double mean = 0.0;
    for (double e : errs[i]) mean += e;
    s.means[Index(i)] = mean / double(errs[i].size());
  }

  s.envelope_exponent = exponent;
  s.envelope_constant = s.medians[0] / std::pow(v[0], exponent);
  s.envelope_ok = true;
  for (size_t i = 0; i < L; ++i) {
    const double env = s.envelope_constant * std::pow(v[Index(i)], exponent);
    if (s.medians[Index(i)] > env * (1.0 + 1e-12)) s.envelope_ok = false;
  }
  s.inversions = 0;
  for (size_t i = 1; i < L; ++i)
    if (s.medians[Index(i)] > s.medians[Index(i) - 1]) ++s.inversions;

  // Log-log slope over the upper half of the grid (transients at small n).
  const size_t start = L >= 4 ? L / 2 : 0;
  if (L - start >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double cnt = double(L - start);
    for (size_t i = start; i < L; ++i) {
      const double lx = std::log(v[Index(i)]);
      const double ly = std::log(std::max(s.medians[Index(i)], 1e-300));
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double denom = cnt * sxx - sx * sx;
    s.slope = denom != 0.0 ? (cnt * sxy - sx * sy) / denom : 0.0;
  }
  return s;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

nlohmann::json spec_json(const DistributionSpec& s) {
  nlohmann::json j;
  j["dim"] = s.dim;
  switch (s.kind) {
    case SpecKind::UniformBox:
      j["kind"] = "uniform-box";
      j["lo"] = std::vector<double>(s.lo.data(), s.lo.data() + s.lo.size());
      j["hi"] = std::vector<double>(s.hi.data(), s.hi.data() + s.hi.size());
      break;
    case SpecKind::UniformTwoBoxes:
      j["kind"] = "uniform-two-boxes";
      j["lo"] = std::vector<double>(s.lo.data(), s.lo.data() + s.lo.size());
      j["hi"] = std::vector<double>(s.hi.data(), s.hi.data() + s.hi.size());
      j["lo2"] = std::vector<double>(s.lo2.data(), s.lo2.data() + s.lo2.size());
      j["hi2"] = std::vector<double>(s.hi2.data(), s.hi2.data() + s.hi2.size());
      j["w1"] = s.w1;
      break;
    case SpecKind::UniformAnnulus:
      j["kind"] = "uniform-annulus";
      j["center"] =
          std::vector<double>(s.center.data(), s.center.data() + s.center.size());
      j["r_inner"] = s.r_inner;
      j["r_outer"] = s.r_outer;
      break;
    case SpecKind::FiniteAtoms: {
      j["kind"] = "finite-atoms";
      auto& rows = j["atoms"];
      for (Index i = 0; i < s.atoms.rows(); ++i) {
        std::vector<double> row(size_t(s.atoms.cols()));
        for (Index c = 0; c < s.atoms.cols(); ++c) row[size_t(c)] = s.atoms(i, c);
        rows.push_back(row);
      }
      j["weights"] = std::vector<double>(
          s.atom_weights.data(), s.atom_weights.data() + s.atom_weights.size());
      break;
    }
    case SpecKind::Product1d: {
      j["kind"] = "product-1d";
      auto& axes = j["axes"];
      for (const auto& ax : s.axes) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& iv : ax) a.push_back({iv.lo, iv.hi});
        axes.push_back(a);
      }
      break;
    }
  }
  return j;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << body;
  ensure(out.good(), "write failed for " + path);
}

std::vector<std::string> write_rate_artifacts(const ExperimentConfig& cfg,
                                              const RateResult& res) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output, ec);
  require(!ec, "cannot create output directory " + cfg.output);
  const std::string rec = cfg.output + "/records.csv";
  const std::string sum = cfg.output + "/summary.json";
  const std::string man = cfg.output + "/manifest.json";
  write_records_csv(res.records, rec);
  write_summary_json(res.summary, sum);
  write_manifest(cfg, {rec, sum}, man);
  return {rec, sum, man};
}

}  // namespace

RateResult run_map_rate(const ExperimentConfig& cfg) {
  cfg.check();
  require(cfg.scenario == Scenario::MapRate1d ||
              cfg.scenario == Scenario::MapRate2dSemidiscrete,
          "run_map_rate: wrong scenario");
  RateResult out;
  const size_t L = cfg.n_grid.size();
  std::vector<std::vector<double>> errs(L);
  Vector v = Vector::Zero(Index(L));

  if (cfg.scenario == Scenario::MapRate1d) {
    const Oracle1D oracle = oracle_1d(cfg.mu, cfg.nu);
    for (size_t li = 0; li < L; ++li) {
      const Index n = cfg.n_grid[li];
      const Index m = cfg.resolved_m(li);
      v[Index(li)] = double(n);
      for (Index t = 0; t < cfg.trials; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        const PointCloudMeasure muh =
            sample(cfg.mu, n, cfg.seed, trial_stream(n, t, 0));
        const PointCloudMeasure nuh =
            sample(cfg.nu, m, cfg.seed, trial_stream(n, t, 1));
        const OtSolution sol = solve(muh, nuh);
        const BrenierPotential phi = from_dual(nuh, sol.duals.g);
        const PointCloudMeasure probe =
            sample(cfg.mu, cfg.mc_points, cfg.seed, trial_stream(n, t, 2));
        const Matrix mapped = monge_map(phi, probe.points);
        const Vector target = oracle.map(Vector(probe.points.col(0)));
        const double err = (mapped.col(0) - target).cwiseAbs().mean();
        errs[li].push_back(err);
        out.records.push_back({n, m, t, trial_stream(n, t, 0), err,
                               "quantile-1d", elapsed_ms(t0)});
      }
    }
    out.summary = summarize(errs, cfg.n_grid, v, -0.125);
  } else {
    require(cfg.nu.kind == SpecKind::FiniteAtoms,
            "semi-discrete rate requires a finite target");
    require(cfg.mu.dim == 2 && cfg.nu.dim == 2,
            "semi-discrete rate is two dimensional");
    const PointCloudMeasure nu_cloud =
        make_measure(cfg.nu.atoms, cfg.nu.atom_weights);
    const SemidiscreteReference ref =
        oracle_semidiscrete_ref(cfg.mu, nu_cloud, cfg.resolved_ref_points());
    double drift = -1.0;
    if (cfg.check_reference) {
      const SemidiscreteReference ref4 = oracle_semidiscrete_ref(
          cfg.mu, nu_cloud, 4 * cfg.resolved_ref_points());
      const PointCloudMeasure probe =
          sample(cfg.mu, cfg.mc_points, cfg.seed, trial_stream(0, 0, 3));
      drift = (monge_map(ref.potential, probe.points) -
               monge_map(ref4.potential, probe.points))
                  .rowwise()
                  .norm()
                  .mean();
    }
    const Index m = nu_cloud.size();
    for (size_t li = 0; li < L; ++li) {
      const Index n = cfg.n_grid[li];
      v[Index(li)] = double(n) / double(m);
      for (Index t = 0; t < cfg.trials; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        const PointCloudMeasure muh =
            sample(cfg.mu, n, cfg.seed, trial_stream(n, t, 0));
        const OtSolution sol = solve(muh, nu_cloud);
        const BrenierPotential phi = from_dual(nu_cloud, sol.duals.g);
        const PointCloudMeasure probe =
            sample(cfg.mu, cfg.mc_points, cfg.seed, trial_stream(n, t, 2));
        const double err = (monge_map(phi, probe.points) -
                            monge_map(ref.potential, probe.points))
                               .rowwise()
                               .norm()
                               .mean();
        errs[li].push_back(err);
        out.records.push_back({n, m, t, trial_stream(n, t, 0), err,
                               "semidiscrete-grid", elapsed_ms(t0)});
      }
    }
    out.summary = summarize(errs, cfg.n_grid, v, -0.125);
    out.summary.reference_drift = drift;
  }

  if (!cfg.output.empty()) out.files = write_rate_artifacts(cfg, out);
  return out;
}

RateResult run_coupling_rate(const ExperimentConfig& cfg) {
  cfg.check();
  require(cfg.scenario == Scenario::CouplingRate,
          "run_coupling_rate: wrong scenario");
  require(cfg.mu.dim == 1 && cfg.nu.dim == 1,
          "coupling rates are one dimensional");
  const Oracle1D oracle = oracle_1d(cfg.mu, cfg.nu);
  const Index K = cfg.resolved_ref_points();
  CouplingMeasure ref;
  ref.pairs.resize(K, 2);
  ref.pairs.col(0) = oracle.source_quantiles(K);
  ref.pairs.col(1) = oracle.map(Vector(ref.pairs.col(0)));
  ref.masses = Vector::Constant(K, 1.0 / double(K));

  RateResult out;
  const size_t L = cfg.n_grid.size();
  std::vector<std::vector<double>> errs(L);
  Vector v = Vector::Zero(Index(L));
  for (size_t li = 0; li < L; ++li) {
    const Index n = cfg.n_grid[li];
    const Index m = cfg.resolved_m(li);
    require(n * m <= 10'000, "coupling trial exceeds the n*m <= 1e4 budget");
    v[Index(li)] = double(n);
    for (Index t = 0; t < cfg.trials; ++t) {
      const auto t0 = std::chrono::steady_clock::now();
      const PointCloudMeasure muh =
          sample(cfg.mu, n, cfg.seed, trial_stream(n, t, 0));
      const PointCloudMeasure nuh =
          sample(cfg.nu, m, cfg.seed, trial_stream(n, t, 1));
      const OtSolution sol = solve(muh, nuh);
      const CouplingMeasure emp = coupling_from(sol.plan, muh, nuh);
      const double err = coupling_w2(ref, emp);
      errs[li].push_back(err);
      out.records.push_back({n, m, t, trial_stream(n, t, 0), err,
                             "coupling-quantile-1d", elapsed_ms(t0)});
    }
  }
  out.summary = summarize(errs, cfg.n_grid, v, -0.0625);
  if (!cfg.output.empty()) out.files = write_rate_artifacts(cfg, out);
  return out;
}

Figure1Result run_figure1(const ExperimentConfig& cfg) {
  cfg.check();
  require(cfg.scenario == Scenario::Figure1Demo, "run_figure1: wrong scenario");
  require(cfg.mu.kind == SpecKind::UniformBox && cfg.mu.dim == 2,
          "figure1 requires a two dimensional box source");
  require(cfg.nu.kind == SpecKind::FiniteAtoms && cfg.nu.dim == 2,
          "figure1 requires a finite planar target");
  const PointCloudMeasure nu_cloud =
      make_measure(cfg.nu.atoms, cfg.nu.atom_weights);
  const Index m = nu_cloud.size();
  const Index G = cfg.grid_side;

  Matrix grid(G * G, 2);
  {
    Index r = 0;
    for (Index i = 0; i < G; ++i)
      for (Index j = 0; j < G; ++j, ++r) {
        grid(r, 0) = cfg.mu.lo[0] +
                     (cfg.mu.hi[0] - cfg.mu.lo[0]) * (double(i) + 0.5) / double(G);
        grid(r, 1) = cfg.mu.lo[1] +
                     (cfg.mu.hi[1] - cfg.mu.lo[1]) * (double(j) + 0.5) / double(G);
      }
  }

  Figure1Result res;
  res.grid_side = G;
  res.n_levels = cfg.n_grid;

  std::vector<std::vector<Index>> assign(cfg.n_grid.size());
  std::vector<PointCloudMeasure> clouds;
  std::vector<BrenierPotential> potentials;
  for (size_t li = 0; li < cfg.n_grid.size(); ++li) {
    const Index n = cfg.n_grid[li];
    const PointCloudMeasure muh =
        sample(cfg.mu, n, cfg.seed, trial_stream(n, 0, 0));
    const OtSolution sol = solve(muh, nu_cloud);
    const BrenierPotential phi = from_dual(nu_cloud, sol.duals.g);

    // Lowest-index argmax assignment on the fixed lattice.
    const Matrix scores =
        (grid * phi.atoms.transpose()).rowwise() + phi.intercept.transpose();
    std::vector<Index>& cell = assign[li];
    cell.resize(size_t(G * G));
    std::vector<char> hit(size_t(m), 0);
    for (Index r = 0; r < G * G; ++r) {
      Index best = 0;
      for (Index j = 1; j < m; ++j)
        if (scores(r, j) > scores(r, best)) best = j;
      cell[size_t(r)] = best;
      hit[size_t(best)] = 1;
    }
    Index distinct = 0;
    for (char h : hit) distinct += h;
    res.distinct_values.push_back(distinct);
    clouds.push_back(muh);
    potentials.push_back(phi);
  }
  for (size_t li = 0; li + 1 < assign.size(); ++li) {
    Index diff = 0;
    for (size_t r = 0; r < assign[li].size(); ++r)
      if (assign[li][r] != assign[li + 1][r]) ++diff;
    res.boundary_shift.push_back(double(diff) / double(G * G));
  }

  if (!cfg.output.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output, ec);
    require(!ec, "cannot create output directory " + cfg.output);
    const std::string atoms_path = cfg.output + "/figure1_atoms.csv";
    write_measure(nu_cloud, atoms_path, FileFormat::Csv);
    res.files.push_back(atoms_path);
    for (size_t li = 0; li < cfg.n_grid.size(); ++li) {
      const std::string tag = std::to_string(cfg.n_grid[li]);
      const std::string spath = cfg.output + "/figure1_samples_n" + tag + ".csv";
      write_measure(clouds[li], spath, FileFormat::Csv);
      res.files.push_back(spath);

      std::ostringstream body;
      body << "x1,x2,cell,t1,t2\n";
      for (Index r = 0; r < G * G; ++r) {
        const Index c = assign[li][size_t(r)];
        body << fmt17(grid(r, 0)) << ',' << fmt17(grid(r, 1)) << ',' << c << ','
             << fmt17(potentials[li].atoms(c, 0)) << ','
             << fmt17(potentials[li].atoms(c, 1)) << '\n';
      }
      const std::string mpath = cfg.output + "/figure1_map_n" + tag + ".csv";
      write_text(mpath, body.str());
      res.files.push_back(mpath);
    }
    nlohmann::json j;
    j["grid_side"] = G;
    j["n_levels"] = res.n_levels;
    j["distinct_values"] = res.distinct_values;
    j["boundary_shift"] = res.boundary_shift;
    const std::string jpath = cfg.output + "/figure1_summary.json";
    write_text(jpath, j.dump(1) + "\n");
    res.files.push_back(jpath);
    const std::string man = cfg.output + "/manifest.json";
    write_manifest(cfg, res.files, man);
    res.files.push_back(man);
  }
  return res;
}

void write_records_csv(const std::vector<RateRecord>& records,
                       const std::string& path) {
  std::ostringstream body;
  body << "n,m,trial,seed,error_value,oracle_kind,wall_time_ms\n";
  for (const RateRecord& r : records) {
    body << r.n << ',' << r.m << ',' << r.trial << ',' << r.seed << ','
         << fmt17(r.error_value) << ',' << r.oracle_kind << ','
         << fmt17(r.wall_time_ms) << '\n';
  }
  write_text(path, body.str());
}

void write_summary_json(const RateSummary& s, const std::string& path) {
  nlohmann::json j;
  j["n_levels"] = s.n_levels;
  j["medians"] =
      std::vector<double>(s.medians.data(), s.medians.data() + s.medians.size());
  j["means"] =
      std::vector<double>(s.means.data(), s.means.data() + s.means.size());
  j["slope"] = s.slope;
  j["envelope"] = {{"exponent", s.envelope_exponent},
                   {"constant", s.envelope_constant},
                   {"ok", s.envelope_ok}};
  j["inversions"] = s.inversions;
  if (s.reference_drift >= 0.0) j["reference_drift"] = s.reference_drift;
  write_text(path, j.dump(1) + "\n");
}

void write_manifest(const ExperimentConfig& cfg,
                    const std::vector<std::string>& outputs,
                    const std::string& path) {
  nlohmann::json j;
  j["version"] = kOtmapVersion;
  j["scenario"] = to_string(cfg.scenario);
  j["seed"] = cfg.seed;
  j["trials"] = cfg.trials;
  j["n_grid"] = cfg.n_grid;
  j["m_grid"] = cfg.m_grid;
  j["mc_points"] = cfg.mc_points;
  j["ref_points"] = cfg.resolved_ref_points();
  j["grid_side"] = cfg.grid_side;
  j["mu"] = spec_json(cfg.mu);
  j["nu"] = spec_json(cfg.nu);
  j["outputs"] = outputs;
  write_text(path, j.dump(1) + "\n");
}

}  // namespace ot
