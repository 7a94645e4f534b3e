#include "ot/measures.hpp"

#include "ot/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ot {

namespace {

// Neumaier-compensated sum: measurement error stays at a few ulps regardless
// of length. A plain recursive sum of 1e5 near-equal weights can drift by
// ~1e-11, which would make the 1e-12 sum invariant untestable at scale.
double compensated_sum(const Vector& v) {
  double s = 0.0, c = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double t = s + v[i];
    c += std::abs(s) >= std::abs(v[i]) ? (s - t) + v[i] : (v[i] - t) + s;
    s = t;
  }
  return s + c;
}

}  // namespace

void PointCloudMeasure::check() const {
  require(points.rows() >= 1, "measure must have at least one atom");
  require(points.cols() >= 1, "measure dimension must be positive");
  require(weights.size() == points.rows(), "weights/points size mismatch");
  require(points.allFinite(), "non-finite coordinate");
  require(weights.allFinite(), "non-finite weight");
  require(weights.minCoeff() > 0.0, "weights must be strictly positive");
  const double s = compensated_sum(weights);
  require(std::abs(s - 1.0) <= 1e-12,
          "weights sum " + std::to_string(s) + " != 1");
}

PointCloudMeasure make_measure(const Matrix& points, const Vector& weights) {
  require(points.rows() == weights.size(), "weights/points size mismatch");
  require(points.rows() >= 1, "measure must have at least one atom");
  require(points.allFinite() && weights.allFinite(), "non-finite input");
  require(weights.minCoeff() >= 0.0, "negative weight");
  const double s = compensated_sum(weights);
  require(std::abs(s - 1.0) <= 1e-9,
          "weights sum " + std::to_string(s) + " != 1");

  const Index n = points.rows();
  const Index d = points.cols();

  // Sort row indices lexicographically to merge exact duplicates.
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  auto row_less = [&](Index a, Index b) {
    for (Index k = 0; k < d; ++k) {
      if (points(a, k) != points(b, k)) return points(a, k) < points(b, k);
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), row_less);

  std::vector<Index> keep;
  std::vector<double> w;
  for (size_t t = 0; t < order.size(); ++t) {
    const Index i = order[t];
    if (!keep.empty() && !row_less(keep.back(), i) && !row_less(i, keep.back())) {
      w.back() += weights[i];  // exact duplicate of the previous row
    } else {
      keep.push_back(i);
      w.push_back(weights[i]);
    }
  }

  // Drop zero-weight atoms; anything positive but below 1e-15 is an error.
  PointCloudMeasure m;
  std::vector<Index> rows;
  std::vector<double> ws;
  for (size_t t = 0; t < keep.size(); ++t) {
    const double wi = w[t] / s;
    if (wi == 0.0) continue;
    require(wi >= 1e-15, "weight below 1e-15 after normalization");
    rows.push_back(keep[t]);
    ws.push_back(wi);
  }
  require(!rows.empty(), "all atoms have zero weight");
  m.points.resize(Index(rows.size()), d);
  m.weights.resize(Index(rows.size()));
  for (size_t t = 0; t < rows.size(); ++t) {
    m.points.row(Index(t)) = points.row(rows[t]);
    m.weights[Index(t)] = ws[t];
  }
  m.weights /= compensated_sum(m.weights);
  m.check();
  return m;
}

double support_radius(const PointCloudMeasure& m) {
  return m.points.rowwise().norm().maxCoeff();
}

DistributionSpec DistributionSpec::uniform_box(const Vector& lo, const Vector& hi) {
  DistributionSpec s;
  s.kind = SpecKind::UniformBox;
  s.dim = lo.size();
  s.lo = lo;
  s.hi = hi;
  s.check();
  return s;
}

DistributionSpec DistributionSpec::uniform_two_boxes(const Vector& lo1, const Vector& hi1,
                                                     const Vector& lo2, const Vector& hi2,
                                                     double w1) {
  DistributionSpec s;
  s.kind = SpecKind::UniformTwoBoxes;
  s.dim = lo1.size();
  s.lo = lo1;
  s.hi = hi1;
  s.lo2 = lo2;
  s.hi2 = hi2;
  s.w1 = w1;
  s.check();
  return s;
}

DistributionSpec DistributionSpec::uniform_annulus(const Vector& center, double r_inner,
                                                   double r_outer) {
  DistributionSpec s;
  s.kind = SpecKind::UniformAnnulus;
  s.dim = 2;
  s.center = center;
  s.r_inner = r_inner;
  s.r_outer = r_outer;
  s.check();
  return s;
}

DistributionSpec DistributionSpec::finite_atoms(const Matrix& atoms, const Vector& weights) {
  DistributionSpec s;
  s.kind = SpecKind::FiniteAtoms;
  s.dim = atoms.cols();
  s.atoms = atoms;
  s.atom_weights = weights;
  s.check();
  return s;
}

DistributionSpec DistributionSpec::product_1d(std::vector<std::vector<Interval>> axes) {
  DistributionSpec s;
  s.kind = SpecKind::Product1d;
  s.dim = Index(axes.size());
  s.axes = std::move(axes);
  for (auto& ax : s.axes) {
    std::sort(ax.begin(), ax.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  }
  s.check();
  return s;
}

namespace {

void check_box(const Vector& lo, const Vector& hi, Index dim) {
  require(lo.size() == dim && hi.size() == dim, "box bounds size mismatch");
  require(lo.allFinite() && hi.allFinite(), "non-finite box bound");
  require((hi - lo).minCoeff() > 0.0, "box has empty interior");
}

double box_volume(const Vector& lo, const Vector& hi) {
  return (hi - lo).prod();
}

double box_radius(const Vector& lo, const Vector& hi) {
  return lo.cwiseAbs().cwiseMax(hi.cwiseAbs()).norm();
}

}  // namespace

void DistributionSpec::check() const {
  require(dim >= 1, "dimension must be positive");
  switch (kind) {
    case SpecKind::UniformBox:
      check_box(lo, hi, dim);
      break;
    case SpecKind::UniformTwoBoxes:
      check_box(lo, hi, dim);
      check_box(lo2, hi2, dim);
      require(w1 > 0.0 && w1 < 1.0, "mixture weight must be in (0,1)");
      break;
    case SpecKind::UniformAnnulus:
      require(dim == 2, "annulus supported in dimension 2 only");
      require(center.size() == 2 && center.allFinite(), "bad annulus center");
      require(r_inner >= 0.0 && r_outer > r_inner, "annulus radii must satisfy 0 <= inner < outer");
      break;
    case SpecKind::FiniteAtoms: {
      require(atoms.rows() >= 1, "finite-atoms spec with empty support");
      require(atoms.cols() == dim, "atom dimension mismatch");
      require(atoms.allFinite(), "non-finite atom");
      require(atom_weights.size() == atoms.rows(), "atom weights size mismatch");
      require(atom_weights.minCoeff() > 0.0, "atom weights must be positive");
      const double s = atom_weights.sum();
      require(std::abs(s - 1.0) <= 1e-9, "atom weights sum " + std::to_string(s) + " != 1");
      break;
    }
    case SpecKind::Product1d: {
      require(Index(axes.size()) == dim, "axes size mismatch");
      for (const auto& ax : axes) {
        require(ax.size() == 1 || ax.size() == 2, "each axis needs 1 or 2 intervals");
        for (const auto& iv : ax) {
          require(std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo < iv.hi,
                  "bad axis interval");
        }
        if (ax.size() == 2) {
          require(ax[0].hi <= ax[1].lo, "axis intervals must be disjoint");
        }
      }
      break;
    }
  }
}

double DistributionSpec::support_radius() const {
  switch (kind) {
    case SpecKind::UniformBox:
      return box_radius(lo, hi);
    case SpecKind::UniformTwoBoxes:
      return std::max(box_radius(lo, hi), box_radius(lo2, hi2));
    case SpecKind::UniformAnnulus:
      return center.norm() + r_outer;
    case SpecKind::FiniteAtoms:
      return atoms.rowwise().norm().maxCoeff();
    case SpecKind::Product1d: {
      double sq = 0.0;
      for (const auto& ax : axes) {
        double a = 0.0;
        for (const auto& iv : ax) a = std::max({a, std::abs(iv.lo), std::abs(iv.hi)});
        sq += a * a;
      }
      return std::sqrt(sq);
    }
  }
  return 0.0;
}

double DistributionSpec::density_bound() const {
  switch (kind) {
    case SpecKind::UniformBox:
      return 1.0 / box_volume(lo, hi);
    case SpecKind::UniformTwoBoxes:
      return std::max(w1 / box_volume(lo, hi), (1.0 - w1) / box_volume(lo2, hi2));
    case SpecKind::UniformAnnulus:
      return 1.0 / (M_PI * (r_outer * r_outer - r_inner * r_inner));
    case SpecKind::FiniteAtoms:
      throw std::invalid_argument("finite-atoms distribution has no density bound");
    case SpecKind::Product1d: {
      double m = 1.0;
      for (const auto& ax : axes) {
        double len = 0.0;
        for (const auto& iv : ax) len += iv.hi - iv.lo;
        m /= len;
      }
      return m;
    }
  }
  return 0.0;
}

PointCloudMeasure sample(const DistributionSpec& spec, Index n, std::uint64_t seed,
                         std::uint64_t stream) {
  spec.check();
  require(n >= 1, "sample size must be positive");
  Rng rng(seed, stream);

  PointCloudMeasure m;
  m.points.resize(n, spec.dim);
  for (Index i = 0; i < n; ++i) {
    switch (spec.kind) {
      case SpecKind::UniformBox:
        for (Index k = 0; k < spec.dim; ++k)
          m.points(i, k) = rng.uniform(spec.lo[k], spec.hi[k]);
        break;
      case SpecKind::UniformTwoBoxes: {
        const bool first = rng.uniform() < spec.w1;
        const Vector& l = first ? spec.lo : spec.lo2;
        const Vector& h = first ? spec.hi : spec.hi2;
        for (Index k = 0; k < spec.dim; ++k) m.points(i, k) = rng.uniform(l[k], h[k]);
        break;
      }
      case SpecKind::UniformAnnulus: {
        const double r2 = rng.uniform(spec.r_inner * spec.r_inner,
                                      spec.r_outer * spec.r_outer);
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        const double r = std::sqrt(r2);
        m.points(i, 0) = spec.center[0] + r * std::cos(theta);
        m.points(i, 1) = spec.center[1] + r * std::sin(theta);
        break;
      }
      case SpecKind::FiniteAtoms:
        m.points.row(i) = spec.atoms.row(rng.categorical(spec.atom_weights));
        break;
      case SpecKind::Product1d:
        for (Index k = 0; k < spec.dim; ++k) {
          const auto& ax = spec.axes[size_t(k)];
          const Interval* iv = &ax[0];
          if (ax.size() == 2) {
            const double len0 = ax[0].hi - ax[0].lo;
            const double len1 = ax[1].hi - ax[1].lo;
            if (rng.uniform() * (len0 + len1) >= len0) iv = &ax[1];
          }
          m.points(i, k) = rng.uniform(iv->lo, iv->hi);
        }
        break;
    }
  }
  m.weights = Vector::Constant(n, 1.0 / double(n));
  m.weights /= compensated_sum(m.weights);
  m.check();
  return m;
}

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_double(const std::string& tok, Index line) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed number '" + tok + "' at line " +
                                std::to_string(line));
  }
  require(pos == tok.size(), "malformed number '" + tok + "' at line " + std::to_string(line));
  require(std::isfinite(v), "non-finite value at line " + std::to_string(line));
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream is(line);
  while (std::getline(is, tok, ',')) out.push_back(tok);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

PointCloudMeasure read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::string line;
  require(bool(std::getline(in, line)), "empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  require(header.size() >= 2 && header[0] == "w",
          "bad header, expected w,x1,...,xd");
  const Index d = Index(header.size()) - 1;
  for (Index k = 0; k < d; ++k) {
    require(header[size_t(k) + 1] == "x" + std::to_string(k + 1),
            "bad header, expected w,x1,...,xd");
  }

  std::vector<double> ws;
  std::vector<double> coords;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto toks = split_csv(line);
    require(Index(toks.size()) == d + 1,
            "dimension mismatch at line " + std::to_string(lineno) + ": got " +
                std::to_string(toks.size()) + " fields, expected " +
                std::to_string(d + 1));
    ws.push_back(parse_double(toks[0], lineno));
    for (Index k = 0; k < d; ++k)
      coords.push_back(parse_double(toks[size_t(k) + 1], lineno));
  }
  require(!ws.empty(), "no data rows in " + path);

  const Index n = Index(ws.size());
  Matrix P(n, d);
  Vector W(n);
  for (Index i = 0; i < n; ++i) {
    W[i] = ws[size_t(i)];
    for (Index k = 0; k < d; ++k) P(i, k) = coords[size_t(i * d + k)];
  }
  return make_measure(P, W);
}

void write_csv(const PointCloudMeasure& m, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << "w";
  for (Index k = 0; k < m.dim(); ++k) out << ",x" << (k + 1);
  out << "\n";
  for (Index i = 0; i < m.size(); ++i) {
    out << format_double(m.weights[i]);
    for (Index k = 0; k < m.dim(); ++k) out << "," << format_double(m.points(i, k));
    out << "\n";
  }
}

PointCloudMeasure read_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
  }
  require(j.contains("dim") && j.contains("points") && j.contains("weights"),
          "JSON measure needs dim/points/weights");
  const Index d = j["dim"].get<Index>();
  const auto& pts = j["points"];
  const auto& ws = j["weights"];
  require(pts.size() == ws.size(), "points/weights size mismatch");
  require(!pts.empty(), "empty measure");
  const Index n = Index(pts.size());
  Matrix P(n, d);
  Vector W(n);
  for (Index i = 0; i < n; ++i) {
    require(Index(pts[size_t(i)].size()) == d, "dimension mismatch at point " + std::to_string(i));
    for (Index k = 0; k < d; ++k) P(i, k) = pts[size_t(i)][size_t(k)].get<double>();
    W[i] = ws[size_t(i)].get<double>();
  }
  require(P.allFinite() && W.allFinite(), "non-finite value in JSON measure");
  return make_measure(P, W);
}

void write_json(const PointCloudMeasure& m, const std::string& path) {
  nlohmann::json j;
  j["dim"] = m.dim();
  auto pts = nlohmann::json::array();
  auto ws = nlohmann::json::array();
  for (Index i = 0; i < m.size(); ++i) {
    auto row = nlohmann::json::array();
    for (Index k = 0; k < m.dim(); ++k) row.push_back(m.points(i, k));
    pts.push_back(std::move(row));
    ws.push_back(m.weights[i]);
  }
  j["points"] = std::move(pts);
  j["weights"] = std::move(ws);
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << j.dump(1) << "\n";
}

}  // namespace

PointCloudMeasure read_measure(const std::string& path, FileFormat fmt) {
  return fmt == FileFormat::Csv ? read_csv(path) : read_json(path);
}

void write_measure(const PointCloudMeasure& m, const std::string& path, FileFormat fmt) {
  m.check();
  if (fmt == FileFormat::Csv) {
    write_csv(m, path);
  } else {
    write_json(m, path);
  }
}

}  // namespace ot
