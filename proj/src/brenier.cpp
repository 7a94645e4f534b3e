#include "ot/brenier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "Eigen/QR"
#include "nlohmann/json.hpp"
#include "ot/linprog.hpp"
#include "ot/rng.hpp"

namespace ot {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

BrenierPotential from_dual(const Matrix& atoms, const Vector& g) {
  require(atoms.rows() > 0, "potential: no atoms");
  require(atoms.rows() == g.size(), "potential: offsets/atoms length mismatch");
  require(atoms.allFinite() && g.allFinite(), "potential: non-finite input");
  BrenierPotential phi;
  phi.atoms = atoms;
  phi.g = g;
  phi.intercept = g - 0.5 * atoms.rowwise().squaredNorm();
  phi.tightened = false;
  return phi;
}

BrenierPotential from_dual(const PointCloudMeasure& nu, const Vector& g) {
  return from_dual(nu.points, g);
}

double eval(const BrenierPotential& phi, const Vector& x) {
  require(x.size() == phi.dim(), "potential: dimension mismatch");
  return (phi.atoms * x + phi.intercept).maxCoeff();
}

Vector eval(const BrenierPotential& phi, const Matrix& X) {
  require(X.cols() == phi.dim(), "potential: dimension mismatch");
  const Index N = X.rows(), m = phi.size();
  Vector out(N);
  const Index chunk = std::max<Index>(1, 30000000 / std::max<Index>(m, 1));
  for (Index r0 = 0; r0 < N; r0 += chunk) {
    const Index rows = std::min(chunk, N - r0);
    out.segment(r0, rows) =
        ((X.middleRows(r0, rows) * phi.atoms.transpose()).rowwise() +
         phi.intercept.transpose())
            .rowwise()
            .maxCoeff();
  }
  return out;
}

ActiveSet active_set(const BrenierPotential& phi, const Vector& x, double tol_act) {
  require(x.size() == phi.dim(), "potential: dimension mismatch");
  require(tol_act >= 0.0, "potential: negative tolerance");
  const Vector scores = phi.atoms * x + phi.intercept;
  ActiveSet act;
  act.value = scores.maxCoeff();
  act.tol = tol_act;
  for (Index k = 0; k < scores.size(); ++k)
    if (scores[k] >= act.value - tol_act) act.indices.push_back(k);
  return act;
}

ActiveSet active_set(const BrenierPotential& phi, const Vector& x) {
  const double value = eval(phi, x);
  return active_set(phi, x, default_active_tol(value));
}

Vector monge_map(const BrenierPotential& phi, const Vector& x) {
  const ActiveSet act = active_set(phi, x);
  Vector avg = Vector::Zero(phi.dim());
  for (Index k : act.indices) avg += phi.atoms.row(k).transpose();
  return avg / double(act.indices.size());
}

Matrix monge_map(const BrenierPotential& phi, const Matrix& X) {
  require(X.cols() == phi.dim(), "potential: dimension mismatch");
  const Index N = X.rows(), m = phi.size();
  Matrix out(N, phi.dim());
  const Index chunk = std::max<Index>(1, 30000000 / std::max<Index>(m, 1));
  Matrix scores;
  for (Index r0 = 0; r0 < N; r0 += chunk) {
    const Index rows = std::min(chunk, N - r0);
    scores.noalias() = X.middleRows(r0, rows) * phi.atoms.transpose();
    scores.rowwise() += phi.intercept.transpose();
    for (Index r = 0; r < rows; ++r) {
      const double value = scores.row(r).maxCoeff();
      const double tol = default_active_tol(value);
      Vector avg = Vector::Zero(phi.dim());
      Index hits = 0;
      for (Index k = 0; k < m; ++k)
        if (scores(r, k) >= value - tol) {
          avg += phi.atoms.row(k).transpose();
          ++hits;
        }
      out.row(r0 + r) = avg.transpose() / double(hits);
    }
  }
  return out;
}

double conjugate(const BrenierPotential& phi, const Vector& y) {
  require(y.size() == phi.dim(), "potential: dimension mismatch");
  const Index m = phi.size(), d = phi.dim();
  // min c'l  s.t.  atoms' l = y, 1'l = 1, l >= 0  with c_k = 0.5|y_k|^2 - g_k.
  Matrix A(d + 1, m);
  A.topRows(d) = phi.atoms.transpose();
  A.row(d).setOnes();
  Vector rhs(d + 1);
  rhs.head(d) = y;
  rhs[d] = 1.0;
  const Vector c = 0.5 * phi.atoms.rowwise().squaredNorm() - phi.g;
  const LpResult res = solve_lp(A, rhs, c);
  if (res.status != LpStatus::Optimal) return kInf;
  return res.value;
}

BrenierPotential tighten(const BrenierPotential& phi) {
  const Index m = phi.size();
  // The largest admissible offset for piece q keeps it below the maximum of
  // the others everywhere:
  //   g_q <- min_x phi(x) - <x, y_q> + 0.5|y_q|^2 = 0.5|y_q|^2 - phi*(y_q),
  // using that the unconstrained minimum is finite exactly because y_q lies
  // in the hull of the slopes. One hull LP per atom.
  Vector g_new(m);
  for (Index q = 0; q < m; ++q) {
    const double star = conjugate(phi, phi.atoms.row(q).transpose());
    ensure(std::isfinite(star), "tighten: conjugate infinite at an atom");
    g_new[q] = 0.5 * phi.atoms.row(q).squaredNorm() - star;
    ensure(g_new[q] >= phi.g[q] - 1e-9 * (1.0 + std::abs(phi.g[q])),
           "tighten: offset decreased");
    g_new[q] = std::max(g_new[q], phi.g[q]);
  }
  BrenierPotential out = from_dual(phi.atoms, g_new);
  out.tightened = true;

  // The pointwise maximum must be unchanged; spot-check on a deterministic
  // sample of the box that contains every breakpoint relevant to the max.
  const double radius =
      10.0 * (1.0 + phi.atoms.rowwise().norm().maxCoeff() + phi.g.cwiseAbs().maxCoeff());
  Rng rng(0x7167u, 0);
  const Index d = phi.dim();
  Vector x(d);
  for (int s = 0; s < 256; ++s) {
    for (Index k = 0; k < d; ++k) x[k] = rng.uniform(-radius, radius);
    const double before = eval(phi, x);
    const double after = eval(out, x);
    ensure(std::abs(before - after) <= 1e-9 * (1.0 + std::abs(before)),
           "tighten: potential changed at a sample point");
  }
  for (Index q = 0; q < m; ++q) {
    const Vector y = phi.atoms.row(q).transpose();
    ensure(std::abs(eval(phi, y) - eval(out, y)) <= 1e-9 * (1.0 + std::abs(eval(phi, y))),
           "tighten: potential changed at an atom");
  }
  return out;
}

namespace {

/// Euclidean projection onto the probability simplex.
Vector project_simplex(const Vector& v) {
  const Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cssv = 0.0, theta = 0.0;
  Index rho = 0;
  for (Index k = 0; k < n; ++k) {
    cssv += u[static_cast<size_t>(k)];
    const double t = (cssv - 1.0) / double(k + 1);
    if (u[static_cast<size_t>(k)] - t > 0) {
      rho = k;
      theta = t;
    }
  }
  (void)rho;
  return (v.array() - theta).max(0.0);
}

/// Accelerated projected gradient on the dual of the prox problem:
///   min over simplex weights u of 0.5*lambda*|Y'u|^2 - u'(Y x + c).
Vector prox_dual_fallback(const BrenierPotential& phi, double lambda, const Vector& x) {
  const Index m = phi.size();
  const Vector lin = phi.atoms * x + phi.intercept;
  const double L = lambda * phi.atoms.squaredNorm() + 1e-12;
  Vector u = Vector::Constant(m, 1.0 / double(m));
  Vector u_prev = u, yk = u;
  double t = 1.0;
  for (int it = 0; it < 5000; ++it) {
    const Vector grad = lambda * (phi.atoms * (phi.atoms.transpose() * yk)) - lin;
    u_prev = u;
    u = project_simplex(yk - grad / L);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    yk = u + ((t - 1.0) / t_next) * (u - u_prev);
    t = t_next;
  }
  return x - lambda * (phi.atoms.transpose() * u);
}

/// Equal-score system for a working set I: hull weights u with sum u = 1
/// making every piece in I tight at z = x - lambda * Y_I' u. The system is
/// inconsistent when I over-determines z (more than d+1 generic pieces).
struct ProxKkt {
  Vector u;
  Vector z;
  bool consistent = false;
};

ProxKkt prox_kkt(const BrenierPotential& phi, double lambda, const Vector& x,
                 const std::vector<Index>& I) {
  const Index k = static_cast<Index>(I.size());
  const Index d = phi.dim();
  Matrix Yi(k, d);
  Vector ci(k);
  for (Index r = 0; r < k; ++r) {
    Yi.row(r) = phi.atoms.row(I[static_cast<size_t>(r)]);
    ci[r] = phi.intercept[I[static_cast<size_t>(r)]];
  }
  // Equations: sum u = 1; for r>=1, <z, y_r - y_0> = c_0 - c_r with
  // z = x - lambda Y' u  =>  -lambda (Yi (y_r - y_0))' u = c_0 - c_r - <x, y_r - y_0>.
  Matrix A(k, k);
  Vector rhs(k);
  A.row(0).setOnes();
  rhs[0] = 1.0;
  for (Index r = 1; r < k; ++r) {
    const Vector dir = (Yi.row(r) - Yi.row(0)).transpose();
    A.row(r) = -lambda * (Yi * dir).transpose();
    rhs[r] = ci[0] - ci[r] - x.dot(dir);
  }
  ProxKkt out;
  out.u = A.completeOrthogonalDecomposition().solve(rhs);
  const double sys_scale = 1.0 + A.cwiseAbs().maxCoeff() + rhs.cwiseAbs().maxCoeff();
  out.consistent = (A * out.u - rhs).cwiseAbs().maxCoeff() <= 1e-9 * sys_scale;
  out.z = x - lambda * (Yi.transpose() * out.u.cwiseMax(0.0));
  return out;
}

double certificate_residual(const BrenierPotential& phi, double lambda, const Vector& x,
                            const Vector& z) {
  const ActiveSet act = active_set(phi, z);
  Matrix act_atoms(static_cast<Index>(act.indices.size()), phi.dim());
  for (size_t r = 0; r < act.indices.size(); ++r)
    act_atoms.row(static_cast<Index>(r)) = phi.atoms.row(act.indices[r]);
  return hull_membership_residual(act_atoms, (x - z) / lambda);
}

}  // namespace

Vector prox(const BrenierPotential& phi, double lambda, const Vector& x) {
  require(lambda > 0.0, "prox: lambda must be positive");
  require(x.size() == phi.dim(), "prox: dimension mismatch");
  const Index d = phi.dim();
  const Index m = phi.size();
  const double scale = 1.0 + std::abs(eval(phi, x));

  // Active-set method: maintain a working set I, solve for hull weights u
  // making all pieces in I tight at z = x - lambda * Y_I' u, drop negative
  // weights, add violated pieces. An inconsistent system means I
  // over-determines z, so evict its weakest member instead of trusting the
  // least-squares compromise.
  std::vector<Index> I{active_set(phi, x, 0.0).indices.front()};
  Vector z = x;
  Index last_added = I.front();
  bool solved = false;
  for (int round = 0; round < 50 + 4 * static_cast<int>(m); ++round) {
    const ProxKkt kkt = prox_kkt(phi, lambda, x, I);
    const Index k = static_cast<Index>(I.size());
    if (!kkt.consistent && k > 1) {
      Index weakest = -1;
      for (Index r = 0; r < k; ++r) {
        if (I[static_cast<size_t>(r)] == last_added) continue;
        if (weakest < 0 || std::abs(kkt.u[r]) < std::abs(kkt.u[weakest]))
          weakest = r;
      }
      I.erase(I.begin() + static_cast<std::ptrdiff_t>(weakest));
      continue;
    }

    // Drop the most negative weight, if any.
    Index worst = -1;
    double worst_val = -1e-12;
    for (Index r = 0; r < k; ++r)
      if (kkt.u[r] < worst_val) {
        worst_val = kkt.u[r];
        worst = r;
      }
    if (worst >= 0 && k > 1) {
      I.erase(I.begin() + static_cast<std::ptrdiff_t>(worst));
      continue;
    }

    z = kkt.z;
    // Add the worst violated piece, if any.
    const Vector scores = phi.atoms * z + phi.intercept;
    double own = -kInf;
    for (Index j : I) own = std::max(own, scores[j]);
    Index add = -1;
    double viol = 1e-11 * scale;
    for (Index j = 0; j < m; ++j) {
      if (std::find(I.begin(), I.end(), j) != I.end()) continue;
      if (scores[j] - own > viol) {
        viol = scores[j] - own;
        add = j;
      }
    }
    if (add < 0) {
      solved = true;
      break;
    }
    I.push_back(add);
    last_added = add;
    std::sort(I.begin(), I.end());
  }

  if (!solved || certificate_residual(phi, lambda, x, z) > 1e-8) {
    z = prox_dual_fallback(phi, lambda, x);
  }

  // Last resort: by Caratheodory some optimal working set has at most d+1
  // pieces, so enumerate small supports and keep the best certificate.
  double resid = certificate_residual(phi, lambda, x, z);
  if (resid > 1e-8) {
    const Index kmax = std::min(m, d + 1);
    long budget = 300000;
    for (Index k = 1; k <= kmax && resid > 1e-10 && budget > 0; ++k) {
      std::vector<Index> comb(static_cast<size_t>(k));
      std::iota(comb.begin(), comb.end(), Index(0));
      while (budget-- > 0) {
        const ProxKkt kkt = prox_kkt(phi, lambda, x, comb);
        if (kkt.consistent && kkt.u.minCoeff() >= -1e-10) {
          const double r = certificate_residual(phi, lambda, x, kkt.z);
          if (r < resid) {
            resid = r;
            z = kkt.z;
            if (resid <= 1e-10) break;
          }
        }
        Index i = k - 1;
        while (i >= 0 && comb[static_cast<size_t>(i)] == m - k + i) --i;
        if (i < 0) break;
        ++comb[static_cast<size_t>(i)];
        for (Index j = i + 1; j < k; ++j)
          comb[static_cast<size_t>(j)] = comb[static_cast<size_t>(j - 1)] + 1;
      }
    }
  }

  resid = certificate_residual(phi, lambda, x, z);
  ensure(resid <= 1e-8, "prox: optimality certificate failed, residual " +
                            std::to_string(resid));
  return z;
}

PushforwardReport pushforward_check(const BrenierPotential& phi, const OtSolution& sol,
                                    const PointCloudMeasure& mu,
                                    const PointCloudMeasure& nu) {
  require(phi.size() == nu.size() && phi.dim() == nu.dim(),
          "pushforward: potential does not match target measure");
  require(sol.plan.n == mu.size() && sol.plan.m == nu.size(),
          "pushforward: plan does not match measures");
  PushforwardReport rep;
  const Vector values = eval(phi, mu.points);

  std::vector<Index> partner(static_cast<size_t>(mu.size()), -1);
  std::vector<int> row_entries(static_cast<size_t>(mu.size()), 0);
  for (const auto& e : sol.plan.entries) {
    if (e.mass <= kActiveMassEps) continue;
    const double piece =
        phi.atoms.row(e.j).dot(mu.points.row(e.i)) + phi.intercept[e.j];
    const double resid = std::abs(piece - values[e.i]);
    rep.max_affine_residual = std::max(rep.max_affine_residual, resid);
    if (resid > 1e-8) ++rep.violations;
    ++row_entries[static_cast<size_t>(e.i)];
    partner[static_cast<size_t>(e.i)] = e.j;
  }

  rep.permutation = mu.size() == nu.size();
  for (size_t i = 0; i < row_entries.size(); ++i)
    if (row_entries[i] != 1) rep.permutation = false;
  if (rep.permutation) {
    for (Index i = 0; i < mu.size(); ++i) {
      const Vector xi = mu.points.row(i).transpose();
      const Vector mapped = monge_map(phi, xi);
      const double dev =
          (mapped - nu.points.row(partner[static_cast<size_t>(i)]).transpose()).norm();
      rep.max_map_deviation = std::max(rep.max_map_deviation, dev);
    }
  }
  return rep;
}

void write_potential_json(const BrenierPotential& phi, const std::string& path) {
  nlohmann::json doc;
  auto& atoms = doc["atoms"];
  for (Index k = 0; k < phi.size(); ++k) {
    std::vector<double> row(static_cast<size_t>(phi.dim()));
    for (Index c = 0; c < phi.dim(); ++c) row[static_cast<size_t>(c)] = phi.atoms(k, c);
    atoms.push_back(row);
  }
  doc["g"] = std::vector<double>(phi.g.data(), phi.g.data() + phi.g.size());
  doc["tightened"] = phi.tightened;
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << doc.dump(1) << '\n';
  ensure(out.good(), "write failed for " + path);
}

BrenierPotential read_potential_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid potential JSON in " + path + ": " + e.what());
  }
  require(doc.contains("atoms") && doc.contains("g"), "potential JSON must contain atoms and g");
  const auto rows = doc["atoms"].get<std::vector<std::vector<double>>>();
  const auto gv = doc["g"].get<std::vector<double>>();
  require(!rows.empty() && rows.size() == gv.size(), "potential JSON sizes disagree");
  const Index m = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(rows.front().size());
  Matrix atoms(m, d);
  for (Index k = 0; k < m; ++k) {
    require(static_cast<Index>(rows[static_cast<size_t>(k)].size()) == d,
            "potential JSON: ragged atom rows");
    for (Index c = 0; c < d; ++c) atoms(k, c) = rows[static_cast<size_t>(k)][static_cast<size_t>(c)];
  }
  BrenierPotential phi = from_dual(atoms, Eigen::Map<const Vector>(gv.data(), m));
  phi.tightened = doc.value("tightened", false);
  return phi;
}

}  // namespace ot
