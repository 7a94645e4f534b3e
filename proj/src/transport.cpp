#include "ot/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>

#include "nlohmann/json.hpp"

namespace ot {

Matrix build_cost(const Matrix& X, const Matrix& Y) {
  require(X.cols() == Y.cols(), "cost: dimension mismatch between supports");
  const Index n = X.rows(), m = Y.rows();
  require(n > 0 && m > 0, "cost: empty support");
  Matrix C(n, m);
  for (Index j = 0; j < m; ++j) {
    // Evaluate the difference directly so that identical points give an
    // exact zero (the expanded |x|^2+|y|^2-2<x,y> form does not).
    C.col(j) = 0.5 * (X.rowwise() - Y.row(j)).rowwise().squaredNorm();
  }
  return C;
}

Matrix build_cost(const PointCloudMeasure& mu, const PointCloudMeasure& nu) {
  return build_cost(mu.points, nu.points);
}

Vector TransportPlan::row_sums() const {
  Vector r = Vector::Zero(n);
  for (const auto& e : entries) r[e.i] += e.mass;
  return r;
}

Vector TransportPlan::col_sums() const {
  Vector c = Vector::Zero(m);
  for (const auto& e : entries) c[e.j] += e.mass;
  return c;
}

double TransportPlan::marginal_residual() const {
  const double dr = (row_sums() - row_marginal).cwiseAbs().maxCoeff();
  const double dc = (col_sums() - col_marginal).cwiseAbs().maxCoeff();
  return std::max(dr, dc);
}

namespace {

// Network simplex on the dense bipartite transportation graph.
//
// Node ids: rows 0..n-1, columns n..n+m-1. The basis is a spanning tree held
// as parent/depth/parent-arc arrays plus per-node adjacency lists over arc
// slots; a pivot rewires one chain of the tree and refreshes depths and dual
// potentials on the re-rooted subtree only.
class NetworkSimplex {
 public:
  NetworkSimplex(const Matrix& C, const Vector& a, const Vector& b,
                 std::vector<Index> rorder, std::vector<Index> corder)
      : C_(C),
        n_(C.rows()),
        m_(C.cols()),
        a_(a),
        b_(b),
        rorder_(std::move(rorder)),
        corder_(std::move(corder)) {}

  OtSolution run(double grade_sign) {
    perturb(grade_sign);
    initial_basis();
    const double max_abs = C_.cwiseAbs().maxCoeff();
    opt_eps_ = 1e-11 * (1.0 + max_abs);
    // Belt and suspenders: after the pricing loop reports optimality, rebuild
    // the duals from scratch and re-scan once; resume if rounding drift along
    // long tree paths hid a violation.
    for (int round = 0; round < 4; ++round) {
      pivot_loop();
      rebuild_duals();
      if (!price_full().found) break;
    }
    return extract();
  }

 private:
  struct Candidate {
    bool found = false;
    Index i = 0, j = 0;
    double reduced = 0.0;
  };

  // Graded perturbation of the marginals keeps the pivot sequence away from
  // degenerate ties; it is compensated in the last column and removed again
  // when flows are recomputed from the exact marginals at the end. The sign
  // selects one of two mirrored perturbations; averaging the duals of both
  // runs gives a point of the optimal dual face that is slack off the plan
  // support, so downstream active sets at the samples are tie-free.
  void perturb(double sign) {
    const double n1 = static_cast<double>(n_) + 1.0;
    const double delta =
        sign * std::min(1e-13, 0.2 * std::min(a_.minCoeff(), b_.minCoeff()) / (n1 * n1));
    ap_ = a_;
    bp_ = b_;
    double total = 0.0;
    for (Index i = 0; i < n_; ++i) {
      const double d = delta * static_cast<double>(i + 1);
      ap_[i] += d;
      total += d;
    }
    bp_[m_ - 1] += total;
    total_perturbation_ = std::abs(total);
  }

  Index node_of_col(Index j) const { return n_ + j; }

  // Northwest-corner rule over the caller-supplied row/column orders. With
  // supports sorted along a common direction this is the monotone staircase,
  // which for 1-d inputs is already optimal and leaves the pivot loop only
  // the job of confirming it.
  void initial_basis() {
    const Index N = n_ + m_;
    parent_.assign(N, -1);
    parc_.assign(N, -1);
    depth_.assign(N, 0);
    adj_.assign(N, {});
    arc_i_.clear();
    arc_j_.clear();
    arc_flow_.clear();
    arc_i_.reserve(N - 1);
    arc_j_.reserve(N - 1);
    arc_flow_.reserve(N - 1);

    Vector ra = ap_, cb = bp_;
    Index u = 0, v = 0;
    while (true) {
      const Index i = rorder_[u], j = corder_[v];
      const double move = std::min(ra[i], cb[j]);
      add_arc(i, j, move);
      ra[i] -= move;
      cb[j] -= move;
      const bool last = (u == n_ - 1 && v == m_ - 1);
      if (last) break;
      // Perturbed marginals make exact double ties essentially impossible,
      // but guard the staircase against running off either edge anyway.
      if (ra[i] <= cb[j] && u < n_ - 1) {
        ++u;
      } else if (v < m_ - 1) {
        ++v;
      } else {
        ++u;
      }
    }
    ensure(static_cast<Index>(arc_flow_.size()) == n_ + m_ - 1,
           "transport: initial basis is not spanning");

    root_ = 0;
    rebuild_tree_from_adjacency();
    rebuild_duals();
  }

  void add_arc(Index i, Index j, double flow) {
    const int32_t id = static_cast<int32_t>(arc_flow_.size());
    arc_i_.push_back(i);
    arc_j_.push_back(j);
    arc_flow_.push_back(flow);
    adj_[i].push_back(id);
    adj_[node_of_col(j)].push_back(id);
  }

  Index arc_other(int32_t id, Index v) const {
    const Index iu = arc_i_[id];
    return v == iu ? node_of_col(arc_j_[id]) : iu;
  }

  void rebuild_tree_from_adjacency() {
    std::vector<Index> stack{root_};
    parent_[root_] = -1;
    parc_[root_] = -1;
    depth_[root_] = 0;
    std::vector<char> seen(static_cast<size_t>(n_ + m_), 0);
    seen[root_] = 1;
    while (!stack.empty()) {
      const Index v = stack.back();
      stack.pop_back();
      for (int32_t id : adj_[v]) {
        const Index w = arc_other(id, v);
        if (seen[w]) continue;
        seen[w] = 1;
        parent_[w] = v;
        parc_[w] = id;
        depth_[w] = depth_[v] + 1;
        stack.push_back(w);
      }
    }
  }

  // Duals from a DFS over the tree: f[root-side] anchored at 0, every tree
  // arc tight (f_i + g_j = C_ij).
  void rebuild_duals() {
    f_.assign(static_cast<size_t>(n_), 0.0);
    g_.assign(static_cast<size_t>(m_), 0.0);
    std::vector<Index> stack{root_};
    std::vector<char> seen(static_cast<size_t>(n_ + m_), 0);
    seen[root_] = 1;
    if (root_ < n_)
      f_[root_] = 0.0;
    else
      g_[root_ - n_] = 0.0;
    while (!stack.empty()) {
      const Index v = stack.back();
      stack.pop_back();
      for (int32_t id : adj_[v]) {
        const Index w = arc_other(id, v);
        if (seen[w]) continue;
        seen[w] = 1;
        const Index i = arc_i_[id], j = arc_j_[id];
        if (w < n_)
          f_[w] = C_(i, j) - g_[j];
        else
          g_[j] = C_(i, j) - f_[i];
        stack.push_back(w);
      }
    }
  }

  // Block pricing: scan a window of the (column-major) cost array per pivot
  // and take the most negative reduced cost seen in it.
  Candidate price_block() {
    const Index total = n_ * m_;
    const Index block = std::max<Index>(64, static_cast<Index>(std::sqrt(static_cast<double>(total))));
    const double* c = C_.data();
    Candidate best;
    Index i = scan_i_, j = scan_j_;
    for (Index scanned = 0; scanned < total; ++scanned) {
      const double r = c[j * n_ + i] - f_[i] - g_[j];
      if (r < best.reduced) {
        best.found = true;
        best.i = i;
        best.j = j;
        best.reduced = r;
      }
      if (++i == n_) {
        i = 0;
        if (++j == m_) j = 0;
      }
      if ((scanned + 1) % block == 0 && best.reduced < -opt_eps_) break;
    }
    scan_i_ = i;
    scan_j_ = j;
    if (best.reduced >= -opt_eps_) best.found = false;
    return best;
  }

  Candidate price_full() {
    Candidate best;
    const double* c = C_.data();
    for (Index j = 0; j < m_; ++j) {
      const double* col = c + j * n_;
      const double gj = g_[j];
      for (Index i = 0; i < n_; ++i) {
        const double r = col[i] - f_[i] - gj;
        if (r < best.reduced) {
          best.found = true;
          best.i = i;
          best.j = j;
          best.reduced = r;
        }
      }
    }
    if (best.reduced >= -opt_eps_) best.found = false;
    return best;
  }

  void pivot_loop() {
    const Index pivot_cap = 400 * (n_ + m_) + 200000;
    while (true) {
      const Candidate cand = price_block();
      if (!cand.found) return;
      pivot(cand.i, cand.j);
      ensure(++pivots_ <= pivot_cap, "transport: pivot limit exceeded");
    }
  }

  void pivot(Index ei, Index ej) {
    const Index u = ei, w = node_of_col(ej);
    // Tree paths from both entering endpoints up to their lowest common
    // ancestor; the pivot cycle is entering arc + path_w (upward) + path_u
    // (downward). Counting from either endpoint, even positions carry -theta.
    path_u_.clear();
    path_w_.clear();
    Index au = u, aw = w;
    while (depth_[au] > depth_[aw]) {
      path_u_.push_back(parc_[au]);
      au = parent_[au];
    }
    while (depth_[aw] > depth_[au]) {
      path_w_.push_back(parc_[aw]);
      aw = parent_[aw];
    }
    while (au != aw) {
      path_u_.push_back(parc_[au]);
      au = parent_[au];
      path_w_.push_back(parc_[aw]);
      aw = parent_[aw];
    }

    // Leaving arc: minimum flow among minus arcs, ties broken by smallest
    // (i,j) so the pivot sequence is deterministic.
    double theta = std::numeric_limits<double>::infinity();
    int32_t leave = -1;
    bool leave_on_u = false;
    auto consider = [&](int32_t id, bool on_u) {
      const double fl = arc_flow_[id];
      if (fl < theta ||
          (fl == theta && leave >= 0 &&
           (arc_i_[id] < arc_i_[leave] ||
            (arc_i_[id] == arc_i_[leave] && arc_j_[id] < arc_j_[leave])))) {
        theta = fl;
        leave = id;
        leave_on_u = on_u;
      }
    };
    for (size_t p = 0; p < path_u_.size(); p += 2) consider(path_u_[p], true);
    for (size_t p = 0; p < path_w_.size(); p += 2) consider(path_w_[p], false);
    ensure(leave >= 0, "transport: empty pivot cycle");

    for (size_t p = 0; p < path_u_.size(); ++p)
      arc_flow_[path_u_[p]] += (p % 2 == 0) ? -theta : theta;
    for (size_t p = 0; p < path_w_.size(); ++p)
      arc_flow_[path_w_[p]] += (p % 2 == 0) ? -theta : theta;

    // Splice: drop the leaving arc, reuse its slot for the entering arc, and
    // re-root the cut subtree at the entering endpoint it contains. The
    // subtree walk below re-derives every parent pointer inside it, so only
    // the new root needs fixing here.
    const Index li = arc_i_[leave], lj = arc_j_[leave];
    remove_adj(li, leave);
    remove_adj(node_of_col(lj), leave);
    arc_i_[leave] = ei;
    arc_j_[leave] = ej;
    arc_flow_[leave] = theta;
    adj_[u].push_back(leave);
    adj_[w].push_back(leave);

    const Index s = leave_on_u ? u : w;
    parent_[s] = (s == u) ? w : u;
    parc_[s] = leave;
    refresh_subtree(s);
  }

  void remove_adj(Index v, int32_t id) {
    auto& lst = adj_[v];
    for (size_t k = 0; k < lst.size(); ++k) {
      if (lst[k] == id) {
        lst[k] = lst.back();
        lst.pop_back();
        return;
      }
    }
    ensure(false, "transport: arc missing from adjacency");
  }

  // Depths and duals of the re-rooted subtree, walking down from its new
  // attachment point.
  void refresh_subtree(Index s) {
    dfs_stack_.clear();
    dfs_stack_.push_back(s);
    {
      const int32_t id = parc_[s];
      const Index i = arc_i_[id], j = arc_j_[id];
      depth_[s] = depth_[parent_[s]] + 1;
      if (s < n_)
        f_[s] = C_(i, j) - g_[j];
      else
        g_[s - n_] = C_(i, j) - f_[i];
    }
    while (!dfs_stack_.empty()) {
      const Index v = dfs_stack_.back();
      dfs_stack_.pop_back();
      for (int32_t id : adj_[v]) {
        if (id == parc_[v]) continue;
        const Index ch = arc_other(id, v);
        parent_[ch] = v;
        parc_[ch] = id;
        depth_[ch] = depth_[v] + 1;
        const Index i = arc_i_[id], j = arc_j_[id];
        if (ch < n_)
          f_[ch] = C_(i, j) - g_[j];
        else
          g_[j] = C_(i, j) - f_[i];
        dfs_stack_.push_back(ch);
      }
    }
  }

  // Final flows come from leaf elimination on the optimal tree against the
  // exact (unperturbed) marginals, so the graded perturbation never reaches
  // the reported plan.
  OtSolution extract() {
    const Index N = n_ + m_;
    std::vector<double> excess(static_cast<size_t>(N));
    for (Index i = 0; i < n_; ++i) excess[i] = a_[i];
    for (Index j = 0; j < m_; ++j) excess[n_ + j] = -b_[j];

    std::vector<Index> order;
    order.reserve(N);
    {
      std::vector<Index> stack{root_};
      std::vector<char> seen(static_cast<size_t>(N), 0);
      seen[root_] = 1;
      while (!stack.empty()) {
        const Index v = stack.back();
        stack.pop_back();
        order.push_back(v);
        for (int32_t id : adj_[v]) {
          const Index w2 = arc_other(id, v);
          if (!seen[w2]) {
            seen[w2] = 1;
            stack.push_back(w2);
          }
        }
      }
    }
    ensure(static_cast<Index>(order.size()) == N, "transport: basis tree not spanning");

    std::vector<double> flow(arc_flow_.size(), 0.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Index v = *it;
      if (v == root_) continue;
      const int32_t id = parc_[v];
      // Push the node's excess across its parent arc; sign depends on which
      // side is the row (supply) node.
      const double e = excess[v];
      const bool v_is_row = v < n_;
      flow[id] = v_is_row ? e : -e;
      excess[parent_[v]] += e;
    }

    OtSolution sol;
    sol.pivots = pivots_;
    sol.plan.n = n_;
    sol.plan.m = m_;
    sol.plan.row_marginal = a_;
    sol.plan.col_marginal = b_;

    const double clamp_tol = total_perturbation_ + 1e-10;
    double primal = 0.0;
    for (size_t id = 0; id < flow.size(); ++id) {
      double fl = flow[id];
      if (fl <= 0.0) {
        ensure(fl >= -clamp_tol, "transport: negative basic flow " + std::to_string(fl));
        continue;
      }
      sol.plan.entries.push_back({arc_i_[id], arc_j_[id], fl});
      primal += fl * C_(arc_i_[id], arc_j_[id]);
    }
    std::sort(sol.plan.entries.begin(), sol.plan.entries.end(),
              [](const PlanEntry& p, const PlanEntry& q) {
                return p.i != q.i ? p.i < q.i : p.j < q.j;
              });
    sol.plan.basic = true;
    const double resid = sol.plan.marginal_residual();
    ensure(resid <= 1e-9, "transport: marginal residual " + std::to_string(resid));

    // Normalize the duals so that g_m = 0 (spec of the API, and the tighten
    // step downstream relies on a pinned gauge).
    const double shift = g_[m_ - 1];
    sol.duals.f.resize(n_);
    sol.duals.g.resize(m_);
    for (Index i = 0; i < n_; ++i) sol.duals.f[i] = f_[i] + shift;
    for (Index j = 0; j < m_; ++j) sol.duals.g[j] = g_[j] - shift;

    sol.primal_value = primal;
    sol.dual_value = sol.duals.f.dot(a_) + sol.duals.g.dot(b_);
    const double gap = std::abs(sol.primal_value - sol.dual_value);
    ensure(gap <= 1e-9 * (1.0 + std::abs(sol.primal_value)),
           "transport: duality gap " + std::to_string(gap));
    return sol;
  }

  const Matrix& C_;
  Index n_, m_;
  Vector a_, b_;    // exact marginals
  Vector ap_, bp_;  // perturbed marginals driving the pivots
  std::vector<Index> rorder_, corder_;

  std::vector<Index> arc_i_, arc_j_;
  std::vector<double> arc_flow_;
  std::vector<std::vector<int32_t>> adj_;
  std::vector<Index> parent_, depth_;
  std::vector<int32_t> parc_;
  std::vector<double> f_, g_;
  std::vector<int32_t> path_u_, path_w_;
  std::vector<Index> dfs_stack_;

  Index root_ = 0;
  Index scan_i_ = 0, scan_j_ = 0;
  Index pivots_ = 0;
  double opt_eps_ = 1e-11;
  double total_perturbation_ = 0.0;
};

void check_marginal_inputs(const Vector& a, const Vector& b) {
  require(a.size() > 0 && b.size() > 0, "transport: empty marginals");
  require((a.array() > 0).all() && (b.array() > 0).all(),
          "transport: marginals must be strictly positive");
  const double sa = a.sum(), sb = b.sum();
  require(std::abs(sa - sb) <= 1e-9 * std::max(1.0, std::max(sa, sb)),
          "transport: marginal totals differ: " + std::to_string(sa) + " vs " +
              std::to_string(sb));
}

std::vector<Index> sorted_order(const Vector& key) {
  std::vector<Index> order(static_cast<size_t>(key.size()));
  std::iota(order.begin(), order.end(), Index(0));
  std::sort(order.begin(), order.end(), [&](Index p, Index q) {
    return key[p] != key[q] ? key[p] < key[q] : p < q;
  });
  return order;
}

OtSolution run_simplex(const Matrix& C, const Vector& a, const Vector& b,
                       std::vector<Index> rorder, std::vector<Index> corder) {
  require(C.rows() == a.size() && C.cols() == b.size(),
          "transport: cost/marginal size mismatch");
  require(C.rows() * C.cols() <= Index(25000000),
          "transport: dense instance above 5000x5000 cap");
  require(C.allFinite(), "transport: cost matrix has non-finite entries");
  check_marginal_inputs(a, b);

  // Two mirrored runs; the averaged duals sit inside the optimal dual face
  // (strictly slack wherever either run is), which keeps sample points off
  // the tie set of the resulting potential. Nondegenerate instances have a
  // unique normalized dual, where the average changes nothing.
  NetworkSimplex plus(C, a, b, rorder, corder);
  OtSolution sol = plus.run(1.0);
  NetworkSimplex minus(C, a, b, std::move(rorder), std::move(corder));
  const OtSolution alt = minus.run(-1.0);
  ensure(std::abs(sol.primal_value - alt.primal_value) <=
             1e-9 * (1.0 + std::abs(sol.primal_value)),
         "transport: mirrored runs disagree on the optimal value");
  sol.duals.f = 0.5 * (sol.duals.f + alt.duals.f);
  sol.duals.g = 0.5 * (sol.duals.g + alt.duals.g);
  sol.pivots += alt.pivots;
  sol.dual_value = sol.duals.f.dot(a) + sol.duals.g.dot(b);
  const double gap = std::abs(sol.primal_value - sol.dual_value);
  ensure(gap <= 1e-9 * (1.0 + std::abs(sol.primal_value)),
         "transport: duality gap " + std::to_string(gap));
  return sol;
}

}  // namespace

OtSolution solve_with_cost(const Matrix& C, const Vector& a, const Vector& b) {
  require(C.rows() > 0 && C.cols() > 0, "transport: empty cost matrix");
  // No geometry available: warm-start orders from cost rays. When column 0
  // happens to be an extreme support point of a 1-d instance this recovers
  // the monotone staircase; otherwise it is just a deterministic heuristic.
  std::vector<Index> rorder = sorted_order(C.col(0));
  std::vector<Index> corder = sorted_order(C.row(rorder[0]).transpose());
  return run_simplex(C, a, b, std::move(rorder), std::move(corder));
}

OtSolution solve(const PointCloudMeasure& mu, const PointCloudMeasure& nu) {
  mu.check();
  nu.check();
  require(mu.size() * nu.size() <= Index(25000000),
          "transport: dense instance above 5000x5000 cap");
  const Matrix C = build_cost(mu, nu);
  // Warm start: sort both supports along the coordinate with the widest
  // combined spread. In 1-d the northwest staircase over these orders is the
  // monotone coupling, which is optimal outright.
  const Index d = mu.dim();
  Index axis = 0;
  double best_spread = -1.0;
  for (Index k = 0; k < d; ++k) {
    const double lo = std::min(mu.points.col(k).minCoeff(), nu.points.col(k).minCoeff());
    const double hi = std::max(mu.points.col(k).maxCoeff(), nu.points.col(k).maxCoeff());
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      axis = k;
    }
  }
  return run_simplex(C, mu.weights, nu.weights, sorted_order(mu.points.col(axis)),
                     sorted_order(nu.points.col(axis)));
}

SlacknessReport verify_slackness(const OtSolution& sol, const Matrix& C) {
  require(C.rows() == sol.plan.n && C.cols() == sol.plan.m,
          "slackness: cost size mismatch");
  SlacknessReport rep;
  const Vector& f = sol.duals.f;
  const Vector& g = sol.duals.g;
  for (Index j = 0; j < C.cols(); ++j)
    for (Index i = 0; i < C.rows(); ++i) {
      const double viol = f[i] + g[j] - C(i, j);
      rep.max_dual_violation = std::max(rep.max_dual_violation, viol);
    }
  for (const auto& e : sol.plan.entries) {
    if (e.mass <= kActiveMassEps) continue;
    ++rep.active_cells;
    rep.max_active_residual = std::max(
        rep.max_active_residual, std::abs(f[e.i] + g[e.j] - C(e.i, e.j)));
  }
  return rep;
}

void write_plan_csv(const TransportPlan& plan, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << "i,j,mass\n";
  out.precision(17);
  for (const auto& e : plan.entries) out << e.i << ',' << e.j << ',' << e.mass << '\n';
  ensure(out.good(), "write failed for " + path);
}

void write_duals_json(const DualPair& duals, const std::string& path) {
  nlohmann::json doc;
  doc["f"] = std::vector<double>(duals.f.data(), duals.f.data() + duals.f.size());
  doc["g"] = std::vector<double>(duals.g.data(), duals.g.data() + duals.g.size());
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << doc.dump(1) << '\n';
  ensure(out.good(), "write failed for " + path);
}

DualPair read_duals_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid duals JSON in " + path + ": " + e.what());
  }
  require(doc.contains("f") && doc.contains("g"), "duals JSON must contain f and g");
  const auto fv = doc["f"].get<std::vector<double>>();
  const auto gv = doc["g"].get<std::vector<double>>();
  DualPair d;
  d.f = Eigen::Map<const Vector>(fv.data(), static_cast<Index>(fv.size()));
  d.g = Eigen::Map<const Vector>(gv.data(), static_cast<Index>(gv.size()));
  return d;
}

}  // namespace ot
