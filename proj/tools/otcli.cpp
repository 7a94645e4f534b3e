// otcli: command-line front end for the otmap library.
//
// Subcommands: solve, potential, map, semidual, rates, coupling-rates,
// bounds-check, demo. Every run writes a manifest.json next to its outputs
// so results can be reproduced from the recorded configuration. Exit codes:
// 0 success, 2 validation error (bad flags or inputs), 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ot/bounds.hpp"
#include "ot/brenier.hpp"
#include "ot/experiments.hpp"
#include "ot/measures.hpp"
#include "ot/semidiscrete.hpp"
#include "ot/transport.hpp"

using namespace ot;

namespace {

std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

FileFormat infer_format(const std::string& path, const std::string& chosen) {
  if (chosen == "csv") return FileFormat::Csv;
  if (chosen == "json") return FileFormat::Json;
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv")
    return FileFormat::Csv;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return FileFormat::Json;
  throw std::invalid_argument("cannot infer format of '" + path +
                              "'; pass --format csv|json");
}

std::vector<Index> parse_index_list(const std::string& text,
                                    const std::string& flag) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t pos = 0;
      const long long v = std::stoll(item, &pos);
      require(pos == item.size() && v > 0, "");
      out.push_back(Index(v));
    } catch (const std::exception&) {
      throw std::invalid_argument(flag + ": '" + item +
                                  "' is not a positive integer");
    }
  }
  require(!out.empty(), flag + ": empty list");
  return out;
}

std::string ensure_dir(const std::string& dir) {
  require(!dir.empty(), "--out must not be empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, "cannot create output directory " + dir);
  return dir;
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << j.dump(1) << "\n";
  ensure(out.good(), "write failed for " + path);
}

// Manifest for the file-oriented commands (the rate runners write their own
// richer manifest through the experiments module).
void write_command_manifest(const std::string& command,
                            const nlohmann::json& options,
                            const std::vector<std::string>& outputs,
                            const std::string& dir) {
  nlohmann::json j;
  j["version"] = kOtmapVersion;
  j["command"] = command;
  j["options"] = options;
  j["outputs"] = outputs;
  write_json_file(j, dir + "/manifest.json");
}

int cmd_solve(const std::string& mu_path, const std::string& nu_path,
              const std::string& format, const std::string& out_dir) {
  const PointCloudMeasure mu = read_measure(mu_path, infer_format(mu_path, format));
  const PointCloudMeasure nu = read_measure(nu_path, infer_format(nu_path, format));
  const OtSolution sol = solve(mu, nu);

  const std::string dir = ensure_dir(out_dir);
  const std::string plan_path = dir + "/plan.csv";
  {
    std::ofstream out(plan_path);
    require(out.good(), "cannot open " + plan_path + " for writing");
    out << "i,j,mass\n";
    for (const PlanEntry& e : sol.plan.entries)
      out << e.i << ',' << e.j << ',' << fmt17(e.mass) << '\n';
    ensure(out.good(), "write failed for " + plan_path);
  }
  const std::string duals_path = dir + "/duals.json";
  nlohmann::json dj;
  dj["f"] = std::vector<double>(sol.duals.f.data(),
                                sol.duals.f.data() + sol.duals.f.size());
  dj["g"] = std::vector<double>(sol.duals.g.data(),
                                sol.duals.g.data() + sol.duals.g.size());
  dj["primal_value"] = sol.primal_value;
  dj["dual_value"] = sol.dual_value;
  dj["pivots"] = sol.pivots;
  dj["marginal_residual"] = sol.plan.marginal_residual();
  write_json_file(dj, duals_path);

  write_command_manifest("solve",
                         {{"mu", mu_path}, {"nu", nu_path}},
                         {plan_path, duals_path}, dir);
  std::cout << "value=" << fmt17(sol.primal_value)
            << " entries=" << sol.plan.entries.size()
            << " pivots=" << sol.pivots << "\n";
  return 0;
}

int cmd_potential(const std::string& mu_path, const std::string& nu_path,
                  const std::string& format, bool do_tighten, bool do_check,
                  const std::string& out_dir) {
  const PointCloudMeasure mu = read_measure(mu_path, infer_format(mu_path, format));
  const PointCloudMeasure nu = read_measure(nu_path, infer_format(nu_path, format));
  const OtSolution sol = solve(mu, nu);
  BrenierPotential phi = from_dual(nu, sol.duals.g);
  if (do_tighten) phi = tighten(phi);

  const std::string dir = ensure_dir(out_dir);
  const std::string pot_path = dir + "/potential.json";
  write_potential_json(phi, pot_path);
  std::vector<std::string> outputs{pot_path};

  int rc = 0;
  if (do_check) {
    const PushforwardReport rep = pushforward_check(phi, sol, mu, nu);
    nlohmann::json cj;
    cj["max_affine_residual"] = rep.max_affine_residual;
    cj["violations"] = rep.violations;
    cj["permutation"] = rep.permutation;
    cj["max_map_deviation"] = rep.max_map_deviation;
    const std::string check_path = dir + "/pushforward.json";
    write_json_file(cj, check_path);
    outputs.push_back(check_path);
    std::cout << "pushforward residual=" << fmt17(rep.max_affine_residual)
              << " violations=" << rep.violations << "\n";
    if (rep.violations > 0) rc = 3;
  }
  write_command_manifest(
      "potential",
      {{"mu", mu_path}, {"nu", nu_path}, {"tighten", do_tighten}}, outputs,
      dir);
  std::cout << "atoms=" << phi.size() << " dim=" << phi.dim()
            << " tightened=" << (phi.tightened ? "yes" : "no") << "\n";
  return rc;
}

int cmd_map(const std::string& pot_path, const std::string& points_path,
            const std::string& format, const std::string& out_dir) {
  const BrenierPotential phi = read_potential_json(pot_path);
  const PointCloudMeasure pts =
      read_measure(points_path, infer_format(points_path, format));
  require(pts.dim() == phi.dim(), "points dimension does not match potential");
  const Matrix mapped = monge_map(phi, pts.points);

  const std::string dir = ensure_dir(out_dir);
  const std::string out_path = dir + "/mapped.csv";
  {
    std::ofstream out(out_path);
    require(out.good(), "cannot open " + out_path + " for writing");
    for (Index c = 0; c < pts.dim(); ++c) out << "x" << (c + 1) << ',';
    for (Index c = 0; c < pts.dim(); ++c)
      out << "t" << (c + 1) << (c + 1 < pts.dim() ? ',' : '\n');
    for (Index i = 0; i < pts.size(); ++i) {
      for (Index c = 0; c < pts.dim(); ++c) out << fmt17(pts.points(i, c)) << ',';
      for (Index c = 0; c < pts.dim(); ++c)
        out << fmt17(mapped(i, c)) << (c + 1 < pts.dim() ? ',' : '\n');
    }
    ensure(out.good(), "write failed for " + out_path);
  }
  write_command_manifest("map",
                         {{"potential", pot_path}, {"points", points_path}},
                         {out_path}, dir);
  std::cout << "mapped " << pts.size() << " points\n";
  return 0;
}

int cmd_semidual(const std::string& source_path, const std::string& nu_path,
                 const std::string& format, double tol, Index max_rounds,
                 const std::string& out_dir) {
  SemiDual sd;
  sd.source_samples =
      read_measure(source_path, infer_format(source_path, format));
  sd.target = read_measure(nu_path, infer_format(nu_path, format));
  sd.g = Vector::Zero(sd.target.size());
  const MinimizeReport rep = minimize(sd, tol, max_rounds);

  const std::string dir = ensure_dir(out_dir);
  const std::string pot_path = dir + "/potential.json";
  write_potential_json(tighten(from_dual(sd.target, rep.g)), pot_path);
  nlohmann::json rj;
  rj["value"] = rep.value;
  rj["iterations"] = rep.iterations;
  rj["subgradient_norm"] = rep.subgradient_norm;
  rj["converged"] = rep.converged;
  const std::string rep_path = dir + "/report.json";
  write_json_file(rj, rep_path);
  write_command_manifest(
      "semidual",
      {{"source", source_path}, {"nu", nu_path}, {"tol", tol},
       {"max_rounds", max_rounds}},
      {pot_path, rep_path}, dir);
  std::cout << "value=" << fmt17(rep.value)
            << " residual=" << fmt17(rep.subgradient_norm)
            << " converged=" << (rep.converged ? "yes" : "no") << "\n";
  return rep.converged ? 0 : 3;
}

void print_rate_summary(const RateResult& res) {
  const RateSummary& s = res.summary;
  for (size_t i = 0; i < s.n_levels.size(); ++i)
    std::cout << "n=" << s.n_levels[i] << " median=" << fmt17(s.medians[Index(i)])
              << " mean=" << fmt17(s.means[Index(i)]) << "\n";
  std::cout << "slope=" << fmt17(s.slope)
            << " envelope_ok=" << (s.envelope_ok ? "yes" : "no")
            << " inversions=" << s.inversions << "\n";
  if (s.reference_drift >= 0.0)
    std::cout << "reference_drift=" << fmt17(s.reference_drift) << "\n";
  for (const std::string& f : res.files) std::cout << "wrote " << f << "\n";
}

int cmd_rates(const std::string& scenario_name, const std::string& n_list,
              const std::string& m_list, Index trials, std::uint64_t seed,
              Index mc_points, Index ref_points, bool check_reference,
              bool have_trials, bool have_seed, bool have_mc,
              const std::string& out_dir) {
  const Scenario scenario = scenario_from_string(scenario_name);
  ExperimentConfig cfg;
  switch (scenario) {
    case Scenario::MapRate1d:
      cfg = ExperimentConfig::map_rate_1d_defaults();
      break;
    case Scenario::MapRate2dSemidiscrete:
      cfg = ExperimentConfig::semidiscrete_defaults();
      break;
    default:
      throw std::invalid_argument(
          "rates handles map scenarios; use coupling-rates or demo");
  }
  if (!n_list.empty()) cfg.n_grid = parse_index_list(n_list, "--n");
  if (!m_list.empty()) cfg.m_grid = parse_index_list(m_list, "--m");
  if (have_trials) cfg.trials = trials;
  if (have_seed) cfg.seed = seed;
  if (have_mc) cfg.mc_points = mc_points;
  if (ref_points > 0) cfg.ref_points = ref_points;
  cfg.check_reference = check_reference;
  cfg.output = out_dir.empty() ? to_string(scenario) + "_run" : out_dir;
  ensure_dir(cfg.output);

  const RateResult res = run_map_rate(cfg);
  print_rate_summary(res);
  return 0;
}

int cmd_coupling_rates(const std::string& n_list, const std::string& m_list,
                       Index trials, std::uint64_t seed, Index ref_points,
                       bool have_trials, bool have_seed,
                       const std::string& out_dir) {
  ExperimentConfig cfg = ExperimentConfig::coupling_defaults();
  if (!n_list.empty()) cfg.n_grid = parse_index_list(n_list, "--n");
  if (!m_list.empty()) cfg.m_grid = parse_index_list(m_list, "--m");
  if (have_trials) cfg.trials = trials;
  if (have_seed) cfg.seed = seed;
  if (ref_points > 0) cfg.ref_points = ref_points;
  cfg.output = out_dir.empty() ? "coupling-rate_run" : out_dir;
  ensure_dir(cfg.output);

  const RateResult res = run_coupling_rate(cfg);
  print_rate_summary(res);
  return 0;
}

// Instance JSON for bounds-check:
//   {"R":1.0,"M":1.0,"q":1.0,"d":1,"L":0.7,          (L optional)
//    "phi":"phi.json","phibar":"phibar.json","samples":"mu.csv"}
// phi/phibar are potential JSON files, samples a measure file whose points
// are the Monte-Carlo mu draws.
int cmd_bounds_check(const std::string& instance_path,
                     const std::string& out_dir) {
  std::ifstream in(instance_path);
  require(in.good(), "cannot open " + instance_path);
  nlohmann::json inst;
  try {
    inst = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad instance JSON: ") + e.what());
  }
  for (const char* key : {"R", "M", "q", "d", "phi", "phibar", "samples"})
    require(inst.contains(key),
            std::string("instance is missing \"") + key + "\"");

  const auto base = std::filesystem::path(instance_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q.string() : (base / q).string();
  };
  const BrenierPotential phi =
      read_potential_json(resolve(inst["phi"].get<std::string>()));
  const BrenierPotential phibar =
      read_potential_json(resolve(inst["phibar"].get<std::string>()));
  const std::string samples_path = resolve(inst["samples"].get<std::string>());
  const PointCloudMeasure mu_hat =
      read_measure(samples_path, infer_format(samples_path, ""));

  const double q = inst["q"].get<double>();
  BoundConstants c = constants(inst["R"].get<double>(),
                               inst["M"].get<double>(),
                               inst["d"].get<Index>(), q);
  if (inst.contains("L")) c.L = inst["L"].get<double>();
  const ErrorBoundReport rep = error_bound_check(phi, phibar, mu_hat.points, c, q);

  nlohmann::json vj;
  vj["lhs"] = rep.lhs;
  vj["lhs_stderr"] = rep.lhs_stderr;
  vj["rhs"] = rep.rhs;
  vj["delta"] = rep.delta;
  vj["threshold"] = rep.threshold;
  vj["case"] = rep.bound_case;
  vj["holds"] = rep.holds;
  vj["margin"] = rep.rhs - rep.lhs;
  vj["constants"] = {{"C_Rd", c.C_Rd}, {"C_cor45", c.C_cor45}, {"L", c.L}};

  const std::string dir = ensure_dir(out_dir);
  const std::string verdict_path = dir + "/verdict.json";
  write_json_file(vj, verdict_path);
  write_command_manifest("bounds-check", {{"instance", instance_path}},
                         {verdict_path}, dir);
  std::cout << "case=" << rep.bound_case << " lhs=" << fmt17(rep.lhs)
            << " rhs=" << fmt17(rep.rhs)
            << " holds=" << (rep.holds ? "yes" : "no") << "\n";
  return rep.holds ? 0 : 3;
}

int cmd_demo(const std::string& which, const std::string& n_list,
             std::uint64_t seed, Index grid_side, bool have_seed,
             bool have_grid, const std::string& out_dir) {
  require(which == "figure1", "unknown demo '" + which + "' (try figure1)");
  ExperimentConfig cfg = ExperimentConfig::figure1_defaults();
  if (!n_list.empty()) cfg.n_grid = parse_index_list(n_list, "--n");
  if (have_seed) cfg.seed = seed;
  if (have_grid) cfg.grid_side = grid_side;
  cfg.output = out_dir.empty() ? "figure1-demo_run" : out_dir;
  ensure_dir(cfg.output);

  const Figure1Result res = run_figure1(cfg);
  for (size_t i = 0; i < res.n_levels.size(); ++i)
    std::cout << "n=" << res.n_levels[i]
              << " distinct_values=" << res.distinct_values[i] << "\n";
  for (size_t i = 0; i < res.boundary_shift.size(); ++i)
    std::cout << "shift " << res.n_levels[i] << "->" << res.n_levels[i + 1]
              << " = " << fmt17(res.boundary_shift[i]) << "\n";
  for (const std::string& f : res.files) std::cout << "wrote " << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"otmap: exact quadratic optimal transport, Brenier potentials, "
               "error bounds and rate experiments"};
  app.require_subcommand(1);
  argv = app.ensure_utf8(argv);

  std::string mu_path, nu_path, format, out_dir;
  std::string pot_path, points_path, source_path, instance_path;
  std::string scenario_name, n_list, m_list, demo_which = "figure1";
  Index trials = 0, mc_points = 0, ref_points = 0, max_rounds = 500,
        grid_side = 0;
  std::uint64_t seed = 0;
  double tol = 1e-9;
  bool do_tighten = false, do_check = false, check_reference = false;

  CLI::App* solve_cmd = app.add_subcommand("solve", "exact OT between two measures");
  solve_cmd->add_option("--mu", mu_path, "source measure file")->required();
  solve_cmd->add_option("--nu", nu_path, "target measure file")->required();
  solve_cmd->add_option("--format", format, "measure file format")
      ->check(CLI::IsMember({"csv", "json"}));
  solve_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* pot_cmd =
      app.add_subcommand("potential", "solve and export the Brenier potential");
  pot_cmd->add_option("--mu", mu_path, "source measure file")->required();
  pot_cmd->add_option("--nu", nu_path, "target measure file")->required();
  pot_cmd->add_option("--format", format, "measure file format")
      ->check(CLI::IsMember({"csv", "json"}));
  pot_cmd->add_flag("--tighten", do_tighten, "tighten offsets via the conjugate");
  pot_cmd->add_flag("--check", do_check, "run the pushforward consistency check");
  pot_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* map_cmd = app.add_subcommand("map", "apply a stored potential's map");
  map_cmd->add_option("--potential", pot_path, "potential JSON file")->required();
  map_cmd->add_option("--points", points_path, "points to map (measure file)")
      ->required();
  map_cmd->add_option("--format", format, "points file format")
      ->check(CLI::IsMember({"csv", "json"}));
  map_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* semi_cmd =
      app.add_subcommand("semidual", "semi-discrete dual minimization");
  semi_cmd->add_option("--source", source_path, "source samples measure file")
      ->required();
  semi_cmd->add_option("--nu", nu_path, "target measure file")->required();
  semi_cmd->add_option("--format", format, "measure file format")
      ->check(CLI::IsMember({"csv", "json"}));
  semi_cmd->add_option("--tol", tol, "convergence tolerance");
  semi_cmd->add_option("--max-rounds", max_rounds, "outer round budget");
  semi_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* rates_cmd =
      app.add_subcommand("rates", "map estimation rate experiments");
  rates_cmd->add_option("--scenario", scenario_name,
                        "map-rate-1d or map-rate-2d-semidiscrete")
      ->required();
  rates_cmd->add_option("--n", n_list, "comma-separated sample sizes");
  rates_cmd->add_option("--m", m_list, "target sizes (single or paired)");
  CLI::Option* rates_trials = rates_cmd->add_option("--trials", trials, "trials per n");
  CLI::Option* rates_seed = rates_cmd->add_option("--seed", seed, "base seed");
  CLI::Option* rates_mc =
      rates_cmd->add_option("--mc-points", mc_points, "Monte-Carlo budget");
  rates_cmd->add_option("--ref-points", ref_points, "reference grid size");
  rates_cmd->add_flag("--check-reference", check_reference,
                      "also build a 4x reference and record drift");
  rates_cmd->add_option("--out", out_dir, "output directory");

  CLI::App* coup_cmd =
      app.add_subcommand("coupling-rates", "coupling estimation rate experiment");
  coup_cmd->add_option("--n", n_list, "comma-separated sample sizes");
  coup_cmd->add_option("--m", m_list, "target sizes (single or paired)");
  CLI::Option* coup_trials = coup_cmd->add_option("--trials", trials, "trials per n");
  CLI::Option* coup_seed = coup_cmd->add_option("--seed", seed, "base seed");
  coup_cmd->add_option("--ref-points", ref_points, "reference quantile count");
  coup_cmd->add_option("--out", out_dir, "output directory");

  CLI::App* bounds_cmd =
      app.add_subcommand("bounds-check", "dual error bound verdict");
  bounds_cmd->add_option("--instance", instance_path, "instance JSON file")
      ->required();
  bounds_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* demo_cmd = app.add_subcommand("demo", "qualitative demonstrations");
  demo_cmd->add_option("which", demo_which, "demo name (figure1)");
  demo_cmd->add_option("--n", n_list, "comma-separated sample sizes");
  CLI::Option* demo_seed = demo_cmd->add_option("--seed", seed, "base seed");
  CLI::Option* demo_grid =
      demo_cmd->add_option("--grid-side", grid_side, "evaluation lattice side");
  demo_cmd->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (solve_cmd->parsed()) return cmd_solve(mu_path, nu_path, format, out_dir);
    if (pot_cmd->parsed())
      return cmd_potential(mu_path, nu_path, format, do_tighten, do_check,
                           out_dir);
    if (map_cmd->parsed())
      return cmd_map(pot_path, points_path, format, out_dir);
    if (semi_cmd->parsed())
      return cmd_semidual(source_path, nu_path, format, tol, max_rounds,
                          out_dir);
    if (rates_cmd->parsed())
      return cmd_rates(scenario_name, n_list, m_list, trials, seed, mc_points,
                       ref_points, check_reference, rates_trials->count() > 0,
                       rates_seed->count() > 0, rates_mc->count() > 0, out_dir);
    if (coup_cmd->parsed())
      return cmd_coupling_rates(n_list, m_list, trials, seed, ref_points,
                                coup_trials->count() > 0,
                                coup_seed->count() > 0, out_dir);
    if (bounds_cmd->parsed()) return cmd_bounds_check(instance_path, out_dir);
    if (demo_cmd->parsed())
      return cmd_demo(demo_which, n_list, seed, grid_side,
                      demo_seed->count() > 0, demo_grid->count() > 0, out_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
