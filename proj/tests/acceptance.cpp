// Acceptance run: one PASS/FAIL line per criterion, details indented below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Eigenvalues>

#include "flow_fixtures.hpp"
#include "semrom/commands.hpp"
#include "semrom/config.hpp"
#include "semrom/quadrature.hpp"
#include "semrom/rom_cg.hpp"
#include "semrom/rom_stab.hpp"
#include "stab_fixtures.hpp"

using namespace semrom;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double x, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*e", digits, x);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    notes.push_back((ok ? "ok    " : "MISS  ") + what);
    pass = pass && ok;
  }
  void note(const std::string& what) { notes.push_back("      " + what); }
};

double velocity_error(const FlowProblem& p, const Eigen::VectorXd& state,
                      const std::function<Eigen::Vector2d(double, double)>& exact) {
  const auto& disc = p.discretization();
  const FieldState u = p.physical_velocity_of(state);
  const FieldState e = sample_physical(disc, 2, [&](int c, double x, double y) { return exact(x, y)[c]; });
  FieldState d = u;
  d.values -= e.values;
  return l2_norm(disc, d) / l2_norm(disc, e);
}

double rel(const SparseMatrix& a, const SparseMatrix& b) { return SparseMatrix(a - b).norm() / b.norm(); }

std::unique_ptr<FlowProblem> expansion_problem(int order, std::vector<int> cells) {
  ProblemConfig pc;
  pc.mesh = "expansion";
  pc.cells = std::move(cells);
  pc.order = order;
  return make_flow_problem(pc);
}

// ---------------------------------------------------------------------------

Outcome poiseuille() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0, at_three = 0.0;
  for (int order = 2; order <= 8; ++order) {
    const FlowProblem prob = fixtures::channel(order);
    const SteadySolution s = solve_linearized(prob, fixtures::zero_field(prob), fixtures::viscosity(1.0));
    const double e = velocity_error(prob, s.state, [](double, double y) { return Eigen::Vector2d(4 * y * (1 - y), 0); });
    worst = std::max(worst, e);
    if (order == 3) at_three = e;
  }
  const double wall = seconds_since(t0);
  o.require(worst < 1e-9, "max relative L2 velocity error over P=2..8: " + sci(worst));
  o.require(at_three < 5e-4, "P=3 error " + sci(at_three) + " below 0.05%");
  o.require(wall < 5.0, "runtime for all seven solves " + sci(wall) + " s");
  return o;
}

Outcome channel_study() {
  Outcome o;
  const auto t0 = Clock::now();
  const double tol = 1e-4;
  const auto problem = expansion_problem(6, {2, 14, 1});
  o.note("expansion channel, 2+14 cells, P=6, " + std::to_string(problem->layout().size()) + " unknowns");

  SweepResult sweep = continuation_sweep(*problem, log_spaced_descending(0.15, 10, 22), FlowParameters{}, tol, 100);
  if (sweep.complete()) {
    o.note("window [0.15, 10]: all 22 viscosities converged");
  } else {
    o.note("window [0.15, 10]: continuation failed at nu=" + sci(*sweep.failed_nu) + " (" + sweep.failure +
           "); falling back to [0.5, 10]");
    sweep = continuation_sweep(*problem, log_spaced_descending(0.5, 10, 22), FlowParameters{}, tol, 100);
  }
  o.require(sweep.complete() && sweep.solutions.size() == 22, "22 snapshots");
  if (!sweep.complete()) return o;
  const double fom_time = seconds_since(t0);

  const SnapshotSet snaps = build_snapshot_set(*problem, sweep.solutions);
  const PodBasis basis = pod(*problem, snaps, 1.0);
  const int n99 = energy_count(basis.singular_values, 0.99);
  const int n9999 = energy_count(basis.singular_values, 0.9999);
  o.require(n99 <= 4, "99% energy with N=" + std::to_string(n99));
  o.require(n9999 <= 10, "99.99% energy with N=" + std::to_string(n9999));

  OfflineOptions oo;
  oo.flow = problem.get();
  oo.snapshots = &snaps;
  const ReducedModel model = offline_build(affine_decompose_viscosity(*problem), basis, snaps.lifting, oo);
  std::vector<int> sizes;
  for (int n = 0; n <= model.size(); ++n) sizes.push_back(n);

  // The default policy reports singular reduced matrices; the study itself
  // uses the opt-in minimum-norm correction so every N has an error.
  const auto strict = error_sweep(model, *problem, sweep.solutions, sizes, tol, 100);
  const auto rows = error_sweep(model, *problem, sweep.solutions, sizes, tol, 100, SingularPolicy::minimum_norm);
  int singular = 0;
  for (const auto& r : strict) singular += r.failures > 0 ? 1 : 0;
  o.note("rank " + std::to_string(model.size()) + "; " + std::to_string(singular) +
         " sizes have a singular reduced matrix under the default policy");
  int mean_n = -1, max_n = -1;
  for (const auto& r : rows) {
    o.note("N=" + std::to_string(r.n) + "  mean " + sci(r.mean_error) + "  max " + sci(r.max_error) +
           (r.rank_deficient ? "  (minimum-norm at " + std::to_string(r.rank_deficient) + " nu)" : ""));
    if (mean_n < 0 && r.n >= 1 && r.mean_error <= 0.01) mean_n = r.n;
    if (max_n < 0 && r.n >= 1 && r.max_error <= 0.01) max_n = r.n;
  }
  o.require(mean_n >= 1 && mean_n <= 8, "mean error <= 1% first at N=" + std::to_string(mean_n));
  o.require(max_n >= 1 && max_n <= 10, "max error <= 1% first at N=" + std::to_string(max_n));
  double plateau = 0.0;
  for (std::size_t i = rows.size() >= 3 ? rows.size() - 3 : 0; i < rows.size(); ++i) {
    plateau = std::max(plateau, rows[i].mean_error);
  }
  o.require(plateau <= 10 * tol, "plateau (worst mean error over the last three N) " + sci(plateau) +
                                     " vs 10*tol = " + sci(10 * tol));
  const double wall = seconds_since(t0);
  o.require(wall < 600.0, "runtime " + sci(wall) + " s (full-order sweep " + sci(fom_time) + " s)");
  return o;
}

struct SplitTiming {
  double offline = 0.0, online_sweep = 0.0, online_median = 0.0;
  int unknowns = 0;
};

SplitTiming split_timing(std::vector<int> cells, int fixed_n) {
  SplitTiming t;
  const auto problem = expansion_problem(4, std::move(cells));
  t.unknowns = problem->layout().local_size();
  const auto sweep = continuation_sweep(*problem, log_spaced_descending(0.5, 10, 12), FlowParameters{}, 1e-6, 100);
  if (!sweep.complete()) throw Error("timing sweep did not converge");

  const auto t0 = Clock::now();
  const SnapshotSet snaps = build_snapshot_set(*problem, sweep.solutions);
  const PodBasis basis = pod(*problem, snaps, 1.0);
  OfflineOptions oo;
  oo.flow = problem.get();
  oo.snapshots = &snaps;
  const ReducedModel model = offline_build(affine_decompose_viscosity(*problem), basis, snaps.lifting, oo);
  t.offline = seconds_since(t0);

  std::vector<int> sizes;
  for (int n = 0; n <= model.size(); ++n) sizes.push_back(n);
  for (const auto& r : error_sweep(model, *problem, sweep.solutions, sizes, 1e-6, 100, SingularPolicy::minimum_norm)) {
    t.online_sweep += r.online_seconds;
  }

  const ReducedModel small = model.truncated(std::min(fixed_n, model.size()));
  std::vector<double> samples;
  for (int rep = 0; rep < 41; ++rep) {
    const auto s0 = Clock::now();
    for (int k = 0; k < 20; ++k) {
      for (const auto& sol : sweep.solutions) {
        const double mu[1] = {sol.nu};
        online_solve(small, mu, 1e-6, 100, nullptr, SingularPolicy::minimum_norm);
      }
    }
    samples.push_back(seconds_since(s0) / (20.0 * sweep.solutions.size()));
  }
  std::nth_element(samples.begin(), samples.begin() + 20, samples.end());
  t.online_median = samples[20];
  return t;
}

Outcome offline_online() {
  Outcome o;
  const int fixed_n = 2;
  const SplitTiming base = split_timing({2, 14, 1}, fixed_n);
  const SplitTiming fine = split_timing({4, 28, 2}, fixed_n);
  const double ratio = static_cast<double>(fine.unknowns) / base.unknowns;
  o.note("local unknowns " + std::to_string(base.unknowns) + " -> " + std::to_string(fine.unknowns) + " (x" +
         sci(ratio) + "), P=4, N=" + std::to_string(fixed_n));
  o.require(ratio >= 3.9, "discretization refined about four times");
  const double change = std::abs(fine.online_median / base.online_median - 1.0);
  o.require(change < 0.2, "median online solve " + sci(base.online_median) + " s -> " + sci(fine.online_median) +
                              " s, change " + sci(100 * change) + "%");
  for (const auto* t : {&base, &fine}) {
    o.require(t->online_sweep * 10 <= t->offline,
              "online sweep " + sci(t->online_sweep) + " s vs offline " + sci(t->offline) + " s (" +
                  std::to_string(t->unknowns) + " unknowns)");
  }
  return o;
}

Outcome affine() {
  Outcome o;
  const auto problem = expansion_problem(6, {2, 14, 1});
  const AffineOperator aff = affine_decompose_viscosity(*problem);
  const SparseMatrix& scatter = problem->layout().scatter_matrix();
  const SparseMatrix viscous = problem->viscous();
  const SparseMatrix coupling = problem->divergence_coupling();

  const auto sweep = continuation_sweep(*problem, log_spaced_descending(0.5, 10, 8), FlowParameters{}, 1e-6, 100);
  const SnapshotSet snaps = build_snapshot_set(*problem, sweep.solutions);
  const PodBasis basis = pod(*problem, snaps, 1.0);
  const ReducedModel model = offline_build(aff, basis, snaps.lifting);
  // Modes are edge-consistent, so V = S G with G the global versions.
  Eigen::MatrixXd global_modes(problem->layout().size(), basis.size());
  for (int j = 0; j < basis.size(); ++j) {
    global_modes.col(j) = problem->layout().gather(basis.modes_local.col(j), GatherMode::average);
  }

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.15, 10.0);
  double worst_full = 0.0, worst_reduced = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double mu[1] = {u(rng)};
    const SparseMatrix direct = mu[0] * viscous + coupling;
    worst_full = std::max(worst_full, rel(SparseMatrix(scatter.transpose() * aff.evaluate(mu) * scatter), direct));
    const Eigen::MatrixXd projected = global_modes.transpose() * (direct * global_modes);
    Eigen::MatrixXd from_affine = Eigen::MatrixXd::Zero(basis.size(), basis.size());
    const auto th = aff.coefficients(mu);
    for (int i = 0; i < model.term_count(); ++i) from_affine += th[i] * model.reduced_affine[i];
    worst_reduced = std::max(worst_reduced, (from_affine - projected).norm() / projected.norm());
  }
  o.require(worst_full <= 1e-12, "assembled affine sum vs direct assembly, 20 random nu: " + sci(worst_full));
  o.require(worst_reduced <= 1e-12, "reduced from affine terms vs projection after assembly: " + sci(worst_reduced));
  return o;
}

Outcome block_symmetry() {
  Outcome o;
  std::vector<FlowProblem> meshes;
  for (int p : {2, 3, 4, 6}) {
    meshes.push_back(fixtures::channel(p, 4, 2));
    meshes.push_back(fixtures::expansion(p, 1, 6, 1));
  }
  std::vector<int> perm(make_expansion_mesh(8, 1, 1, 6, 1).num_elements());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(17));
  meshes.push_back(fixtures::expansion(3, 1, 6, 1, &perm));
  int exact = 0, nonzero = 0;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& prob : meshes) {
    const BlockSystem s = assemble_oseen(prob, fixtures::zero_field(prob), fixtures::viscosity(0.4));
    if (SparseMatrix(s.B - SparseMatrix(s.Bt.transpose())).norm() == 0.0) ++exact;
    FieldState w = fixtures::zero_field(prob);
    for (auto& x : w.values) x = u(rng);
    const BlockSystem a = assemble_oseen(prob, w, fixtures::viscosity(0.4));
    if (w.values.norm() > 1e-8 && SparseMatrix(a.B - SparseMatrix(a.Bt.transpose())).norm() > 0.0) ++nonzero;
  }
  const int n = static_cast<int>(meshes.size());
  o.require(exact == n, "B - Bt^T exactly zero at u=0 on " + std::to_string(exact) + "/" + std::to_string(n) + " meshes");
  o.require(nonzero == n, "nonzero with a random advecting field on " + std::to_string(nonzero) + "/" + std::to_string(n));
  return o;
}

Outcome quadrature() {
  Outcome o;
  double worst_rule = 0.0, worst_diff = 0.0;
  for (int p = 1; p <= 10; ++p) {
    const QuadratureRule r = gll_rule(p);
    for (int k = 0; k <= 2 * p - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i <= p; ++i) s += r.weights[i] * std::pow(r.nodes[i], k);
      const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
      worst_rule = std::max(worst_rule, std::abs(s - exact));
    }
    const Eigen::MatrixXd d = diff_matrix(p);
    for (int k = 0; k <= p; ++k) {
      Eigen::VectorXd f(p + 1), df(p + 1);
      for (int i = 0; i <= p; ++i) {
        f[i] = std::pow(r.nodes[i], k);
        df[i] = k ? k * std::pow(r.nodes[i], k - 1) : 0.0;
      }
      worst_diff = std::max(worst_diff, (d * f - df).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst_rule < 1e-12, "GLL exactness to degree 2P-1, P<=10: " + sci(worst_rule));
  o.require(worst_diff < 1e-11, "differentiation of x^k, k<=P<=10: " + sci(worst_diff));
  return o;
}

Outcome planted_stabilization() {
  Outcome o;
  const auto t0 = Clock::now();
  const LinearRom rom = fixtures::planted_rom();
  StabilizeOptions opt;
  opt.margin = 0.75;  // searches +0.1 and -0.5: two coordinates
  const StabilizedRom s = stabilize(rom, opt);
  const EigenReplacement rep = eigen_replace(rom.reduced, opt.margin);
  o.note(s.message);
  o.require(rep.coordinates() == 2, "two search coordinates");
  const double max_re = Eigen::EigenSolver<Eigen::MatrixXd>(s.reduced, false).eigenvalues().real().maxCoeff();
  o.require(max_re <= 0.0, "max Re(eig) after " + sci(max_re));
  o.require(s.after.slope < 0.0, "alpha_ROM " + sci(s.before.slope) + " -> " + sci(s.after.slope));
  o.require(s.after.mismatch <= 0.5 * s.before.mismatch,
            "trajectory error " + sci(s.before.mismatch) + " -> " + sci(s.after.mismatch));

  std::vector<double> lo, hi;
  rep.default_bounds(lo, hi);
  double grid_min = std::numeric_limits<double>::infinity(), disagreement = 0.0;
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 50; ++j) {
      const double x[2] = {lo[0] + (hi[0] - lo[0]) * i / 49.0, lo[1] + (hi[1] - lo[1]) * j / 49.0};
      const double v = objective(rep, x, rom, s.c1, s.c2);
      const double w = objective_terms(rep.reconstruct(x), rom, s.c1, s.c2).value;
      if (std::isfinite(v) || std::isfinite(w)) disagreement = std::max(disagreement, std::abs(v - w));
      grid_min = std::min(grid_min, v);
    }
  }
  const double best = s.improved ? s.after.value : s.before.value;
  o.require(disagreement <= 1e-12, "grid oracle agrees with the objective pointwise: " + sci(disagreement));
  o.require(best <= grid_min + 1e-6, "PSO best " + sci(best, 6) + " vs 50x50 grid minimum " + sci(grid_min, 6));
  const double wall = seconds_since(t0);
  o.require(wall < 60.0, "runtime " + sci(wall) + " s");
  return o;
}

Outcome objective_arithmetic() {
  Outcome o;
  o.require(c2_rule(-0.3) == 1e-5 && c2_rule(0.02) == 0.02 && c2_rule(1e-5) == 1e-5, "c2 table exact");
  const Eigen::MatrixXd a = fixtures::planted_operator(-0.2);
  LinearRom rom;
  rom.reduced = a;
  rom.dt = 0.1;
  rom.coefficients = Eigen::MatrixXd::Zero(4, 51);
  rom.coefficients.col(0).setOnes();
  rom.coefficients = integrate_rom(a, rom);
  const double alpha = power_slope(rom.coefficients, rom.dt).slope;
  const EigenReplacement rep = eigen_replace(a, 1.5);
  const double v = objective(rep, rep.identity(), rom, 2.0, -alpha);
  o.require(std::abs(v) <= 1e-14, "identity case objective " + sci(v));
  return o;
}

Outcome dg_checks() {
  Outcome o;
  const auto sine = [](double x) { return std::sin(2 * std::numbers::pi * x); };
  const auto period_error = [&](const DgOperator& op, int steps) {
    const Trajectory t = rk4_run(op, dg_project(op, sine), 1.0 / steps, steps, steps);
    return dg_l2_error(op, t.states.rightCols(1), sine);
  };
  const auto steps = [](int k, int p) { return static_cast<int>(std::ceil(1.0 / cfl_timestep(k, p, 1.0, 0.0))); };

  const DgOperator fine = build_dg_operator(8, 8, 1.0, 0.0, FluxScheme::upwind);
  const double factor = period_error(fine, steps(8, 8)) / period_error(fine, 2 * steps(8, 8));
  o.require(factor >= 12 && factor <= 20, "RK4 error factor under dt halving (K=8, P=8): " + sci(factor, 3));
  const DgOperator op = build_dg_operator(8, 6, 1.0, 0.0, FluxScheme::upwind);
  const double e = period_error(op, steps(8, 6));
  o.require(e < 1e-4, "one-period error at K=8, P=6: " + sci(e));
  double max_re = -1.0;
  for (int p : {1, 2, 4, 6, 8}) {
    const DgOperator u = build_dg_operator(8, p, 1.0, 0.0, FluxScheme::upwind);
    max_re = std::max(max_re, Eigen::EigenSolver<Eigen::MatrixXd>(u.matrix, false).eigenvalues().real().maxCoeff());
  }
  o.require(max_re <= 1e-10, "upwind spectrum max real part " + sci(max_re));
  return o;
}

// Byte comparison of everything a command wrote, except wall-clock fields.
bool same_outputs(const fs::path& a, const fs::path& b, Outcome& o) {
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const auto drop_last_column = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  bool all = true;
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("timings_", 0) == 0) continue;
    std::string x = slurp(e.path()), y = slurp(b / name);
    if (name == "rom_errors.csv") {
      x = drop_last_column(x);
      y = drop_last_column(y);
    }
    ++compared;
    if (x != y || !fs::exists(b / name)) {
      all = false;
      o.note("differs: " + name);
    }
  }
  o.note(std::to_string(compared) + " files compared");
  return all && compared > 0;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("semrom_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string cfg = R"cfg({
    "problem": {"mesh": "expansion", "cells": [2, 14, 1], "order": 4},
    "parameters": {"range": [0.5, 10], "count": 12},
    "rom": {"singular_policy": "minimum_norm"},
    "dgmini": {"cells": 8, "order": 6, "initial": "sin(2*pi*x) + 0.5*exp(-50*(x-0.5)^2)", "snapshots": 60},
    "stab": {"modes": 8, "margin": 0.5, "pso": {"iterations": 60}},
    "seed": 7
  })cfg";
  for (const char* run : {"a", "b"}) {
    CommandContext ctx;
    ctx.config = parse_config(cfg);
    ctx.config.output = (root / run).string();
    for (auto cmd : {cmd_fom, cmd_rom, cmd_dgmini}) {
      if (cmd(ctx) != 0) o.require(false, "command failed in run " + std::string(run));
    }
    cmd_stab(ctx);  // exit status reflects the outcome, not an error
    CommandContext threaded = ctx;
    threaded.config.threads = 3;
    threaded.config.output = (root / (std::string(run) + "_threads")).string();
    fs::create_directories(threaded.config.output);
    fs::copy_file(root / run / "trajectory.bin", root / (std::string(run) + "_threads") / "trajectory.bin");
    cmd_stab(threaded);
  }
  o.require(same_outputs(root / "a", root / "b", o), "fom, rom, dgmini and stab reruns byte-identical");
  o.require(same_outputs(root / "a_threads", root / "b_threads", o), "threaded stab reruns byte-identical");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"Poiseuille exactness", poiseuille},
      {"channel ROM study", channel_study},
      {"offline-online split", offline_online},
      {"affine machinery", affine},
      {"Stokes block symmetry", block_symmetry},
      {"quadrature and differentiation", quadrature},
      {"stabilization of a planted spectrum", planted_stabilization},
      {"c2 rule and objective arithmetic", objective_arithmetic},
      {"DG verification", dg_checks},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double wall = seconds_since(t0);
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << " ("
              << sci(wall) << " s)\n";
    for (const auto& n : o.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed\n" : "all criteria passed\n");
  return failed ? 1 : 0;
}
