#include "semrom/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "semrom/archive.hpp"
#include "semrom/dg_mini.hpp"
#include "semrom/expression.hpp"
#include "semrom/pod.hpp"
#include "semrom/rom_cg.hpp"
#include "semrom/rom_stab.hpp"

namespace semrom {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Quietly drops lines when no log stream is attached.
class Log {
 public:
  Log(std::ostream* out, bool verbose) : out_(out), verbose_(verbose) {}
  template <class... T>
  void info(const T&... parts) const {
    if (!out_) return;
    ((*out_) << ... << parts) << '\n';
  }
  template <class... T>
  void debug(const T&... parts) const {
    if (verbose_) info(parts...);
  }

 private:
  std::ostream* out_;
  bool verbose_;
};

std::string fmt(double v, const char* f = "%.9e") {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// JSON has no infinity; keep it readable as a string.
json number(double v) { return std::isfinite(v) ? json(v) : json(fmt(v)); }

json complex_list(const Eigen::VectorXcd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back({v[i].real(), v[i].imag()});
  return out;
}

void write_json(const std::string& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

VectorFunction expression_field(const std::vector<std::string>& exprs) {
  const Expression ex = Expression::parse(exprs.at(0));
  const Expression ey = Expression::parse(exprs.at(1));
  return [ex, ey](double x, double y) {
    ExpressionScope s;
    s.x = x;
    s.y = y;
    return Eigen::Vector2d(ex.evaluate(s), ey.evaluate(s));
  };
}

std::string missing_archive(const std::string& path, const char* producer) {
  return "archive '" + path + "' not found (run `semrom " + producer + "` first)";
}

}  // namespace

std::string CommandContext::path(const std::string& name) const {
  return (std::filesystem::path(config.output) / name).string();
}

std::unique_ptr<FlowProblem> make_flow_problem(const ProblemConfig& p) {
  Mesh mesh;
  BoundaryConditions bc;
  const auto zero = [](double, double) { return Eigen::Vector2d(0.0, 0.0); };
  if (p.mesh == "channel") {
    mesh = make_channel_mesh(8.0, 1.0, p.cells.at(0), p.cells.at(1));
    const double peak = p.inflow_peak > 0.0 ? p.inflow_peak : 1.0;
    bc.dirichlet["inflow"] = [peak](double, double y) {
      return Eigen::Vector2d(4.0 * peak * y * (1.0 - y), 0.0);
    };
    bc.dirichlet["wall"] = zero;
  } else if (p.mesh == "expansion") {
    mesh = make_expansion_mesh(8.0, 1.0, p.cells.at(0), p.cells.at(1), p.cells.at(2));
    // Peak 3 in a third of the height carries the same flux as the unit channel.
    const double peak = p.inflow_peak > 0.0 ? p.inflow_peak : 3.0;
    bc.dirichlet["inflow"] = [peak](double, double y) {
      const double s = 3.0 * (y - 1.0 / 3.0);
      return Eigen::Vector2d(4.0 * peak * s * (1.0 - s), 0.0);
    };
    bc.dirichlet["wall"] = zero;
  } else {
    mesh = read_mesh_file(p.mesh_file);
  }
  for (const auto& [label, exprs] : p.dirichlet) bc.dirichlet[label] = expression_field(exprs);
  try {
    bc.validate(mesh);
  } catch (const Error& e) {
    throw ConfigError("problem.dirichlet", e.what());
  }
  auto disc = std::make_shared<const Discretization>(std::move(mesh), p.order);
  return std::make_unique<FlowProblem>(disc, std::move(bc));
}

// ---------------------------------------------------------------------------
// fom

int cmd_fom(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const Log log(ctx.log, ctx.verbose);
  if (c.parameters.values.empty()) {
    throw ConfigError("parameters", "cmd fom needs a parameters section");
  }
  const auto problem = make_flow_problem(c.problem);
  const auto nus = c.parameters.descending();
  log.info("fom: ", nus.size(), " viscosities, ", problem->layout().size(), " unknowns, P=",
           c.problem.order);

  const auto t0 = Clock::now();
  const SweepResult sweep = continuation_sweep(*problem, nus, FlowParameters{}, c.fom.tol,
                                               c.fom.max_iter);
  const double wall = seconds_since(t0);

  const auto& sols = sweep.solutions;
  Archive a;
  a.kind = "snapshots";
  a.signature = problem->discretization().signature();
  a.level = "system";
  a.layout = {"velocity_boundary_x", "velocity_boundary_y", "pressure", "velocity_interior_x",
              "velocity_interior_y"};
  a.axis = "nu";
  Eigen::MatrixXd states(problem->layout().size(), static_cast<Eigen::Index>(sols.size()));
  json meta = json::array();
  for (std::size_t k = 0; k < sols.size(); ++k) {
    states.col(static_cast<Eigen::Index>(k)) = sols[k].state;
    a.axis_values.push_back(sols[k].nu);
    meta.push_back({{"nu", sols[k].nu},
                    {"reynolds", reynolds(1.0, 1.0, sols[k].nu)},
                    {"iterations", sols[k].iterations},
                    {"converged", sols[k].converged},
                    {"history", sols[k].history}});
    log.debug("  nu=", sols[k].nu, " iterations=", sols[k].iterations);
  }
  a.add("states", std::move(states));
  a.attributes = {{"order", c.problem.order},
                  {"mesh", c.problem.mesh},
                  {"tol", c.fom.tol},
                  {"system_size", problem->layout().size()},
                  {"velocity_boundary", problem->layout().num_velocity_boundary()},
                  {"pressure", problem->layout().num_pressure()},
                  {"velocity_interior", problem->layout().num_velocity_interior()}};

  std::vector<double> failed;
  if (!sweep.complete()) {
    bool after = false;
    for (double nu : nus) {
      if (nu == *sweep.failed_nu) after = true;
      if (after) failed.push_back(nu);
    }
  }
  json report = {{"solutions", meta},
                 {"requested", nus},
                 {"failed", failed},
                 {"failure", sweep.failure},
                 {"reynolds_convention", "U = 1 (peak inflow of the unit channel), L = 1"}};

  std::filesystem::create_directories(c.output);
  if (!sols.empty()) write_archive(ctx.path("snapshots.bin"), a);
  write_json(ctx.path("fom_metadata.json"), report);
  write_json(ctx.path("timings_fom.json"), {{"wall_seconds", wall}});
  log.info("fom: ", sols.size(), "/", nus.size(), " converged in ", fmt(wall, "%.2f"), " s");

  if (!failed.empty()) {
    std::ostringstream list;
    for (std::size_t i = 0; i < failed.size(); ++i) list << (i ? ", " : "") << failed[i];
    log.info("fom: not converged for nu = ", list.str(), " (", sweep.failure, ")");
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// rom

int cmd_rom(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const Log log(ctx.log, ctx.verbose);
  const std::string source = c.rom.snapshots.empty() ? ctx.path("snapshots.bin") : c.rom.snapshots;
  if (!std::filesystem::exists(source)) throw Error(missing_archive(source, "fom"));
  const Archive snaps = read_archive(source);
  if (snaps.kind != "snapshots") throw StructuralError("'" + source + "' is not a snapshot archive");

  const auto problem = make_flow_problem(c.problem);
  if (snaps.signature != problem->discretization().signature()) {
    throw StructuralError("'" + source + "' was computed on a different discretization " +
                          "than the problem section describes");
  }
  const Eigen::MatrixXd& states = snaps.matrix("states");
  std::vector<SteadySolution> sols(snaps.axis_values.size());
  for (std::size_t k = 0; k < sols.size(); ++k) {
    sols[k].state = states.col(static_cast<Eigen::Index>(k));
    sols[k].nu = snaps.axis_values[k];
    sols[k].signature = snaps.signature;
    sols[k].converged = true;
  }

  const auto t0 = Clock::now();
  const SnapshotSet set = build_snapshot_set(*problem, sols);
  const PodOptions popt = c.rom.inner_product == "mass" ? mass_weighted(*problem) : PodOptions{};
  const PodBasis basis = pod(*problem, set, 1.0, popt);
  json counts = json::array();
  for (double th : c.rom.thresholds) {
    const int n = energy_count(basis.singular_values, th);
    counts.push_back({{"threshold", th}, {"modes", n}});
    log.info("rom: ", n, " modes reach ", th * 100.0, "% of the snapshot energy");
  }

  const AffineOperator affine =
      c.affine.enabled()
          ? affine_decompose_user({c.affine.thetas, c.affine.sources},
                                  flow_matrix_resolver(*problem), problem->local_load({}))
          : affine_decompose_viscosity(*problem);
  OfflineOptions oo;
  oo.flow = problem.get();
  oo.snapshots = &set;
  const ReducedModel model = offline_build(affine, basis, set.lifting, oo);
  const double offline = seconds_since(t0);
  log.info("rom: offline stage (POD + projections) ", fmt(offline, "%.3f"), " s, rank ",
           basis.size(), ", ", model.term_count(), " affine terms");

  std::vector<int> sizes = c.rom.basis_sizes;
  if (sizes.empty()) {
    for (int n = 0; n <= basis.size(); ++n) sizes.push_back(n);
  }
  for (int n : sizes) {
    if (n > basis.size()) {
      throw InvalidArgument("rom.basis_sizes: N = " + std::to_string(n) +
                            " exceeds the snapshot rank " + std::to_string(basis.size()));
    }
  }

  std::filesystem::create_directories(c.output);
  Archive b;
  b.kind = "basis";
  b.signature = snaps.signature;
  b.level = "local";
  b.layout = {"velocity_boundary", "pressure", "velocity_interior"};
  b.axis = "mode";
  for (int j = 0; j < basis.size(); ++j) b.axis_values.push_back(j);
  b.add("modes", basis.modes_local);
  b.add("singular_values", basis.singular_values);
  b.add("lifting", set.lifting);
  b.attributes = {{"inner_product", c.rom.inner_product},
                  {"lifting_nu", set.parameters[static_cast<std::size_t>(set.lifting_column)]}};
  write_archive(ctx.path("basis.bin"), b);

  Archive m;
  m.kind = "model";
  m.signature = snaps.signature;
  m.level = "reduced";
  m.axis = "nu";
  m.axis_values = snaps.axis_values;
  std::vector<std::string> thetas;
  for (int i = 0; i < model.term_count(); ++i) {
    thetas.push_back(model.thetas[static_cast<std::size_t>(i)].text());
    m.add("affine_" + std::to_string(i), model.reduced_affine[static_cast<std::size_t>(i)]);
    m.add("affine_on_lift_" + std::to_string(i), model.affine_on_lift[static_cast<std::size_t>(i)]);
  }
  m.add("rhs", model.reduced_rhs);
  for (int j = 0; j < static_cast<int>(model.advection.size()); ++j) {
    m.add("advection_" + std::to_string(j), model.advection[static_cast<std::size_t>(j)]);
  }
  if (model.has_advection) {
    m.add("advection_lift", model.advection_lift);
    m.add("advection_mode_on_lift", model.advection_mode_on_lift);
    m.add("advection_lift_on_lift", model.advection_lift_on_lift);
  }
  m.add("gram", model.gram);
  m.add("gram_lift", model.gram_lift);
  m.add("snapshot_coordinates", model.snapshot_coordinates);
  char checksum[17];
  std::snprintf(checksum, sizeof checksum, "%016llx",
                static_cast<unsigned long long>(model.basis_checksum));
  m.attributes = {{"N", model.size()},
                  {"Q", model.term_count()},
                  {"thetas", thetas},
                  {"domain", {model.domain.lower, model.domain.upper}},
                  {"basis_checksum", checksum},
                  {"lift_norm2", model.lift_norm2}};
  write_archive(ctx.path("rom_model.bin"), m);

  json report = {{"rank", basis.size()},
                 {"energy", counts},
                 {"singular_values", std::vector<double>(basis.singular_values.data(),
                                                         basis.singular_values.data() +
                                                             basis.singular_values.size())},
                 {"inner_product", c.rom.inner_product},
                 {"singular_policy", c.rom.singular_policy}};
  json timings = {{"offline_seconds", offline}};

  if (c.rom.validation == "none") {
    log.info("rom: validation set is empty; offline-only run, error table omitted");
    report["table"] = "omitted: empty validation set";
  } else {
    const SingularPolicy policy = singular_policy_from_string(c.rom.singular_policy);
    const auto rows = error_sweep(model, *problem, sols, sizes, c.rom.tol, c.rom.max_iter, policy);
    std::string csv = "N,mean_err,max_err,online_seconds\n";
    json table = json::array();
    double online = 0.0;
    for (const auto& r : rows) {
      csv += std::to_string(r.n) + "," + fmt(r.mean_error) + "," + fmt(r.max_error) + "," +
             fmt(r.online_seconds, "%.6e") + "\n";
      table.push_back({{"N", r.n},
                       {"mean_err", number(r.mean_error)},
                       {"max_err", number(r.max_error)},
                       {"failures", r.failures},
                       {"rank_deficient", r.rank_deficient}});
      online += r.online_seconds;
      log.debug("  N=", r.n, " mean=", fmt(r.mean_error, "%.3e"), " max=",
                fmt(r.max_error, "%.3e"), " failures=", r.failures);
    }
    write_text_atomic(ctx.path("rom_errors.csv"), csv);
    report["table"] = table;
    report["validation_size"] = sols.size();
    timings["online_seconds"] = online;
    log.info("rom: online stage ", fmt(online, "%.4f"), " s for ", rows.size() * sols.size(),
             " reduced solves");
  }
  write_json(ctx.path("rom_report.json"), report);
  write_json(ctx.path("timings_rom.json"), timings);
  return 0;
}

// ---------------------------------------------------------------------------
// dgmini

int cmd_dgmini(const CommandContext& ctx) {
  const DgConfig& d = ctx.config.dgmini;
  const Log log(ctx.log, ctx.verbose);
  const DgOperator op = build_dg_operator(d.cells, d.order, d.speed, d.diffusivity,
                                          flux_scheme_from_string(d.flux));
  const Expression initial = Expression::parse(d.initial);
  const Eigen::VectorXd u0 = dg_project(op, [&](double x) {
    ExpressionScope s;
    s.x = x;
    return initial.evaluate(s);
  });

  // Land exactly on the stored times: intervals * per_interval steps.
  const int intervals = std::max(1, d.snapshots - 1);
  const double spacing = d.t_final / intervals;
  const double limit = d.dt > 0.0 ? d.dt : cfl_timestep(d.cells, d.order, d.speed, d.diffusivity);
  const int per_interval = std::max(1, static_cast<int>(std::ceil(spacing / limit - 1e-12)));
  const double dt = spacing / per_interval;

  const auto t0 = Clock::now();
  const Trajectory traj = rk4_run(op, u0, dt, intervals * per_interval, per_interval);
  const double wall = seconds_since(t0);

  Archive a;
  a.kind = "trajectory";
  a.level = "modal";
  a.layout = {"cell_major_legendre"};
  a.axis = "time";
  a.axis_values = traj.times;
  a.add("states", traj.states);
  a.add("operator", op.matrix);
  a.attributes = {{"cells", d.cells},   {"order", d.order},       {"speed", d.speed},
                  {"diffusivity", d.diffusivity}, {"flux", d.flux}, {"initial", d.initial},
                  {"dt", dt},           {"sample_spacing", spacing}};
  std::filesystem::create_directories(ctx.config.output);
  write_archive(ctx.path("trajectory.bin"), a);
  write_json(ctx.path("timings_dgmini.json"), {{"wall_seconds", wall}});
  log.info("dgmini: ", traj.size(), " states of size ", op.size(), ", dt=", dt, ", mass drift ",
           fmt(dg_mass(op, traj.states.rightCols(1).col(0)) - dg_mass(op, u0), "%.2e"));
  return 0;
}

// ---------------------------------------------------------------------------
// stab

int cmd_stab(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const StabConfig& s = c.stab;
  const Log log(ctx.log, ctx.verbose);
  const std::string source = s.trajectory.empty() ? ctx.path("trajectory.bin") : s.trajectory;
  if (!std::filesystem::exists(source)) throw Error(missing_archive(source, "dgmini"));
  const Archive a = read_archive(source);
  if (a.kind != "trajectory") throw StructuralError("'" + source + "' is not a trajectory archive");

  Trajectory traj;
  traj.states = a.matrix("states");
  traj.times = a.axis_values;
  if (traj.times.size() < 2) throw StructuralError("'" + source + "': fewer than two states");
  traj.dt = traj.times[1] - traj.times[0];
  const Eigen::MatrixXd& full = a.matrix("operator");

  const auto t0 = Clock::now();
  Eigen::MatrixXd weight;
  json weight_info = "identity";
  if (s.weight == "lyapunov") {
    const LyapunovWeight w = diagonal_lyapunov_weight(full);
    weight = w.diagonal.asDiagonal();
    weight_info = {{"kind", "lyapunov"},
                   {"symmetric_max", w.symmetric_max},
                   {"feasible", w.feasible}};
  }
  LinearRom rom;
  try {
    rom = galerkin_reduce(full, traj, s.modes, weight);
  } catch (const Error& e) {
    throw Error(std::string("stab: reduction of '") + source + "' failed: " + e.what());
  }

  StabilizeOptions opt;
  opt.pso.swarm = s.pso.swarm;
  opt.pso.inertia = s.pso.inertia;
  opt.pso.cognitive = s.pso.cognitive;
  opt.pso.social = s.pso.social;
  opt.pso.iterations = s.pso.iterations;
  opt.pso.lower = s.pso.lower;
  opt.pso.upper = s.pso.upper;
  opt.pso.seed = c.seed;
  opt.pso.threads = c.threads;
  opt.margin = s.margin;
  opt.search_imaginary = s.search_imaginary;
  opt.c1 = s.c1;
  StabilizedRom r;
  try {
    r = stabilize(rom, opt);
  } catch (const Error& e) {
    throw Error(std::string("stab: ") + e.what());
  }
  const double wall = seconds_since(t0);

  json report = {{"modes", rom.modes()},
                 {"samples", rom.samples()},
                 {"weight", weight_info},
                 {"seed", c.seed},
                 {"eigenvalues_before", complex_list(r.eigenvalues_before)},
                 {"eigenvalues_after", complex_list(r.eigenvalues_after)},
                 {"replacement", r.replacement},
                 {"alpha_fom", r.alpha_fom},
                 {"alpha_rom_before", number(r.before.slope)},
                 {"alpha_rom", number(r.after.slope)},
                 {"mismatch_before", number(r.before.mismatch)},
                 {"mismatch_after", number(r.after.mismatch)},
                 {"objective_before", number(r.before.value)},
                 {"objective_after", number(r.after.value)},
                 {"c1", r.c1},
                 {"c2", r.c2},
                 {"trace", r.trace},
                 {"searched", r.searched},
                 {"improved", r.improved},
                 {"success", r.success},
                 {"message", r.message}};
  std::filesystem::create_directories(c.output);
  write_json(ctx.path("stab_report.json"), report);
  write_json(ctx.path("timings_stab.json"), {{"wall_seconds", wall}});
  log.info("stab: ", r.message);
  log.info("stab: alpha_FOM=", fmt(r.alpha_fom, "%.4e"), " alpha_ROM ", fmt(r.before.slope, "%.4e"),
           " -> ", fmt(r.after.slope, "%.4e"), " (", fmt(wall, "%.2f"), " s)");
  return r.after.slope < 0.0 ? 0 : 3;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const CommandContext& ctx, std::ostream& out) {
  namespace fs = std::filesystem;
  const fs::path dir(ctx.config.output);
  if (!fs::is_directory(dir)) throw Error("output directory '" + dir.string() + "' does not exist");

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::ostringstream text;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    if (f.extension() == ".bin") {
      const Archive a = read_archive(f.string());
      text << name << ": " << a.kind << " (" << a.level << "), " << a.axis_values.size() << " "
           << a.axis << " values\n";
      for (const auto& [mname, mat] : a.matrices) {
        text << "  " << mname << " " << mat.rows() << "x" << mat.cols() << "\n";
      }
    } else if (name == "rom_report.json" || name == "stab_report.json" ||
               name == "fom_metadata.json") {
      std::ifstream in(f);
      const json j = json::parse(in);
      text << name << ":\n";
      if (name == "fom_metadata.json") {
        text << "  converged " << j.at("solutions").size() << ", failed " << j.at("failed").size()
             << "\n";
      } else if (name == "rom_report.json") {
        for (const auto& e : j.at("energy")) {
          text << "  " << e.at("modes") << " modes for energy " << e.at("threshold") << "\n";
        }
        if (j.at("table").is_array()) {
          for (const auto& row : j.at("table")) {
            text << "  N=" << row.at("N") << " mean " << row.at("mean_err") << " max "
                 << row.at("max_err") << "\n";
          }
        } else {
          text << "  " << j.at("table").get<std::string>() << "\n";
        }
      } else {
        text << "  " << j.at("message").get<std::string>() << "\n"
             << "  alpha_rom " << j.at("alpha_rom_before") << " -> " << j.at("alpha_rom")
             << ", c1 " << j.at("c1") << ", c2 " << j.at("c2") << "\n";
      }
    }
  }
  out << text.str();
  write_text_atomic(ctx.path("summary.txt"), text.str());
  return 0;
}

}  // namespace semrom
