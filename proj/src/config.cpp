#include "semrom/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "semrom/expression.hpp"
#include "semrom/oseen.hpp"

namespace semrom {

ConfigError::ConfigError(const std::string& field, const std::string& what, int line)
    : Error(line > 0 ? "config line " + std::to_string(line) + ": " + what
                     : (field.empty() ? what : field + ": " + what)),
      field_(field),
      line_(line) {}

namespace {

using nlohmann::json;

const char* type_name(const json& j) { return j.type_name(); }

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be rejected by name.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  Section section(const std::string& key) {
    used_.insert(key);
    return Section(j_.at(key), field(key));
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(raw(key), field(key));
  }

  template <class T>
  static T convert(const json& v, const std::string& name) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name, std::string("expected true/false, got ") + type_name(v));
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, int>) {
      if (!v.is_number_integer()) throw ConfigError(name, std::string("expected an integer, got ") + type_name(v));
      const auto x = v.get<long long>();
      if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(name, "integer out of range");
      return static_cast<int>(x);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError(name, "expected a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(name, std::string("expected a number, got ") + type_name(v));
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw ConfigError(name, "must be finite");
      return x;
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name, std::string("expected a string, got ") + type_name(v));
      return v.get<std::string>();
    } else {
      // vectors
      using E = typename T::value_type;
      if (!v.is_array()) throw ConfigError(name, std::string("expected a list, got ") + type_name(v));
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<E>(v[i], name + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

void one_of(const std::string& value, std::initializer_list<const char*> options,
            const std::string& field) {
  std::string list;
  for (const char* o : options) {
    if (value == o) return;
    list += (list.empty() ? "" : ", ") + std::string(o);
  }
  throw ConfigError(field, "'" + value + "' is not one of " + list);
}

void check_expression(const std::string& text, const std::string& field) {
  try {
    Expression::parse(text);
  } catch (const ParseError& e) {
    throw ConfigError(field, std::string(e.what()) + " in '" + text + "'");
  }
}

std::string resolve(const std::string& dir, const std::string& path) {
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(dir) / p).lexically_normal().string();
}

void read_problem(Section s, ProblemConfig& p, const std::string& dir) {
  s.read("mesh", p.mesh);
  one_of(p.mesh, {"channel", "expansion", "file"}, s.field("mesh"));
  s.read("mesh_file", p.mesh_file);
  s.read("cells", p.cells);
  s.read("order", p.order);
  s.read("inflow_peak", p.inflow_peak);
  if (s.has("dirichlet")) {
    Section d = s.section("dirichlet");
    const json& raw = s.raw("dirichlet");
    for (auto it = raw.begin(); it != raw.end(); ++it) {
      d.read(it.key(), p.dirichlet[it.key()]);
      const auto& exprs = p.dirichlet[it.key()];
      const std::string f = d.field(it.key());
      require(exprs.size() == 2, f, "needs two expressions (x and y velocity)");
      for (std::size_t c = 0; c < 2; ++c) {
        check_expression(exprs[c], f + "[" + std::to_string(c) + "]");
      }
    }
    d.finish();
  }
  s.finish();

  require(p.order >= 2 && p.order <= 16, s.field("order"), "must lie in 2..16");
  require(p.inflow_peak >= 0.0, s.field("inflow_peak"), "must be non-negative");
  if (p.mesh == "file") {
    require(!p.mesh_file.empty(), s.field("mesh_file"), "required when mesh is \"file\"");
    p.mesh_file = resolve(dir, p.mesh_file);
    require(std::filesystem::is_regular_file(p.mesh_file), s.field("mesh_file"),
            "file '" + p.mesh_file + "' does not exist");
  } else {
    require(p.mesh_file.empty(), s.field("mesh_file"), "only allowed when mesh is \"file\"");
    const std::size_t want = p.mesh == "channel" ? 2 : 3;
    if (p.cells.empty()) {
      p.cells = p.mesh == "channel" ? std::vector<int>{8, 2} : std::vector<int>{2, 14, 1};
    }
    require(p.cells.size() == want, s.field("cells"),
            "needs " + std::to_string(want) + " entries for the " + p.mesh + " mesh");
    for (int c : p.cells) require(c >= 1 && c <= 512, s.field("cells"), "entries must lie in 1..512");
  }
}

void read_parameters(Section s, ParameterConfig& p) {
  s.read("values", p.values);
  const bool range = s.has("range");
  std::vector<double> r;
  s.read("range", r);
  s.read("count", p.count);
  s.read("spacing", p.spacing);
  s.finish();

  one_of(p.spacing, {"log", "linear"}, s.field("spacing"));
  if (range) {
    require(p.values.empty(), s.field("values"), "give either values or range, not both");
    require(r.size() == 2, s.field("range"), "needs [lower, upper]");
    p.lower = r[0];
    p.upper = r[1];
    require(p.lower > 0.0 && p.upper >= p.lower, s.field("range"),
            "needs 0 < lower <= upper");
    require(p.count >= 1, s.field("count"), "must be at least 1");
    require(p.count == 1 || p.upper > p.lower, s.field("range"),
            "empty range for more than one value");
    if (p.spacing == "log") {
      p.values = log_spaced_descending(p.lower, p.upper, p.count);
    } else {
      for (int k = 0; k < p.count; ++k) {
        p.values.push_back(p.count == 1 ? p.upper
                                        : p.upper - (p.upper - p.lower) * k / (p.count - 1));
      }
    }
  } else {
    require(!p.values.empty(), s.field("values"), "needs at least one value (or a range)");
    require(p.count == 0, s.field("count"), "only allowed with range");
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      require(p.values[i] > 0.0, s.field("values[" + std::to_string(i) + "]"),
              "viscosity must be positive");
    }
    p.lower = *std::min_element(p.values.begin(), p.values.end());
    p.upper = *std::max_element(p.values.begin(), p.values.end());
  }
}

void read_fom(Section s, FomConfig& f) {
  s.read("tol", f.tol);
  s.read("max_iter", f.max_iter);
  s.finish();
  require(f.tol > 0.0, s.field("tol"), "must be positive");
  require(f.max_iter >= 1, s.field("max_iter"), "must be at least 1");
}

void read_rom(Section s, RomConfig& r, const std::string& dir) {
  s.read("thresholds", r.thresholds);
  s.read("basis_sizes", r.basis_sizes);
  s.read("tol", r.tol);
  s.read("max_iter", r.max_iter);
  s.read("inner_product", r.inner_product);
  s.read("singular_policy", r.singular_policy);
  s.read("validation", r.validation);
  s.read("snapshots", r.snapshots);
  s.finish();

  require(!r.thresholds.empty(), s.field("thresholds"), "needs at least one threshold");
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    require(r.thresholds[i] > 0.0 && r.thresholds[i] <= 1.0,
            s.field("thresholds[" + std::to_string(i) + "]"), "must lie in (0, 1]");
  }
  for (std::size_t i = 0; i < r.basis_sizes.size(); ++i) {
    require(r.basis_sizes[i] >= 0, s.field("basis_sizes[" + std::to_string(i) + "]"),
            "must be non-negative");
  }
  require(r.tol > 0.0, s.field("tol"), "must be positive");
  require(r.max_iter >= 1, s.field("max_iter"), "must be at least 1");
  one_of(r.inner_product, {"euclidean", "mass"}, s.field("inner_product"));
  one_of(r.singular_policy, {"report", "minimum_norm"}, s.field("singular_policy"));
  one_of(r.validation, {"snapshots", "none"}, s.field("validation"));
  if (!r.snapshots.empty()) r.snapshots = resolve(dir, r.snapshots);
}

void read_affine(Section s, AffineConfig& a, const std::string& dir) {
  s.read("thetas", a.thetas);
  s.read("sources", a.sources);
  s.finish();
  require(a.thetas.size() == a.sources.size(), s.field("sources"),
          std::to_string(a.sources.size()) + " sources for " + std::to_string(a.thetas.size()) +
              " thetas");
  for (std::size_t i = 0; i < a.thetas.size(); ++i) {
    check_expression(a.thetas[i], s.field("thetas[" + std::to_string(i) + "]"));
    std::string& src = a.sources[i];
    const std::string f = s.field("sources[" + std::to_string(i) + "]");
    if (src.rfind("file:", 0) == 0) {
      src = "file:" + resolve(dir, src.substr(5));
      require(std::filesystem::is_regular_file(src.substr(5)), f,
              "file '" + src.substr(5) + "' does not exist");
    } else {
      one_of(src, {"viscous", "divergence", "velocity_mass"}, f);
    }
  }
}

void read_pso(Section s, PsoConfig& p) {
  s.read("swarm", p.swarm);
  s.read("inertia", p.inertia);
  s.read("cognitive", p.cognitive);
  s.read("social", p.social);
  s.read("iterations", p.iterations);
  s.read("lower", p.lower);
  s.read("upper", p.upper);
  s.finish();
  require(p.swarm >= 1, s.field("swarm"), "must be at least 1");
  require(p.iterations >= 0, s.field("iterations"), "must be non-negative");
  require(p.inertia >= 0.0 && p.inertia < 1.0, s.field("inertia"), "must lie in [0, 1)");
  require(p.cognitive >= 0.0, s.field("cognitive"), "must be non-negative");
  require(p.social >= 0.0, s.field("social"), "must be non-negative");
  require(p.lower.size() == p.upper.size(), s.field("upper"), "length differs from lower");
  for (std::size_t i = 0; i < p.lower.size(); ++i) {
    require(p.lower[i] <= p.upper[i], s.field("upper[" + std::to_string(i) + "]"),
            "below the lower bound");
  }
}

void read_stab(Section s, StabConfig& st, const std::string& dir) {
  s.read("modes", st.modes);
  s.read("margin", st.margin);
  s.read("search_imaginary", st.search_imaginary);
  if (s.has("c1")) {
    double c1 = 0.0;
    s.read("c1", c1);
    require(c1 >= 0.0, s.field("c1"), "must be non-negative");
    st.c1 = c1;
  }
  s.read("weight", st.weight);
  s.read("trajectory", st.trajectory);
  if (s.has("pso")) read_pso(s.section("pso"), st.pso);
  s.finish();
  require(st.modes >= 1, s.field("modes"), "must be at least 1");
  require(st.margin >= 0.0, s.field("margin"), "must be non-negative");
  one_of(st.weight, {"identity", "lyapunov"}, s.field("weight"));
  if (!st.trajectory.empty()) st.trajectory = resolve(dir, st.trajectory);
}

void read_dg(Section s, DgConfig& d) {
  s.read("cells", d.cells);
  s.read("order", d.order);
  s.read("speed", d.speed);
  s.read("diffusivity", d.diffusivity);
  s.read("flux", d.flux);
  s.read("initial", d.initial);
  s.read("t_final", d.t_final);
  s.read("snapshots", d.snapshots);
  s.read("dt", d.dt);
  s.finish();
  require(d.cells >= 2, s.field("cells"), "must be at least 2");
  require(d.order >= 1 && d.order <= 20, s.field("order"), "must lie in 1..20");
  require(d.diffusivity >= 0.0, s.field("diffusivity"), "must be non-negative");
  require(d.speed != 0.0 || d.diffusivity > 0.0, s.field("speed"),
          "speed and diffusivity cannot both be zero");
  one_of(d.flux, {"upwind", "central"}, s.field("flux"));
  check_expression(d.initial, s.field("initial"));
  require(d.t_final > 0.0, s.field("t_final"), "must be positive");
  require(d.snapshots >= 1, s.field("snapshots"), "must be at least 1");
  require(d.dt >= 0.0, s.field("dt"), "must be non-negative");
}

int line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

std::vector<double> ParameterConfig::descending() const {
  std::vector<double> v = values;
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

RunConfig parse_config(const std::string& text, const std::string& source_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    std::string what = e.what();
    // Drop the library's "[json.exception.parse_error.101] " prefix.
    if (const auto at = what.find("] "); at != std::string::npos) what = what.substr(at + 2);
    throw ConfigError("", what, line_of(text, e.byte > 0 ? e.byte - 1 : 0));
  }

  RunConfig c;
  c.source_dir = source_dir;
  Section top(j, "");
  if (top.has("problem")) read_problem(top.section("problem"), c.problem, source_dir);
  else read_problem(Section(json::object(), "problem"), c.problem, source_dir);
  if (top.has("parameters")) read_parameters(top.section("parameters"), c.parameters);
  if (top.has("fom")) read_fom(top.section("fom"), c.fom);
  if (top.has("rom")) read_rom(top.section("rom"), c.rom, source_dir);
  if (top.has("affine")) read_affine(top.section("affine"), c.affine, source_dir);
  if (top.has("stab")) read_stab(top.section("stab"), c.stab, source_dir);
  if (top.has("dgmini")) read_dg(top.section("dgmini"), c.dgmini);
  c.output_given = top.has("output");
  top.read("output", c.output);
  top.read("seed", c.seed);
  top.read("threads", c.threads);
  top.finish();
  require(!c.output.empty(), "output", "must not be empty");
  require(c.threads >= 1, "threads", "must be at least 1");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::filesystem::path p(path);
  return parse_config(buf.str(), p.has_parent_path() ? p.parent_path().string() : ".");
}

}  // namespace semrom
