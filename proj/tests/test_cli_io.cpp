#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"

#include "semrom/archive.hpp"
#include "semrom/commands.hpp"
#include "semrom/config.hpp"
#include "semrom/error.hpp"

using namespace semrom;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("semrom_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

ConfigError config_error(const std::string& text, const std::string& dir = ".") {
  try {
    parse_config(text, dir);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("config was accepted: " << text);
  return ConfigError("", "");
}

CommandContext context(const std::string& text, const fs::path& out, std::ostream* log = nullptr) {
  CommandContext ctx;
  ctx.config = parse_config(text, out.string());
  ctx.config.output = out.string();
  ctx.log = log;
  return ctx;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SEMROM_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallFom = R"({
  "problem": {"mesh": "channel", "cells": [8, 2], "order": 4},
  "parameters": {"values": [2.0, 1.0, 0.5]},
  "fom": {"tol": 1e-8}
})";

}  // namespace

TEST_CASE("archives") {
  const fs::path dir = scratch("archive");
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd a(7, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
  a(0, 0) = -0.0;
  a(1, 0) = std::numeric_limits<double>::denorm_min();
  a(2, 0) = std::numeric_limits<double>::max();
  Archive ar;
  ar.kind = "snapshots";
  ar.signature = 0x0123456789abcdefULL;
  ar.level = "system";
  ar.layout = {"v_bnd", "p", "v_int"};
  ar.axis = "nu";
  ar.axis_values = {3.0, 2.0, 1.0 / 3.0};
  ar.attributes["note"] = "x";
  ar.add("states", a);
  ar.add("empty", Eigen::MatrixXd(0, 4));
  const std::string path = (dir / "a.bin").string();
  write_archive(path, ar);

  SUBCASE("bitwise round trip") {
    const Archive back = read_archive(path);
    CHECK(back.kind == ar.kind);
    CHECK(back.signature == ar.signature);
    CHECK(back.layout == ar.layout);
    CHECK(back.axis_values == ar.axis_values);
    CHECK(back.attributes == ar.attributes);
    CHECK(bitwise_equal(back.matrix("states"), a));
    CHECK(back.matrix("empty").cols() == 4);
    CHECK(std::signbit(back.matrix("states")(0, 0)));
    CHECK_THROWS_AS(back.matrix("missing"), StructuralError);
    // Writing what was read gives the same bytes.
    write_archive((dir / "b.bin").string(), back);
    CHECK(slurp(dir / "b.bin") == slurp(path));
  }
  SUBCASE("corruption is detected") {
    std::string bytes = slurp(path);
    std::string flipped = bytes;
    flipped[flipped.size() - 5] ^= 0x10;
    spit(dir / "flipped.bin", flipped);
    CHECK_THROWS_AS(read_archive((dir / "flipped.bin").string()), StructuralError);
    spit(dir / "short.bin", bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(read_archive((dir / "short.bin").string()), StructuralError);
    spit(dir / "long.bin", bytes + "x");
    CHECK_THROWS_AS(read_archive((dir / "long.bin").string()), StructuralError);
    spit(dir / "magic.bin", "SEMROM-ARCHIVE 9\n" + bytes.substr(bytes.find('\n') + 1));
    CHECK_THROWS_AS(read_archive((dir / "magic.bin").string()), StructuralError);
    CHECK_THROWS_AS(read_archive((dir / "absent.bin").string()), Error);
  }
  SUBCASE("atomic writes leave no temporaries") {
    write_text_atomic((dir / "nested" / "t.txt").string(), "hello\n");
    CHECK(slurp(dir / "nested" / "t.txt") == "hello\n");
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
    }
  }
}

TEST_CASE("config validation") {
  SUBCASE("defaults") {
    const RunConfig c = parse_config("{}");
    CHECK(c.problem.order == 6);
    CHECK(c.rom.thresholds == std::vector<double>{0.99, 0.9999});
    CHECK(c.seed == 42);
    CHECK_FALSE(c.output_given);
  }
  SUBCASE("ranges expand in descending order") {
    const RunConfig c = parse_config(R"({"parameters": {"range": [0.5, 10], "count": 22}})");
    const auto v = c.parameters.descending();
    REQUIRE(v.size() == 22);
    CHECK(v.front() == doctest::Approx(10.0));
    CHECK(v.back() == doctest::Approx(0.5));
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] < v[i - 1]);
  }
  SUBCASE("errors name the field") {
    CHECK(config_error(R"({"problem": {"meshh": "channel"}})").field() == "problem.meshh");
    CHECK(config_error(R"({"colour": 1})").field() == "colour");
    CHECK(config_error(R"({"rom": {"thresholds": [0.9, "x"]}})").field() == "rom.thresholds[1]");
    CHECK(config_error(R"({"rom": {"thresholds": [0.9, 1.5]}})").field().rfind("rom.thresholds", 0) == 0);
    CHECK(config_error(R"({"problem": {"order": 1}})").field() == "problem.order");
    CHECK(config_error(R"({"problem": {"order": 2.5}})").field() == "problem.order");
    CHECK(config_error(R"({"rom": {"inner_product": "h1"}})").field() == "rom.inner_product");
    CHECK(config_error(R"({"dgmini": {"flux": "hllc"}})").field() == "dgmini.flux");
    CHECK(config_error(R"({"problem": {"mesh": "file", "mesh_file": "nowhere.mesh"}})").field() ==
          "problem.mesh_file");
    CHECK(config_error(R"({"affine": {"thetas": ["mu0"], "sources": ["file:nowhere.mtx"]}})").field().rfind("affine.sources", 0) == 0);
    CHECK(config_error(R"({"affine": {"thetas": ["mu0 +"], "sources": ["viscous"]}})").field().rfind("affine.thetas", 0) == 0);
    CHECK(config_error(R"({"parameters": {"values": [1, -2]}})").field().rfind("parameters", 0) == 0);
  }
  SUBCASE("syntax errors carry a line number") {
    const ConfigError e = config_error("{\n  \"seed\": 1,\n  \"output\": \"x\"\n  \"threads\": 2\n}\n");
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  SUBCASE("relative paths resolve against the config directory") {
    const fs::path dir = scratch("cfg");
    spit(dir / "m.mtx", "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.0\n");
    const RunConfig c = parse_config(R"({"affine": {"thetas": ["mu0"], "sources": ["file:m.mtx"]}})", dir.string());
    CHECK(c.affine.sources[0] == "file:" + (dir / "m.mtx").string());
  }
}

TEST_CASE("fom and rom commands") {
  const fs::path out = scratch("fom");
  std::ostringstream log;
  const CommandContext ctx = context(kSmallFom, out, &log);
  REQUIRE(cmd_fom(ctx) == 0);
  const Archive snaps = read_archive((out / "snapshots.bin").string());
  CHECK(snaps.kind == "snapshots");
  CHECK(snaps.matrix("states").cols() == 3);
  CHECK(snaps.axis_values == std::vector<double>{2.0, 1.0, 0.5});
  CHECK(fs::exists(out / "fom_metadata.json"));
  CHECK(fs::exists(out / "timings_fom.json"));

  SUBCASE("reruns are byte-identical") {
    const std::string first = slurp(out / "snapshots.bin");
    const std::string meta = slurp(out / "fom_metadata.json");
    REQUIRE(cmd_fom(ctx) == 0);
    CHECK(slurp(out / "snapshots.bin") == first);
    CHECK(slurp(out / "fom_metadata.json") == meta);
  }
  SUBCASE("single viscosity gives one column") {
    const fs::path one = scratch("fom_one");
    REQUIRE(cmd_fom(context(R"({"problem": {"mesh": "channel", "order": 3}, "parameters": {"values": [1.0]}})", one)) == 0);
    CHECK(read_archive((one / "snapshots.bin").string()).matrix("states").cols() == 1);
  }
  SUBCASE("rom logs the mode counts and writes the tables") {
    REQUIRE(cmd_rom(ctx) == 0);
    CHECK(log.str().find("% of the snapshot energy") != std::string::npos);
    CHECK(log.str().find("99.99%") != std::string::npos);
    CHECK(fs::exists(out / "basis.bin"));
    CHECK(fs::exists(out / "rom_model.bin"));
    const std::string csv = slurp(out / "rom_errors.csv");
    CHECK(csv.rfind("N,mean_err,max_err,online_seconds\n", 0) == 0);
    const auto report = nlohmann::json::parse(slurp(out / "rom_report.json"));
    CHECK(report.contains("singular_values"));
    const Archive model = read_archive((out / "rom_model.bin").string());
    CHECK(model.signature == snaps.signature);
  }
  SUBCASE("offline-only validation omits the error table") {
    CommandContext off = ctx;
    off.config.rom.validation = "none";
    REQUIRE(cmd_rom(off) == 0);
    CHECK(log.str().find("offline-only run, error table omitted") != std::string::npos);
    CHECK_FALSE(fs::exists(out / "rom_errors.csv"));
    CHECK(fs::exists(out / "rom_model.bin"));
  }
  SUBCASE("a rom run without snapshots points at fom") {
    const fs::path empty = scratch("rom_empty");
    try {
      cmd_rom(context(kSmallFom, empty));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("fom") != std::string::npos);
    }
  }
  SUBCASE("snapshots from another discretization are refused") {
    CommandContext other = ctx;
    other.config.problem.order = 5;
    CHECK_THROWS_AS(cmd_rom(other), StructuralError);
  }
}

TEST_CASE("dgmini and stab commands") {
  const fs::path out = scratch("dg");
  const std::string cfg = R"cfg({
    "dgmini": {"cells": 8, "order": 4, "initial": "sin(2*pi*x) + 0.5*exp(-50*(x-0.5)^2)", "snapshots": 40},
    "stab": {"modes": 6, "pso": {"iterations": 30}}
  })cfg";
  std::ostringstream log;
  const CommandContext ctx = context(cfg, out, &log);
  REQUIRE(cmd_dgmini(ctx) == 0);
  const Archive traj = read_archive((out / "trajectory.bin").string());
  CHECK(traj.kind == "trajectory");
  CHECK(traj.matrix("states").cols() == 40);
  CHECK(traj.axis_values.back() == doctest::Approx(1.0));

  SUBCASE("a stable model needs no replacement") {
    CHECK(cmd_stab(ctx) == 0);
    const auto rep = nlohmann::json::parse(slurp(out / "stab_report.json"));
    CHECK(rep.at("message").get<std::string>().find("no replacement needed") != std::string::npos);
    CHECK(rep.at("searched") == false);
  }
  SUBCASE("fixed seed reruns agree byte for byte") {
    CommandContext wide = ctx;
    wide.config.stab.margin = 0.5;  // forces a search on the weakly damped modes
    cmd_stab(wide);
    const std::string first = slurp(out / "stab_report.json");
    CHECK(nlohmann::json::parse(first).at("searched") == true);
    cmd_stab(wide);
    CHECK(slurp(out / "stab_report.json") == first);
  }
  SUBCASE("report summarizes everything") {
    cmd_stab(ctx);
    std::ostringstream text;
    CHECK(cmd_report(ctx, text) == 0);
    CHECK(text.str().find("trajectory.bin") != std::string::npos);
    CHECK(text.str().find("stab_report.json") != std::string::npos);
    CHECK(fs::exists(out / "summary.txt"));
  }
}

TEST_CASE("command line") {
  const fs::path out = scratch("cli");
  const std::string cfg = std::string(SEMROM_CONFIGS) + "/poiseuille.json";
  CHECK(run_cli("fom --config " + cfg + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "snapshots.bin"));
  CHECK(run_cli("report --config " + cfg + " --out " + out.string()) == 0);

  SUBCASE("usage and config errors") {
    CHECK(run_cli("") != 0);
    CHECK(run_cli("fom --config /nonexistent.json") != 0);
    CHECK(run_cli("fom --bogus") != 0);
    spit(out / "bad.json", R"({"problem": {"order": 0}})");
    CHECK(run_cli("fom --config " + (out / "bad.json").string()) == 64);
  }
  SUBCASE("SEMROM_OUT applies when neither flag nor file sets the output") {
    const fs::path env_out = scratch("cli_env");
    spit(out / "plain.json", R"({"problem": {"mesh": "channel", "order": 3}, "parameters": {"values": [1.0]}})");
    const std::string cmd = "SEMROM_OUT=" + env_out.string() + " " + std::string(SEMROM_CLI) + " fom --config " +
                            (out / "plain.json").string() + " > /dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(env_out / "snapshots.bin"));
  }
}
