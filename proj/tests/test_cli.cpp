#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hamflow/cli_app.hpp"

namespace fs = std::filesystem;

namespace {

fs::path sandbox() {
    fs::path dir = fs::temp_directory_path() / "hamflow_cli_test";
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run(const std::vector<std::string>& args, std::string* out_text = nullptr) {
    std::ostringstream out, err;
    int rc = hamflow::run_cli(args, out, err);
    if (out_text) *out_text = out.str() + err.str();
    return rc;
}

} // namespace

TEST_CASE("cli: simulate runs the pendulum and reports invariants") {
    fs::path dir = sandbox();
    write(dir / "sim.json", R"json({
      "system": {"space": {"kind": "torus", "d": 1}, "preset": "torus"},
      "schedule": [[1.0, 1.0, 0.0]],
      "x0": {"q": [1.0], "p": [0.5]},
      "dt": 1e-3,
      "energy_tol": 1e-4
    })json");
    int rc = run({"simulate", "--config", (dir / "sim.json").string(), "--out",
                  (dir / "sim_out").string()});
    CHECK(rc == 0);
    CHECK(fs::exists(dir / "sim_out" / "trajectory.csv"));
    std::string rep = read(dir / "sim_out" / "report.json");
    CHECK(rep.find("\"pass\": true") != std::string::npos);

    // drift-only sanity: q = q0 + t p0
    write(dir / "free.json", R"json({
      "system": {"space": {"kind": "euclidean", "d": 1}, "preset": "euclidean"},
      "schedule": [[1.0, 0.0, 0.0]],
      "x0": {"q": [0.0], "p": [1.0]},
      "dt": 1e-3
    })json");
    CHECK(run({"simulate", "--config", (dir / "free.json").string(), "--out",
               (dir / "free_out").string()}) == 0);
    std::string rep2 = read(dir / "free_out" / "report.json");
    CHECK(rep2.find("\"endpoint_q\"") != std::string::npos);
}

TEST_CASE("cli: malformed schedules exit with the input-error code") {
    fs::path dir = sandbox();
    write(dir / "bad.json", R"json({
      "system": {"space": {"kind": "euclidean", "d": 1}, "preset": "euclidean"},
      "schedule": [[1.0]],
      "x0": {"q": [0.0], "p": [1.0]}
    })json");
    CHECK(run({"simulate", "--config", (dir / "bad.json").string(), "--out",
               (dir / "bad_out").string()}) == 2);
    CHECK(run({"simulate", "--config", (dir / "missing.json").string()}) == 2);
    CHECK(run({"wat"}) == 2);
}

TEST_CASE("cli: rearrange then compile the demo pair end to end") {
    fs::path dir = sandbox();
    write(dir / "rearr.json", R"json({
      "space": {"kind": "euclidean", "d": 1},
      "rho0": {"cubes": [
        {"q": [-1.5], "p": [0.5], "radius": 0.5, "weight": 1.0},
        {"q": [-0.5], "p": [0.5], "radius": 0.5, "weight": 2.0}]},
      "rho1": {"cubes": [
        {"q": [1.5], "p": [0.5], "radius": 0.5, "weight": 2.0},
        {"q": [2.5], "p": [0.5], "radius": 0.5, "weight": 1.0}]},
      "mesh": {"h": 0.5, "anchor": [0.5, 0.5], "p_box": 4.0},
      "config": {"a": 0.5, "A": 2.5, "N": 5, "tol": 0.15},
      "quadrature": {"resolution": 96}
    })json");
    int rc = run({"rearrange", "--config", (dir / "rearr.json").string(), "--out",
                  (dir / "re_out").string()});
    CHECK(rc == 0);
    CHECK(fs::exists(dir / "re_out" / "permutation.json"));

    write(dir / "compile.json", std::string("{\n  \"permutation\": \"") +
                                    (dir / "re_out" / "permutation.json").string() +
                                    "\",\n  \"eta\": 0.125\n}\n");
    rc = run({"compile-perm", "--config", (dir / "compile.json").string(), "--out",
              (dir / "cp_out").string()});
    CHECK(rc == 0);
    std::string rep = read(dir / "cp_out" / "report.json");
    CHECK(rep.find("\"ok\": true") != std::string::npos);

    // determinism: identical configs produce byte-identical reports
    run({"rearrange", "--config", (dir / "rearr.json").string(), "--out",
         (dir / "re_out2").string()});
    CHECK(read(dir / "re_out" / "report.json") == read(dir / "re_out2" / "report.json"));
    CHECK(read(dir / "re_out" / "permutation.json") ==
          read(dir / "re_out2" / "permutation.json"));
}

TEST_CASE("cli: rearrange rejects non-equivalent densities with exit 3") {
    fs::path dir = sandbox();
    write(dir / "bad_pair.json", R"json({
      "space": {"kind": "euclidean", "d": 1},
      "rho0": {"cubes": [{"q": [0.0], "p": [0.0], "radius": 0.5, "weight": 1.0}]},
      "rho1": {"cubes": [{"q": [0.0], "p": [0.0], "radius": 0.5, "weight": 2.0}]},
      "mesh": {"h": 0.5, "anchor": [0.0, 0.0], "p_box": 4.0},
      "config": {"a": 0.5, "A": 2.5, "N": 5, "tol": 0.05},
      "quadrature": {"resolution": 64}
    })json");
    CHECK(run({"rearrange", "--config", (dir / "bad_pair.json").string(), "--out",
               (dir / "bp_out").string()}) == 3);
}

TEST_CASE("cli: synth ladder for a potential kick") {
    fs::path dir = sandbox();
    write(dir / "synth.json", R"json({
      "construction": "potential_kick",
      "system": {"space": {"kind": "euclidean", "d": 1}, "preset": "euclidean"},
      "j": 0, "s": 1.0,
      "ladder": [0.01, 0.005, 0.0025],
      "box": {"q_radius": 1.0, "p_radius": 1.0},
      "samples": 100,
      "ratio_tol": 0.6
    })json");
    int rc = run({"synth", "--config", (dir / "synth.json").string(), "--out",
                  (dir / "sy_out").string()});
    CHECK(rc == 0);
    CHECK(fs::exists(dir / "sy_out" / "ladder.json"));
    CHECK(fs::exists(dir / "sy_out" / "schedule.csv"));
}

TEST_CASE("cli: steer emits plan, endpoints and rank report") {
    fs::path dir = sandbox();
    write(dir / "steer.json", R"json({
      "start": {"kind": "torus", "d": 1, "points": [
        {"q": [0.0], "p": [0.0]}, {"q": [2.0], "p": [0.5]}, {"q": [4.0], "p": [-0.5]}]},
      "target": {"kind": "torus", "d": 1, "points": [
        {"q": [3.0], "p": [1.0]}, {"q": [5.0], "p": [0.0]}, {"q": [1.0], "p": [0.25]}]},
      "tau": 0.02, "delta_max": 0.02
    })json");
    int rc = run({"steer", "--config", (dir / "steer.json").string(), "--out",
                  (dir / "st_out").string()});
    CHECK(rc == 0);
    CHECK(fs::exists(dir / "st_out" / "plan.json"));
    CHECK(fs::exists(dir / "st_out" / "endpoints.csv"));
    CHECK(fs::exists(dir / "st_out" / "rank.json"));
    std::string rep = read(dir / "st_out" / "report.json");
    CHECK(rep.find("\"pass\": true") != std::string::npos);
}

TEST_CASE("cli: verify-orbit matches a density against its pushforward") {
    fs::path dir = sandbox();
    write(dir / "orbit.json", R"json({
      "space": {"kind": "euclidean", "d": 1},
      "rho0": {"expr": "2 + cos(q1) + 0.4*p1",
               "box": {"lo": [-2.0, -2.0], "hi": [2.0, 2.0]}},
      "flow": [{"stage": "vertical_shear", "f": "cos(q1)", "s": 0.4},
               {"stage": "dilation", "s": 1.1}],
      "levels": {"lo": 1.2, "hi": 2.8, "count": 4},
      "quadrature": {"resolution": 64},
      "tol_cells": 4
    })json");
    CHECK(run({"verify-orbit", "--config", (dir / "orbit.json").string(), "--out",
               (dir / "vo_out").string()}) == 0);

    // a rescaled density is not in the orbit closure
    write(dir / "orbit_bad.json", R"json({
      "space": {"kind": "euclidean", "d": 1},
      "rho0": {"expr": "2 + cos(q1) + 0.4*p1",
               "box": {"lo": [-2.0, -2.0], "hi": [2.0, 2.0]}},
      "rho1": {"expr": "2*(2 + cos(q1) + 0.4*p1)",
               "box": {"lo": [-2.0, -2.0], "hi": [2.0, 2.0]}},
      "levels": {"lo": 1.2, "hi": 2.8, "count": 4},
      "quadrature": {"resolution": 64},
      "tol_cells": 4
    })json");
    CHECK(run({"verify-orbit", "--config", (dir / "orbit_bad.json").string(), "--out",
               (dir / "vb_out").string()}) == 3);
}
