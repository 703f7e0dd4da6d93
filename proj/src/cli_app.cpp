#include "hamflow/cli_app.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hamflow/compiler.hpp"
#include "hamflow/density.hpp"
#include "hamflow/ensemble.hpp"
#include "hamflow/errors.hpp"
#include "hamflow/flow.hpp"
#include "hamflow/rearrange.hpp"
#include "hamflow/synthesis.hpp"
#include "hamflow/systems.hpp"

namespace hamflow {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw input_error("cannot write file: " + path.string());
    out << text;
}

SpaceSpec space_from_json(const json& j) {
    return SpaceSpec(j.at("kind").get<std::string>() == "torus" ? SpaceKind::torus
                                                                : SpaceKind::euclidean,
                     j.at("d").get<int>());
}

PhaseBox box_from_json(const json& j, int d) {
    PhaseBox b;
    if (j.contains("lo")) {
        b.lo = j.at("lo").get<Vec>();
        b.hi = j.at("hi").get<Vec>();
    } else {
        double qr = j.at("q_radius").get<double>();
        double pr = j.at("p_radius").get<double>();
        b = PhaseBox::cube(d, qr, pr);
    }
    if (static_cast<int>(b.lo.size()) != 2 * d) throw input_error("box: wrong dimension");
    return b;
}

DensityField density_from_json(const json& j, const SpaceSpec& space) {
    const int d = space.d;
    if (j.contains("expr")) {
        HamExpr e = HamExpr::parse(j.at("expr").get<std::string>(), d);
        PhaseBox box = box_from_json(j.at("box"), d);
        return DensityField::from_expr(space, std::move(e), box, j.value("r", 1.0));
    }
    if (j.contains("cubes")) {
        std::vector<std::pair<Cube, double>> cubes;
        for (const auto& c : j.at("cubes")) {
            Cube cube;
            cube.center = PhasePoint(c.at("q").get<Vec>(), c.at("p").get<Vec>());
            cube.radius = c.at("radius").get<double>();
            cubes.push_back({cube, c.value("weight", 1.0)});
        }
        return DensityField::from_cubes(space, std::move(cubes), j.value("r", 1.0));
    }
    if (j.contains("grid")) {
        GridDensity g = grid_density_load(slurp(j.at("grid").at("header").get<std::string>()),
                                          slurp(j.at("grid").at("values").get<std::string>()));
        return DensityField::from_grid(space, std::move(g));
    }
    throw input_error("density spec: expected expr, cubes, or grid");
}

QuadratureSpec quadrature_from_json(const json& j) {
    QuadratureSpec q;
    if (j.is_null()) return q;
    q.resolution = j.value("resolution", q.resolution);
    q.refine_levels = j.value("refine", q.refine_levels);
    q.mc_samples = j.value("mc_samples", q.mc_samples);
    q.seed = j.value("seed", q.seed);
    return q;
}

FlowMap flow_from_json(const json& stages, const SpaceSpec& space) {
    FlowMap fm(space);
    for (const auto& s : stages) {
        std::string kind = s.at("stage").get<std::string>();
        if (kind == "vertical_shear") {
            HamExpr f = HamExpr::parse(s.at("f").get<std::string>(), space.d);
            fm.push(make_vertical_shear(ScalarField::from_expr_q(std::move(f)),
                                        s.value("s", 1.0)));
        } else if (kind == "horizontal_shear") {
            HamExpr g = HamExpr::parse(s.at("g").get<std::string>(), space.d);
            fm.push(make_horizontal_shear(ScalarField::from_expr_p(std::move(g)),
                                          s.value("s", 1.0)));
        } else if (kind == "harmonic_rotation") {
            PhasePoint c(s.at("center_q").get<Vec>(), s.at("center_p").get<Vec>());
            fm.push(make_harmonic_rotation(c, s.at("width").get<double>(),
                                           s.at("time").get<double>(),
                                           CutoffSpec{s.at("r1").get<double>(),
                                                      s.at("r2").get<double>()}));
        } else if (kind == "dilation") {
            fm.push(make_dilation(space, s.at("s").get<double>()));
        } else if (kind == "symmetry") {
            fm.push(make_symmetry());
        } else {
            throw input_error("flow spec: unknown stage '" + kind + "'");
        }
    }
    return fm;
}

ControlSchedule schedule_from_config(const json& j) {
    if (j.is_string()) return schedule_from_csv(slurp(j.get<std::string>()));
    ControlSchedule s;
    for (const auto& row : j) {
        if (!row.is_array() || row.size() < 2)
            throw input_error("schedule: rows are [tau, u_1, ..., u_m]");
        ControlSchedule::Segment seg;
        seg.tau = row[0].get<double>();
        for (std::size_t i = 1; i < row.size(); ++i) seg.u.push_back(row[i].get<double>());
        s.segments.push_back(std::move(seg));
    }
    return s;
}

struct Common {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    double tol = -1; // command-specific default when negative
};

int cmd_simulate(const Common& cc, std::ostream& out) {
    json cfg = json::parse(slurp(cc.config_path));
    MechanicalSystem sys = system_from_json(cfg.at("system").dump());
    ControlSchedule sched = schedule_from_config(cfg.at("schedule"));
    sched.validate(sys.m());
    PhasePoint x0(cfg.at("x0").at("q").get<Vec>(), cfg.at("x0").at("p").get<Vec>());
    double dt = cfg.value("dt", 1e-3);
    IntegrateOptions opts;
    opts.safety_box = cfg.value("safety_box", 1e3);
    opts.record = true;
    IntegrateResult res = integrate(sys, sched, x0, dt, opts);

    std::ostringstream csv;
    csv.precision(17);
    csv << "t";
    for (int i = 0; i < sys.space.d; ++i) csv << ",q" << i + 1;
    for (int i = 0; i < sys.space.d; ++i) csv << ",p" << i + 1;
    csv << "\n";
    for (std::size_t k = 0; k < res.trajectory.t.size(); ++k) {
        csv << res.trajectory.t[k];
        for (double v : res.trajectory.x[k].q) csv << "," << v;
        for (double v : res.trajectory.x[k].p) csv << "," << v;
        csv << "\n";
    }
    spit(fs::path(cc.out_dir) / "trajectory.csv", csv.str());

    // Invariants: frozen-energy drift per segment and the Jacobian of the
    // whole schedule.
    double max_drift = 0;
    {
        PhasePoint x = x0;
        x.q = sys.space.wrap_q(x.q);
        for (const auto& seg : sched.segments) {
            HamHandle H = frozen_hamiltonian(sys, seg.u);
            double e0 = H.value(x);
            long steps = std::max(1l, static_cast<long>(std::ceil(seg.tau / dt)));
            PhasePoint y = x;
            for (long s = 0; s < steps; ++s) {
                double h = std::min(dt, seg.tau - s * dt);
                y = strang_flow(sys.space, H, h, dt, y, nullptr, nullptr, opts.safety_box);
                max_drift = std::max(max_drift, std::fabs(H.value(y) - e0));
            }
            x = y;
        }
    }
    FlowMap fm(sys.space);
    fm.safety_box = opts.safety_box;
    for (const auto& seg : sched.segments)
        fm.push(NumericStage{frozen_hamiltonian(sys, seg.u), seg.tau, dt});
    double det = fm.jacobian_det(x0);

    double energy_tol = cc.tol > 0 ? cc.tol : cfg.value("energy_tol", 1e-4);
    bool pass = max_drift <= energy_tol && std::fabs(det - 1.0) <= 1e-6;
    json rep;
    rep["endpoint_q"] = res.endpoint.q;
    rep["endpoint_p"] = res.endpoint.p;
    rep["max_energy_drift"] = max_drift;
    rep["energy_tol"] = energy_tol;
    rep["jacobian_det"] = det;
    rep["pass"] = pass;
    spit(fs::path(cc.out_dir) / "report.json", rep.dump(2));
    out << rep.dump(2) << "\n";
    return pass ? 0 : 4;
}

int cmd_rearrange(const Common& cc, std::ostream& out) {
    json cfg = json::parse(slurp(cc.config_path));
    SpaceSpec space = space_from_json(cfg.at("space"));
    DensityField rho0 = density_from_json(cfg.at("rho0"), space);
    DensityField rho1 = density_from_json(cfg.at("rho1"), space);
    const auto& mj = cfg.at("mesh");
    Mesh mesh(space, mj.at("h").get<double>(), mj.at("anchor").get<Vec>(),
              mj.at("p_box").get<double>());
    RearrangeConfig rc;
    const auto& rj = cfg.at("config");
    rc.a = rj.at("a").get<double>();
    rc.A = rj.at("A").get<double>();
    rc.N = rj.at("N").get<int>();
    rc.h = mesh.h();
    rc.eta = rj.value("eta", mesh.h() / 4);
    rc.r = rj.value("r", 1.0);
    rc.tol = cc.tol > 0 ? cc.tol : rj.value("tol", 0.1);
    QuadratureSpec quad = quadrature_from_json(cfg.value("quadrature", json()));

    RearrangeResult res = build_permutation(rho0, rho1, mesh, rc, quad);
    spit(fs::path(cc.out_dir) / "permutation.json", permutation_to_json(mesh, res.F));
    spit(fs::path(cc.out_dir) / "report.json", res.report_json());
    out << res.report_json() << "\n";
    return res.achieved.value <= rc.tol ? 0 : 4;
}

int cmd_compile(const Common& cc, std::ostream& out) {
    json cfg = json::parse(slurp(cc.config_path));
    auto [mesh, F] = permutation_from_json(slurp(cfg.at("permutation").get<std::string>()));
    CompileConfig conf;
    conf.eta = cfg.value("eta", 0.0);
    conf.w_factor = cfg.value("w_factor", 0.5);
    conf.hover_pitch = cfg.value("hover_pitch", 32.0);
    if (cfg.contains("protected"))
        for (const auto& n : cfg.at("protected")) conf.protected_cubes.push_back(n.get<CubeIndex>());
    CompileResult res = compile_permutation(F, mesh, conf);
    spit(fs::path(cc.out_dir) / "primitives.json", res.seq.to_json());
    spit(fs::path(cc.out_dir) / "report.json", res.report.to_json());
    out << res.report.to_json() << "\n";
    return res.report.ok ? 0 : 4;
}

int cmd_synth(const Common& cc, std::ostream& out) {
    json cfg = json::parse(slurp(cc.config_path));
    std::string kind = cfg.at("construction").get<std::string>();
    PhaseBox K = box_from_json(cfg.value("box", json{{"q_radius", 1.0}, {"p_radius", 1.0}}),
                               cfg.contains("system")
                                   ? space_from_json(cfg.at("system").at("space")).d
                                   : cfg.value("d", 1));
    int samples = cfg.value("samples", 200);
    double ratio_tol = cc.tol > 0 ? cc.tol : cfg.value("ratio_tol", 0.75);

    json ladder = json::array();
    std::vector<double> errors;
    ControlSchedule finest;
    bool have_schedule = false;

    auto push_rung = [&](double param, const SynthesisResult& res, const FlowMap& target) {
        SynthesisError e = synthesis_error(res, target, K, samples);
        ladder.push_back({{"param", param}, {"error", e.c0}, {"total_time", e.total_time}});
        errors.push_back(e.c0);
        if (res.pure_schedule()) {
            finest = res.schedule();
            have_schedule = true;
        }
    };

    if (kind == "potential_kick") {
        auto sys = std::make_shared<MechanicalSystem>(system_from_json(cfg.at("system").dump()));
        int jidx = cfg.at("j").get<int>();
        double s = cfg.value("s", 1.0);
        FlowMap target(sys->space);
        target.push(make_vertical_shear(sys->controls[jidx], s));
        for (double sigma : cfg.at("ladder").get<std::vector<double>>())
            push_rung(sigma, potential_kick(sys, jidx, s, sigma), target);
    } else if (kind == "lie_product") {
        auto sys = std::make_shared<MechanicalSystem>(system_from_json(cfg.at("system").dump()));
        int jidx = cfg.at("j").get<int>();
        double s = cfg.value("s", 1.0);
        double tau = cfg.value("tau", 0.5);
        SynthesisResult f = potential_kick(sys, jidx, s, cfg.value("sigma", 1e-4), 0, true);
        SynthesisResult g = drift_segment(sys, tau, cfg.value("dt", 1e-3));
        FlowMap target(sys->space);
        target.push(make_vertical_shear(sys->controls[jidx], s));
        target.push(NumericStage{frozen_hamiltonian(*sys, Vec(sys->m(), 0.0)), tau,
                                 cfg.value("dt", 1e-3)});
        for (int n : cfg.at("ladder").get<std::vector<int>>())
            push_rung(n, lie_product(f, g, n), target);
    } else if (kind == "bracket") {
        int d = cfg.value("d", 1);
        auto osc = std::make_shared<MechanicalSystem>(oscillator_system(d));
        SynthesisResult f = potential_kick(osc, 0, 1.0, 1e-4, 0, true); // |q|^2/2 kick
        SynthesisResult g = drift_power(d, 1.0);
        FlowMap target(osc->space);
        // {|q|^2/2, |p|^2/2} = -q.p whose time-1 flow is the dilation by 1/e.
        target.push(make_dilation(osc->space, std::exp(-1.0)));
        for (double tau : cfg.at("ladder").get<std::vector<double>>())
            push_rung(tau, bracket_schedule(f, g, tau, true, cfg.value("cancel_n", 16)), target);
    } else if (kind == "reverse_drift") {
        int d = cfg.value("d", 1);
        double w = cfg.value("w", -0.5);
        FlowMap target{SpaceSpec(SpaceKind::euclidean, d)};
        target.push(make_horizontal_shear(ScalarField::from_expr_p(HamExpr::kinetic(d)), w));
        for (double tau : cfg.at("ladder").get<std::vector<double>>()) {
            ReverseDriftOptions rd;
            rd.dt = cfg.value("dt", 1e-4);
            push_rung(tau, reverse_drift_euclidean(d, w, tau, rd), target);
        }
    } else if (kind == "momentum") {
        auto sys = std::make_shared<MechanicalSystem>(system_from_json(cfg.at("system").dump()));
        int i = cfg.value("i", 0);
        double v = cfg.value("v", 1.0);
        FlowMap target(sys->space);
        target.push(make_horizontal_shear(
            ScalarField::from_expr_p(HamExpr::p(sys->space.d, i)), v));
        for (double tau : cfg.at("ladder").get<std::vector<double>>()) {
            SynthesisResult kick = potential_kick(sys, i, -v / tau, 1e-4, 0, true);
            SynthesisResult mid = drift_segment(sys, tau, cfg.value("dt", 1e-3));
            push_rung(tau, conjugate(kick, mid), target);
        }
    } else {
        throw input_error("synth: unknown construction '" + kind + "'");
    }

    bool pass = true;
    for (std::size_t i = 1; i < errors.size(); ++i)
        if (errors[i] > ratio_tol * errors[i - 1]) pass = false;
    json rep;
    rep["construction"] = kind;
    rep["ladder"] = ladder;
    rep["ratio_tol"] = ratio_tol;
    rep["pass"] = pass;
    spit(fs::path(cc.out_dir) / "ladder.json", rep.dump(2));
    if (have_schedule) spit(fs::path(cc.out_dir) / "schedule.csv", schedule_to_csv(finest));
    out << rep.dump(2) << "\n";
    return pass ? 0 : 4;
}

int cmd_steer(const Common& cc, std::ostream& out) {
    json cfg = json::parse(slurp(cc.config_path));
    auto load_ens = [&](const json& j) {
        if (j.is_string()) return ensemble_from_json(slurp(j.get<std::string>()));
        return ensemble_from_json(j.dump());
    };
    EnsembleState start = load_ens(cfg.at("start"));
    EnsembleState target = load_ens(cfg.at("target"));
    double tau = cfg.value("tau", 0.02);
    double dmax = cfg.value("delta_max", 0.02);
    SteeringPlan plan = steer(start, target, tau, dmax);

    std::ostringstream csv;
    csv.precision(17);
    csv << "i,target,achieved,error\n";
    double worst = 0;
    for (int i = 0; i < start.size(); ++i) {
        PhasePoint got = plan.flow.apply(start.points[i]);
        double err = sup_distance(got, target.points[i], start.space);
        worst = std::max(worst, err);
        csv << i << ",\"";
        for (double v : target.points[i].flat()) csv << v << " ";
        csv << "\",\"";
        for (double v : got.flat()) csv << v << " ";
        csv << "\"," << err << "\n";
    }
    spit(fs::path(cc.out_dir) / "plan.json", plan.to_json());
    spit(fs::path(cc.out_dir) / "endpoints.csv", csv.str());

    json rank;
    if (cfg.value("lie_rank", true)) {
        MechanicalSystem sys = start.space.torus() ? torus_preset(start.space.d)
                                                   : euclidean_preset(start.space.d);
        LieRankReport rep = lie_rank_check(sys, start);
        rank = json::parse(rep.to_json());
        spit(fs::path(cc.out_dir) / "rank.json", rep.to_json());
    }
    double tol = cc.tol > 0 ? cc.tol : 1e-10;
    json rep;
    rep["max_endpoint_error"] = worst;
    rep["total_time"] = plan.total_time();
    rep["tol"] = tol;
    rep["pass"] = worst <= tol;
    if (!rank.is_null()) rep["lie_rank"] = rank;
    spit(fs::path(cc.out_dir) / "report.json", rep.dump(2));
    out << rep.dump(2) << "\n";
    return worst <= tol ? 0 : 4;
}

int cmd_verify_orbit(const Common& cc, std::ostream& out) {
    json cfg = json::parse(slurp(cc.config_path));
    SpaceSpec space = space_from_json(cfg.at("space"));
    DensityField rho0 = density_from_json(cfg.at("rho0"), space);
    DensityField rho1 = cfg.contains("rho1")
                            ? density_from_json(cfg.at("rho1"), space)
                            : pushforward(rho0, flow_from_json(cfg.at("flow"), space));
    Vec levels;
    if (cfg.at("levels").is_array()) {
        levels = cfg.at("levels").get<Vec>();
    } else {
        double lo = cfg.at("levels").at("lo").get<double>();
        double hi = cfg.at("levels").at("hi").get<double>();
        int count = cfg.at("levels").at("count").get<int>();
        for (int i = 0; i <= count; ++i) levels.push_back(lo + (hi - lo) * i / count);
    }
    QuadratureSpec quad = quadrature_from_json(cfg.value("quadrature", json()));
    LevelSignature s0 = signature(rho0, levels, quad);
    LevelSignature s1 = signature(rho1, levels, quad);

    PhaseBox box = common_box(rho0, rho1);
    double cell = box.volume();
    for (int i = 0; i < box.dim2(); ++i) cell /= quad.resolution;
    double tol = (cc.tol > 0 ? cc.tol : cfg.value("tol_cells", 2.0)) * cell;

    bool match = signatures_match(s0, s1, tol);
    json rep;
    rep["verdict"] = match ? "match" : "not-equivalent";
    rep["tol_volume"] = tol;
    rep["signature0"] = json::parse(s0.to_json());
    rep["signature1"] = json::parse(s1.to_json());
    spit(fs::path(cc.out_dir) / "verdict.json", rep.dump(2));
    out << rep.dump(2) << "\n";
    return match ? 0 : 3;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hamflow: Hamiltonian transport, rearrangement and control synthesis"};
    app.require_subcommand(1);

    Common cc;
    std::string command;
    for (const char* name : {"simulate", "rearrange", "compile-perm", "synth", "steer",
                             "verify-orbit"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", cc.config_path, "configuration JSON")->required();
        sub->add_option("--out", cc.out_dir, "output directory");
        sub->add_option("--seed", cc.seed, "seed for Monte-Carlo modes");
        sub->add_option("--tol", cc.tol, "override the pass tolerance");
        sub->callback([&command, name]() { command = name; });
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (command == "simulate") return cmd_simulate(cc, out);
        if (command == "rearrange") return cmd_rearrange(cc, out);
        if (command == "compile-perm") return cmd_compile(cc, out);
        if (command == "synth") return cmd_synth(cc, out);
        if (command == "steer") return cmd_steer(cc, out);
        if (command == "verify-orbit") return cmd_verify_orbit(cc, out);
        err << "error: no subcommand\n";
        return 2;
    } catch (const not_equivalent_error& e) {
        err << "not-equivalent: " << e.what() << "\n";
        return 3;
    } catch (const geometry_error& e) {
        err << "geometry error: " << e.what() << "\n";
        return 3;
    } catch (const input_error& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    } catch (const range_error& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    } catch (const escape_error& e) {
        err << "numeric failure: " << e.what() << " (t = " << e.time << ")\n";
        return 4;
    } catch (const std::exception& e) {
        err << "numeric failure: " << e.what() << "\n";
        return 4;
    }
}

} // namespace hamflow
