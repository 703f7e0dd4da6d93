#include <doctest.h>

#include <cmath>

#include "hamflow/compiler.hpp"
#include "hamflow/density.hpp"
#include "hamflow/rearrange.hpp"
#include "hamflow/errors.hpp"
#include "support/oracles.hpp"

using namespace hamflow;

namespace {
const SpaceSpec euclid1(SpaceKind::euclidean, 1);

Mesh demo_mesh(double h = 0.5, double pbox = 4.0) { return Mesh(euclid1, h, {0.0, 0.0}, pbox); }

MeshPermutation perm(std::map<CubeIndex, CubeIndex> m) { return MeshPermutation(std::move(m)); }
} // namespace

TEST_CASE("swap_w_window: admissible widths exist for the standard geometries") {
    // two-cube column at mesh pitch, no bystanders
    auto [lo, hi] = swap_w_window(0.5, 0.5 / 4, 1.0, 1e300);
    CHECK(lo == 0.0);
    CHECK(hi > 0.05);
    // hover pitch with contiguous bystanders
    double G = 32 * 0.5;
    auto [lo2, hi2] = swap_w_window(0.5, 0.5 / 4, G, 1.5 * G);
    CHECK(hi2 > 0);
    CHECK(lo2 < hi2);
    CHECK(hi2 / 2 >= lo2); // the w_max/2 policy clears the bystander bound
}

TEST_CASE("column_spread moves columns rigidly and fixes other columns") {
    Mesh mesh = demo_mesh();
    // column at q-index 0 with cubes at p-indices 0 and 1; column at q-index 2 fixed
    std::vector<CubeIndex> cubes{{0, 0}, {0, 1}, {2, 0}};
    std::vector<Vec> targets{{3.0}, {4.0}, {0.0}}; // common offset +3 for column 0
    FlowStage st = column_spread(mesh, cubes, targets, mesh.h() / 4);
    FlowMap fm(euclid1);
    fm.push(st);

    PhasePoint a = mesh.center_of({0, 0});
    PhasePoint got = fm.apply(a);
    CHECK(got.p[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(got.q[0] == doctest::Approx(a.q[0]));

    // points of the other column are fixed exactly
    Rng rng(3);
    PhasePoint c2 = mesh.center_of({2, 0});
    for (int i = 0; i < 100; ++i) {
        PhasePoint x = c2;
        x.q[0] += rng.uniform(-0.4, 0.4);
        x.p[0] += rng.uniform(-0.4, 0.4);
        PhasePoint y = fm.apply(x);
        CHECK(sup_distance(y, x, euclid1) == 0.0);
    }

    // identity offset on a single cube
    FlowStage id = column_spread(mesh, {{0, 0}}, {{0.0}}, mesh.h() / 4);
    FlowMap fid(euclid1);
    fid.push(id);
    PhasePoint z = fid.apply(mesh.center_of({0, 0}));
    CHECK(sup_distance(z, mesh.center_of({0, 0}), euclid1) == 0.0);

    // images closer than 2h are rejected
    CHECK_THROWS_AS(column_spread(mesh, {{0, 0}, {2, 0}}, {{0.0}, {0.5}}, mesh.h() / 4),
                    geometry_error);
    // inconsistent within-column offsets are rejected
    CHECK_THROWS_AS(column_spread(mesh, {{0, 0}, {0, 1}}, {{3.0}, {7.0}}, mesh.h() / 4),
                    geometry_error);
}

TEST_CASE("horizontal_translate moves the tube and fixes bystanders exactly") {
    Mesh mesh = demo_mesh();
    FlowStage st = horizontal_translate(mesh, {0.0}, {0.0}, {3.0}, mesh.h() / 4);
    FlowMap fm(euclid1);
    fm.push(st);
    PhasePoint y = fm.apply(PhasePoint({0.1}, {0.2}));
    CHECK(y.q[0] == doctest::Approx(3.1).epsilon(1e-12));
    CHECK(y.p[0] == doctest::Approx(0.2));

    // bystander at a distant momentum: profile support vanishes there
    PhasePoint far({0.1}, {2.0});
    CHECK(sup_distance(fm.apply(far), far, euclid1) == 0.0);

    // q_to == q_from gives the identity on the tube
    FlowStage id = horizontal_translate(mesh, {0.0}, {0.0}, {0.0}, mesh.h() / 4);
    FlowMap fid(euclid1);
    fid.push(id);
    PhasePoint z = fid.apply(PhasePoint({0.1}, {0.2}));
    CHECK(sup_distance(z, PhasePoint({0.1}, {0.2}), euclid1) == 0.0);
}

TEST_CASE("swap_consecutive: half-period rotation exchanges the cubes") {
    Mesh mesh = demo_mesh();
    double h = mesh.h(), eta = h / 4;
    Vec o1{1.0}, o2{2.0};
    auto [wlo, whi] = swap_w_window(h, eta, 1.0, 1e300);
    CHECK(wlo == 0.0);
    double w = whi / 2;
    FlowStage st = swap_consecutive(mesh, {0.0}, o1, o2, w, eta);
    FlowMap fm(euclid1);
    fm.push(st);

    // (q~ + a, o1 + b) -> (q~ - a, o2 - b): point reflection through the center
    PhasePoint x({0.2}, {1.1});
    PhasePoint y = fm.apply(x);
    CHECK(y.q[0] == doctest::Approx(-0.2).epsilon(1e-10));
    CHECK(y.p[0] == doctest::Approx(1.9).epsilon(1e-10));

    // duration = pi * w
    const auto& rot = std::get<RotationStage>(st);
    CHECK(rot.time == doctest::Approx(M_PI * w));

    // a cube of a different column is outside the support: fixed exactly
    PhasePoint other({1.0}, {1.5});
    CHECK(sup_distance(fm.apply(other), other, euclid1) == 0.0);

    // too-large w is rejected with the admissible bound in the message
    CHECK_THROWS_AS(swap_consecutive(mesh, {0.0}, o1, o2, 10 * whi, eta), geometry_error);
}

TEST_CASE("compile: identity permutation compiles to nothing") {
    Mesh mesh = demo_mesh();
    CompileResult res = compile_permutation(perm({}), mesh, {});
    CHECK(res.seq.stage_count() == 0);
    CHECK(res.report.ok);
}

TEST_CASE("compile: two-cube swap in one column") {
    Mesh mesh = demo_mesh();
    std::map<CubeIndex, CubeIndex> m;
    m[{0, 0}] = {0, 2};
    m[{0, 2}] = {0, 0};
    CompileResult res = compile_permutation(perm(m), mesh, {});
    CHECK(res.report.ok);
    CHECK(res.report.max_center_error < 1e-9);
    CHECK(res.seq.rotation_time > 0);

    // composed exact maps oracle: centers land on the swapped centers
    PhasePoint a = mesh.center_of({0, 0}), b = mesh.center_of({0, 2});
    CHECK(sup_distance(res.seq.flow.apply(a), b, euclid1) < 1e-9);
    CHECK(sup_distance(res.seq.flow.apply(b), a, euclid1) < 1e-9);

    // the compiled flow is volume preserving at random points away from collars
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        PhasePoint x = oracles::random_point(rng, 1, 3.0);
        StageResult r = res.seq.flow.apply_checked(x);
        if (!r.certified) continue;
        CHECK(res.seq.flow.jacobian_det(x) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("compile: three-cube cycle across two columns") {
    Mesh mesh = demo_mesh();
    std::map<CubeIndex, CubeIndex> m;
    m[{0, 0}] = {2, 0};
    m[{2, 0}] = {0, 1};
    m[{0, 1}] = {0, 0};
    MeshPermutation F = perm(m);
    CompileResult res = compile_permutation(F, mesh, {});
    CHECK(res.report.ok);
    CHECK(res.report.max_center_error < 1e-9);

    // density fidelity: indicator on the shrunken cubes transports like F
    CompileConfig cfg;
    double eta = mesh.h() / 4;
    std::vector<std::pair<Cube, double>> cubes;
    int val = 1;
    for (const auto& [n, l] : F.mapping()) {
        Cube c;
        c.center = mesh.center_of(n);
        c.radius = mesh.h() - eta;
        cubes.push_back({c, static_cast<double>(val++)});
    }
    DensityField rho = DensityField::from_cubes(euclid1, cubes);
    DensityField via_F = compose_with_permutation(rho, F, mesh);
    DensityField via_phi = pushforward(rho, res.seq.flow);
    QuadratureSpec quad;
    quad.resolution = 96;
    LrResult dist = lr_distance(via_F, via_phi, 1, quad);
    CHECK(dist.value < 0.15); // discrepancy lives in the eta-collars
    (void)cfg;
}

TEST_CASE("compile: protected cubes are routed around and restored") {
    Mesh mesh = demo_mesh();
    std::map<CubeIndex, CubeIndex> m;
    m[{0, 0}] = {0, 3};
    m[{0, 3}] = {0, 0};
    CompileConfig cfg;
    cfg.protected_cubes = {{0, 1}, {0, 2}}; // sit between the swapped cubes
    CompileResult res = compile_permutation(perm(m), mesh, cfg);
    CHECK(res.report.ok);
    for (const auto& idx : cfg.protected_cubes) {
        PhasePoint c = mesh.center_of(idx);
        CHECK(sup_distance(res.seq.flow.apply(c), c, euclid1) < 1e-9);
    }
}

TEST_CASE("compile: d = 2 reshuffle with staging lanes") {
    SpaceSpec e2(SpaceKind::euclidean, 2);
    Mesh mesh(e2, 0.5, Vec(4, 0.0), 4.0);
    std::map<CubeIndex, CubeIndex> m;
    // swap two cubes of the same column differing in both momentum axes
    m[{0, 0, 0, 0}] = {0, 0, 1, 1};
    m[{0, 0, 1, 1}] = {0, 0, 0, 0};
    // and translate a third cube to another column
    m[{2, 0, 0, 2}] = {4, 2, 0, 2};
    m[{4, 2, 0, 2}] = {2, 0, 0, 2};
    CompileResult res = compile_permutation(perm(m), mesh, {});
    CHECK(res.report.ok);
    CHECK(res.report.max_center_error < 1e-9);
    CHECK(res.seq.rotation_time == 0.0); // d >= 2 uses translations only
}

TEST_CASE("compile: torus permutation with wrapped tubes") {
    SpaceSpec t1(SpaceKind::torus, 1);
    Mesh mesh(t1, two_pi / 16, {two_pi / 32, 0.0}, 4.0); // 8 cells per circle
    std::map<CubeIndex, CubeIndex> m;
    m[{1, 0}] = {6, 0}; // minimal representative wraps backwards
    m[{6, 0}] = {1, 0};
    CompileResult res = compile_permutation(perm(m), mesh, {});
    CHECK(res.report.ok);
    CHECK(res.report.max_center_error < 1e-9);

    // non-canonical torus indices are rejected up front
    std::map<CubeIndex, CubeIndex> bad;
    bad[{1, 0}] = {9, 0};
    bad[{9, 0}] = {1, 0};
    CHECK_THROWS_AS(compile_permutation(perm(bad), mesh, {}), input_error);
}

TEST_CASE("compiled sequences report their synthetic rotation time") {
    Mesh mesh = demo_mesh();
    std::map<CubeIndex, CubeIndex> m;
    m[{0, 0}] = {0, 2};
    m[{0, 2}] = {0, 0};
    CompileConfig a, b;
    a.w_factor = 0.5;
    b.w_factor = 0.25;
    double ta = compile_permutation(perm(m), mesh, a).seq.rotation_time;
    double tb = compile_permutation(perm(m), mesh, b).seq.rotation_time;
    CHECK(tb < ta); // scaling the w policy scales the synthetic time down
    CHECK(tb == doctest::Approx(ta / 2).epsilon(0.01));
}

TEST_CASE("emulate_symmetry sends cubes to their reflections") {
    SpaceSpec t1(SpaceKind::torus, 1);
    Mesh mesh(t1, two_pi / 16, {two_pi / 32, 0.0}, 4.0);
    // one column with cubes at p = +-c and one cube centered on p = 0
    std::vector<CubeIndex> cubes{{2, -1}, {2, 1}, {5, 0}};
    CompileConfig cfg;
    cfg.eta = mesh.h() / 4;
    CompileResult res = emulate_symmetry(mesh, cubes, cfg);
    CHECK(res.report.ok);

    // centers land on the S-images
    for (const auto& n : cubes) {
        PhasePoint c = mesh.center_of(n);
        PhasePoint want = c;
        want.p[0] = -want.p[0];
        CHECK(sup_distance(res.seq.flow.apply(c), want, t1) < 1e-9);
    }

    // density level: || rho o phi - rho o S ||_1 small for the cube-union indicator
    double c = mesh.h() - cfg.eta;
    std::vector<std::pair<Cube, double>> ind;
    for (const auto& n : cubes) ind.push_back({Cube{mesh.center_of(n), c}, 1.0});
    DensityField rho = DensityField::from_cubes(t1, ind);
    rho = DensityField::from_callable(
        t1, [rho](const PhasePoint& x) { return rho(x); },
        PhaseBox{{0, -2}, {two_pi, 2}}, 1, "cubes");
    DensityField via_phi = pushforward(rho, res.seq.flow);
    FlowMap S(t1);
    S.push(make_symmetry());
    DensityField via_S = pushforward(rho, S);
    QuadratureSpec quad;
    quad.resolution = 128;
    CHECK(lr_distance(via_phi, via_S, 1, quad).value < 0.06);

    CHECK_THROWS_AS(emulate_symmetry(demo_mesh(), {{0, 0}}, {}), unsupported_error);
}
