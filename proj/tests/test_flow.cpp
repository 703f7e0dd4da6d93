#include <doctest.h>

#include <cmath>

#include "hamflow/errors.hpp"
#include "hamflow/flow.hpp"
#include "support/oracles.hpp"

using namespace hamflow;

namespace {
const SpaceSpec euclid1(SpaceKind::euclidean, 1);
const SpaceSpec torus1(SpaceKind::torus, 1);

FlowMap single(const SpaceSpec& sp, FlowStage st) {
    FlowMap fm(sp);
    fm.push(std::move(st));
    return fm;
}
} // namespace

TEST_CASE("integrate: free motion") {
    MechanicalSystem sys = euclidean_preset(1);
    auto res = integrate(sys, ControlSchedule::constant(1.0, {0.0, 0.0}), {{0.0}, {1.0}}, 1e-3);
    CHECK(res.endpoint.q[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.endpoint.p[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("integrate: harmonic quarter turn") {
    MechanicalSystem osc = oscillator_system(1);
    auto res = integrate(osc, ControlSchedule::constant(M_PI / 2, {1.0}), {{1.0}, {0.0}}, 1e-4);
    CHECK(std::fabs(res.endpoint.q[0] - 0.0) < 1e-8);
    CHECK(std::fabs(res.endpoint.p[0] + 1.0) < 1e-8);
}

TEST_CASE("integrate: constant force matches the closed form") {
    MechanicalSystem sys = euclidean_preset(1);
    for (double t : {0.25, 0.5, 1.0}) {
        auto res = integrate(sys, ControlSchedule::constant(t, {1.0, 0.0}), {{0.0}, {0.0}}, 1e-4);
        // H = p^2/2 + q: qddot = -1
        CHECK(res.endpoint.q[0] == doctest::Approx(-t * t / 2).epsilon(1e-8));
        CHECK(res.endpoint.p[0] == doctest::Approx(-t).epsilon(1e-8));
    }
}

TEST_CASE("integrate: segment boundaries are exact and escapes are reported") {
    MechanicalSystem sys = euclidean_preset(1);
    ControlSchedule sched;
    sched.segments.push_back({0.1234, {0.0, 0.0}});
    sched.segments.push_back({0.0777, {1.0, 0.0}});
    IntegrateOptions opts;
    opts.record = true;
    auto res = integrate(sys, sched, {{0.0}, {1.0}}, 1e-3, opts);
    CHECK(res.trajectory.t.back() == doctest::Approx(0.2011));

    IntegrateOptions tight;
    tight.safety_box = 0.5;
    CHECK_THROWS_AS(
        integrate(sys, ControlSchedule::constant(5.0, {0.0, 0.0}), {{0.0}, {1.0}}, 1e-3, tight),
        escape_error);
}

TEST_CASE("vertical shear formula") {
    ScalarField f = ScalarField::from_expr_q(HamExpr::parse("0.5*q1^2", 1));
    FlowMap fm = single(euclid1, make_vertical_shear(f, 1.0));
    PhasePoint y = fm.apply({{2.0}, {0.0}});
    CHECK(y.q[0] == doctest::Approx(2.0));
    CHECK(y.p[0] == doctest::Approx(-2.0));

    FlowMap id = single(euclid1, make_vertical_shear(f, 0.0));
    PhasePoint z = id.apply({{2.0}, {0.5}});
    CHECK(z.p[0] == doctest::Approx(0.5));

    ScalarField cosq = ScalarField::from_expr_q(HamExpr::parse("cos(q1)", 1));
    PhasePoint w = single(euclid1, make_vertical_shear(cosq, 3.0)).apply({{0.0}, {1.0}});
    CHECK(w.p[0] == doctest::Approx(1.0)); // gradient of cos vanishes at 0

    CHECK_THROWS_AS(make_vertical_shear(ScalarField::from_expr_p(HamExpr::kinetic(1)), 1.0),
                    input_error);
}

TEST_CASE("horizontal shear formula and torus wrap") {
    ScalarField kin = ScalarField::from_expr_p(HamExpr::kinetic(1));
    PhasePoint y = single(euclid1, make_horizontal_shear(kin, 0.7)).apply({{0.0}, {1.0}});
    CHECK(y.q[0] == doctest::Approx(0.7));
    CHECK(y.p[0] == doctest::Approx(1.0));

    ScalarField g2 = ScalarField::from_expr_p(HamExpr::parse("p1*p2", 2));
    SpaceSpec e2(SpaceKind::euclidean, 2);
    PhasePoint z = single(e2, make_horizontal_shear(g2, 1.0)).apply({{0.0, 0.0}, {1.0, 2.0}});
    CHECK(z.q[0] == doctest::Approx(2.0));
    CHECK(z.q[1] == doctest::Approx(1.0));

    ScalarField kint = ScalarField::from_expr_p(HamExpr::kinetic(1));
    PhasePoint t = single(torus1, make_horizontal_shear(kint, 4 * M_PI)).apply({{0.0}, {1.0}});
    CHECK(t.q[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(t.p[0] == doctest::Approx(1.0));
}

TEST_CASE("harmonic rotation: half turn, full turn, quarter turn") {
    CutoffSpec cut{1.0, 1.5};
    double w = 0.5;
    PhasePoint center({0.0}, {0.0});

    FlowMap half = single(euclid1, make_harmonic_rotation(center, w, M_PI * w, cut));
    PhasePoint y = half.apply({{0.3}, {0.4}});
    CHECK(y.q[0] == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(y.p[0] == doctest::Approx(-0.4).epsilon(1e-12));

    FlowMap full = single(euclid1, make_harmonic_rotation(center, w, 2 * M_PI * w, cut));
    PhasePoint z = full.apply({{0.3}, {0.4}});
    CHECK(std::fabs(z.q[0] - 0.3) < 1e-12);
    CHECK(std::fabs(z.p[0] - 0.4) < 1e-12);

    FlowMap quarter = single(euclid1, make_harmonic_rotation(center, 1.0, M_PI / 2, cut));
    PhasePoint u = quarter.apply({{0.1}, {0.2}});
    CHECK(u.q[0] == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(u.p[0] == doctest::Approx(-0.1).epsilon(1e-10));
}

TEST_CASE("harmonic rotation: collar falls back to the cutoff flow") {
    CutoffSpec cut{0.5, 1.0};
    FlowMap rot = single(euclid1, make_harmonic_rotation(PhasePoint({0.0}, {0.0}), 1.0, M_PI, cut));
    // outside the support: fixed exactly
    PhasePoint far = rot.apply({{1.4}, {0.0}});
    CHECK(far.q[0] == doctest::Approx(1.4));
    // in the collar: flagged uncertified, but the elliptic radius is conserved
    StageResult r = rot.apply_checked({{0.7}, {0.0}});
    CHECK(!r.certified);
    double s0 = 0.7, s1 = std::sqrt(r.x.q[0] * r.x.q[0] + r.x.p[0] * r.x.p[0]);
    CHECK(s1 == doctest::Approx(s0).epsilon(1e-6));
}

TEST_CASE("dilation") {
    FlowMap fm = single(euclid1, make_dilation(euclid1, 2.0));
    PhasePoint y = fm.apply({{1.0}, {4.0}});
    CHECK(y.q[0] == doctest::Approx(2.0));
    CHECK(y.p[0] == doctest::Approx(2.0));

    Rng rng(3);
    FlowMap round = single(euclid1, make_dilation(euclid1, 1.7));
    round.push(make_dilation(euclid1, 1.0 / 1.7));
    for (int i = 0; i < 100; ++i) {
        PhasePoint x = oracles::random_point(rng, 1, 5);
        PhasePoint z = round.apply(x);
        CHECK(sup_distance(z, x, euclid1) < 1e-14);
    }
    CHECK_THROWS_AS(make_dilation(torus1, 2.0), unsupported_error);
}

TEST_CASE("symmetry S and backward drift at the map level") {
    FlowMap S = single(euclid1, make_symmetry());
    PhasePoint y = S.apply({{1.0}, {2.0}});
    CHECK(y.q[0] == doctest::Approx(1.0));
    CHECK(y.p[0] == doctest::Approx(-2.0));
    CHECK(!S.hamiltonian());

    PhasePoint z = S.then(S).apply({{1.0}, {2.0}});
    CHECK(sup_distance(z, PhasePoint({1.0}, {2.0}), euclid1) == 0.0);

    // S drift(tau) S = drift(-tau)
    MechanicalSystem sys = euclidean_preset(1);
    double tau = 0.3;
    FlowMap lhs(euclid1);
    lhs.push(make_symmetry());
    lhs.push(NumericStage{frozen_hamiltonian(sys, {0.0, 0.0}), tau, 1e-3});
    lhs.push(make_symmetry());
    FlowMap rhs(euclid1);
    rhs.push(NumericStage{frozen_hamiltonian(sys, {0.0, 0.0}), -tau, 1e-3});
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        PhasePoint x = oracles::random_point(rng, 1, 2);
        CHECK(sup_distance(lhs.apply(x), rhs.apply(x), euclid1) < 1e-8);
    }
}

TEST_CASE("jacobians: exact stages, numeric stages, symmetry") {
    ScalarField f = ScalarField::from_expr_q(HamExpr::parse("cos(q1)", 1));
    FlowMap exact(euclid1);
    exact.push(make_vertical_shear(f, 0.8));
    exact.push(make_dilation(euclid1, 1.3));
    exact.push(make_harmonic_rotation(PhasePoint({0.0}, {0.0}), 1.0, 0.4, CutoffSpec{2.0, 3.0}));
    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
        PhasePoint x = oracles::random_point(rng, 1, 0.9);
        CHECK(exact.jacobian_det(x) == doctest::Approx(1.0).epsilon(1e-12));
    }

    MechanicalSystem tor = torus_preset(1);
    FlowMap numeric(torus1);
    numeric.push(NumericStage{frozen_hamiltonian(tor, {0.7, -0.4}), 1.0, 1e-3});
    Mat omega = symplectic_form(1);
    for (int i = 0; i < 100; ++i) {
        PhasePoint x({rng.uniform(0, two_pi)}, {rng.uniform(-1, 1)});
        Mat J = numeric.tangent(x);
        CHECK(std::fabs(J.det() - 1.0) < 1e-6);
        Mat defect = J.transpose().mul(omega).mul(J);
        for (std::size_t k = 0; k < defect.a.size(); ++k) defect.a[k] -= omega.a[k];
        CHECK(defect.max_abs() < 1e-6);
    }

    FlowMap withS = single(euclid1, make_symmetry());
    CHECK(withS.jacobian_det({{0.2}, {0.3}}) == doctest::Approx(-1.0));
}

TEST_CASE("energy drift of the splitting stays quadratic in dt") {
    MechanicalSystem tor = torus_preset(1);
    HamHandle H = frozen_hamiltonian(tor, {1.0, 0.0}); // pendulum
    PhasePoint x({1.0}, {0.5});
    double e0 = H.value(x);
    PhasePoint y = strang_flow(torus1, H, 1.0, 1e-3, x, nullptr, nullptr, 1e3);
    // sample energy along the way too
    double drift = std::fabs(H.value(y) - e0);
    PhasePoint z = x;
    for (int k = 0; k < 1000; ++k) {
        z = strang_flow(torus1, H, 1e-3, 1e-3, z, nullptr, nullptr, 1e3);
        drift = std::max(drift, std::fabs(H.value(z) - e0));
    }
    CHECK(drift < 1e-4);
}

TEST_CASE("exact stage group laws") {
    ScalarField f = ScalarField::from_expr_q(HamExpr::parse("cos(q1) + 0.25*q1^2", 1));
    Rng rng(19);
    for (int i = 0; i < 50; ++i) {
        double s = rng.uniform(-1, 1), t = rng.uniform(-1, 1);
        FlowMap two(euclid1);
        two.push(make_vertical_shear(f, s));
        two.push(make_vertical_shear(f, t));
        FlowMap one = single(euclid1, make_vertical_shear(f, s + t));
        PhasePoint x = oracles::random_point(rng, 1, 2);
        CHECK(sup_distance(two.apply(x), one.apply(x), euclid1) < 1e-13);

        FlowMap dd(euclid1);
        double a = rng.uniform(0.5, 2), b = rng.uniform(0.5, 2);
        dd.push(make_dilation(euclid1, a));
        dd.push(make_dilation(euclid1, b));
        FlowMap d1 = single(euclid1, make_dilation(euclid1, a * b));
        CHECK(sup_distance(dd.apply(x), d1.apply(x), euclid1) < 1e-12 * (1 + sup_norm(x.q)));
    }
}

TEST_CASE("c0 distance: identity, drift, Richardson ladder") {
    FlowMap id = FlowMap::identity(euclid1);
    CHECK(c0_distance(id, id, PhaseBox::cube(1, 1, 1), 100) == 0.0);

    MechanicalSystem sys = euclidean_preset(1);
    double tau = 0.35;
    FlowMap drift(euclid1);
    drift.push(NumericStage{frozen_hamiltonian(sys, {0.0, 0.0}), tau, 1e-3});
    double dist = c0_distance(drift, id, PhaseBox::cube(1, 1, 1), 400);
    CHECK(dist == doctest::Approx(tau).epsilon(0.02)); // max |p| tau over the box

    // Verlet refinement: halving dt divides the defect by about 4
    MechanicalSystem tor = torus_preset(1);
    auto flow_with_dt = [&](double dt) {
        FlowMap fm(torus1);
        fm.push(NumericStage{frozen_hamiltonian(tor, {1.0, 0.0}), 1.0, dt});
        return fm;
    };
    PhaseBox K = PhaseBox::cube(1, 1, 1);
    double e1 = c0_distance(flow_with_dt(4e-3), flow_with_dt(2e-3), K, 60);
    double e2 = c0_distance(flow_with_dt(2e-3), flow_with_dt(1e-3), K, 60);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.35));
}

TEST_CASE("flows of nearby hamiltonians converge (coefficient ladder)") {
    MechanicalSystem tor = torus_preset(1);
    auto flow_eps = [&](double eps) {
        FlowMap fm(torus1);
        fm.push(NumericStage{frozen_hamiltonian(tor, {1.0 + eps, 0.0}), 1.0, 1e-3});
        return fm;
    };
    PhaseBox K = PhaseBox::cube(1, 1, 1);
    FlowMap base = flow_eps(0.0);
    double prev = 1e300;
    for (double eps : {0.4, 0.2, 0.1}) {
        double dist = c0_distance(flow_eps(eps), base, K, 50);
        CHECK(dist < 0.75 * prev);
        prev = dist;
    }
}

TEST_CASE("flow inverse undoes composite flows") {
    ScalarField f = ScalarField::from_expr_q(HamExpr::parse("cos(q1)", 1));
    ScalarField g = ScalarField::from_expr_p(HamExpr::parse("0.5*p1^2", 1));
    MechanicalSystem sys = euclidean_preset(1);
    FlowMap fm(euclid1);
    fm.push(make_vertical_shear(f, 0.6));
    fm.push(NumericStage{frozen_hamiltonian(sys, {0.3, 0.1}), 0.5, 1e-3});
    fm.push(make_horizontal_shear(g, 0.4));
    fm.push(make_dilation(euclid1, 1.25));
    FlowMap inv = fm.inverse();
    Rng rng(41);
    for (int i = 0; i < 40; ++i) {
        PhasePoint x = oracles::random_point(rng, 1, 1.5);
        PhasePoint back = inv.apply(fm.apply(x));
        CHECK(sup_distance(back, x, euclid1) < 1e-9);
    }
}
