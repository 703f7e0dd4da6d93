#include <doctest.h>

#include <cmath>

#include "hamflow/ensemble.hpp"
#include "hamflow/errors.hpp"
#include "support/oracles.hpp"

using namespace hamflow;

namespace {
const SpaceSpec euclid1(SpaceKind::euclidean, 1);
const SpaceSpec torus1(SpaceKind::torus, 1);

EnsembleState make_ens(const SpaceSpec& sp, std::vector<std::pair<Vec, Vec>> pts) {
    EnsembleState e;
    e.space = sp;
    for (auto& [q, p] : pts) e.points.push_back(PhasePoint(q, p));
    e.validate();
    return e;
}
} // namespace

TEST_CASE("separate: distinct positions need no drift") {
    EnsembleState e = make_ens(euclid1, {{{0.0}, {1.0}}, {{1.0}, {0.0}}});
    SeparateResult s = separate(e, 0.1);
    CHECK(s.delta == 0.0);
    CHECK(s.margin > 0.5);
}

TEST_CASE("separate: coincident positions split along momenta") {
    EnsembleState e = make_ens(euclid1, {{{0.0}, {0.0}}, {{0.0}, {1.0}}});
    SeparateResult s = separate(e, 0.1);
    CHECK(s.delta > 0.0);
    CHECK(s.margin == doctest::Approx(s.delta * 1.0)); // |delta . (p1 - p0)|

    SpaceSpec t2(SpaceKind::torus, 2);
    EnsembleState et = make_ens(t2, {{{1.0, 1.0}, {0.0, 0.0}}, {{1.0, 1.0}, {0.0, 1.0}}});
    SeparateResult st = separate(et, 0.1);
    CHECK(st.delta > 0.0);
    CHECK(st.margin == doctest::Approx(st.delta).epsilon(1e-9));
}

TEST_CASE("interpolant: exact gradients at the nodes, silence elsewhere") {
    // N = 1, zero gradient
    ScalarField f0 = ensemble_interpolant(euclid1, {{0.5}}, {{0.0}});
    CHECK(sup_norm(f0.grad({0.5})) == 0.0);

    // N = 2 on the torus, prescribed gradients
    ScalarField f = ensemble_interpolant(torus1, {{0.0}, {M_PI}}, {{1.0}, {-2.0}});
    CHECK(f.grad({0.0})[0] == doctest::Approx(1.0));
    CHECK(f.grad({M_PI})[0] == doctest::Approx(-2.0));

    // cross-talk: the q^1 bump vanishes identically near q^2
    double r = (M_PI) / 3.0;
    for (double dq : {-0.2, 0.0, 0.2}) {
        Vec g = f.grad({M_PI + dq});
        CHECK(g[0] == doctest::Approx(-2.0)); // only the local bump acts
    }
    // outside every support the function vanishes
    CHECK(f.value({M_PI / 2}) == doctest::Approx(0.0));
    (void)r;

    // Hessian vanishes on the plateau (first-order data only)
    const double fd = 1e-5;
    double g_plus = f.grad({0.0 + fd})[0], g_minus = f.grad({0.0 - fd})[0];
    CHECK(std::fabs(g_plus - g_minus) / (2 * fd) < 1e-9);

    CHECK_THROWS_AS(ensemble_interpolant(euclid1, {{0.0}, {0.0}}, {{1.0}, {2.0}}), input_error);
}

TEST_CASE("steer: fixed point plan maps each point to itself") {
    EnsembleState e = make_ens(torus1, {{{1.0}, {0.7}}, {{3.0}, {-0.2}}});
    SteeringPlan plan = steer(e, e, 0.05);
    for (const auto& x : e.points) {
        PhasePoint y = plan.flow.apply(x);
        CHECK(sup_distance(y, x, torus1) < 1e-12);
    }
}

TEST_CASE("steer: single torus point to the antipode") {
    EnsembleState start = make_ens(torus1, {{{0.0}, {0.0}}});
    EnsembleState target = make_ens(torus1, {{{M_PI}, {1.0}}});
    SteeringPlan plan = steer(start, target, 0.1);
    PhasePoint y = plan.flow.apply(start.points[0]);
    CHECK(sup_distance(y, target.points[0], torus1) < 1e-12);
    CHECK(std::fabs(plan.hat_p[0][0]) == doctest::Approx(M_PI)); // wrap tie
    CHECK(plan.total_time() <= 0.1 + 2 * 0.02);
}

TEST_CASE("steer: coincident start positions get a separating drift") {
    EnsembleState start = make_ens(euclid1, {{{0.0}, {0.0}}, {{0.0}, {1.0}}});
    EnsembleState target = make_ens(euclid1, {{{2.0}, {1.0}}, {{-1.0}, {0.5}}});
    SteeringPlan plan = steer(start, target, 0.02);
    CHECK(plan.delta1 > 0.0);
    for (int i = 0; i < 2; ++i) {
        PhasePoint y = plan.flow.apply(start.points[i]);
        CHECK(sup_distance(y, target.points[i], euclid1) < 1e-12);
    }
}

TEST_CASE("steer: random ensembles, exactness and volume preservation") {
    Rng rng(47);
    for (int trial = 0; trial < 5; ++trial) {
        // torus d=1, N=3
        EnsembleState s1, t1;
        s1.space = t1.space = torus1;
        for (int i = 0; i < 3; ++i) {
            s1.points.push_back(PhasePoint({rng.uniform(0, two_pi)}, {rng.uniform(-1, 1)}));
            t1.points.push_back(PhasePoint({rng.uniform(0, two_pi)}, {rng.uniform(-1, 1)}));
        }
        s1.validate();
        t1.validate();
        SteeringPlan plan = steer(s1, t1, 0.02, 0.02);
        CHECK(plan.total_time() <= 0.06);
        for (int i = 0; i < 3; ++i) {
            PhasePoint y = plan.flow.apply(s1.points[i]);
            CHECK(sup_distance(y, t1.points[i], torus1) < 1e-12);
            CHECK(plan.flow.jacobian_det(s1.points[i]) == doctest::Approx(1.0).epsilon(1e-7));
        }

        // euclidean d=2, N=2
        SpaceSpec e2(SpaceKind::euclidean, 2);
        EnsembleState s2, t2;
        s2.space = t2.space = e2;
        for (int i = 0; i < 2; ++i) {
            s2.points.push_back(oracles::random_point(rng, 2, 1.5));
            t2.points.push_back(oracles::random_point(rng, 2, 1.5));
        }
        s2.validate();
        t2.validate();
        SteeringPlan plan2 = steer(s2, t2, 0.02, 0.02);
        for (int i = 0; i < 2; ++i) {
            PhasePoint y = plan2.flow.apply(s2.points[i]);
            CHECK(sup_distance(y, t2.points[i], e2) < 1e-12);
        }
    }
}

TEST_CASE("steer: relabeling the pairs does not change the pointwise action") {
    EnsembleState start = make_ens(euclid1, {{{0.0}, {0.3}}, {{2.0}, {-0.4}}});
    EnsembleState target = make_ens(euclid1, {{{1.0}, {0.1}}, {{-1.0}, {0.2}}});
    SteeringPlan plan = steer(start, target, 0.03);

    EnsembleState start_r = make_ens(euclid1, {{{2.0}, {-0.4}}, {{0.0}, {0.3}}});
    EnsembleState target_r = make_ens(euclid1, {{{-1.0}, {0.2}}, {{1.0}, {0.1}}});
    SteeringPlan plan_r = steer(start_r, target_r, 0.03);

    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
        PhasePoint x = oracles::random_point(rng, 1, 2.5);
        CHECK(sup_distance(plan.flow.apply(x), plan_r.flow.apply(x), euclid1) < 1e-12);
    }
}

TEST_CASE("lie rank: full rank frames with unit probes") {
    MechanicalSystem tor = torus_preset(1);

    EnsembleState e1 = make_ens(torus1, {{{1.0}, {0.5}}});
    LieRankReport r1 = lie_rank_check(tor, e1);
    CHECK(r1.dimension == 2);
    CHECK(r1.full_rank);
    CHECK(r1.smallest > 0.9); // unit probes give an orthonormal frame

    EnsembleState e2 = make_ens(torus1, {{{1.0}, {0.5}}, {{3.0}, {-0.5}}});
    LieRankReport r2 = lie_rank_check(tor, e2);
    CHECK(r2.dimension == 4);
    CHECK(r2.full_rank);
    CHECK(r2.smallest > 0.1);

    // coincident positions force a reported pre-drift
    EnsembleState e3 = make_ens(torus1, {{{1.0}, {0.5}}, {{1.0}, {-0.5}}});
    LieRankReport r3 = lie_rank_check(tor, e3);
    CHECK(r3.separation_delta > 0.0);
    CHECK(r3.full_rank);

    // euclidean d=2, N=3: dimension 12
    SpaceSpec e2d(SpaceKind::euclidean, 2);
    MechanicalSystem eu = euclidean_preset(2);
    EnsembleState big = make_ens(e2d, {{{0.0, 0.0}, {0.1, 0.2}},
                                       {{1.0, 0.0}, {0.0, 0.0}},
                                       {{0.0, 1.0}, {-0.1, 0.3}}});
    LieRankReport rb = lie_rank_check(eu, big);
    CHECK(rb.dimension == 12);
    CHECK(rb.full_rank);
    CHECK(rb.smallest > 1e-3);
}

TEST_CASE("lie rank: momentum rows touch exactly one block") {
    // probe interpolants vanish at every other node, so each momentum
    // direction lives in a single 2d-block
    MechanicalSystem tor = torus_preset(1);
    std::vector<Vec> positions{{1.0}, {3.0}};
    std::vector<Vec> grads{{1.0}, {0.0}};
    ScalarField f = ensemble_interpolant(torus1, positions, grads);
    CHECK(f.grad({1.0})[0] == doctest::Approx(1.0));
    CHECK(f.grad({3.0})[0] == 0.0);
    CHECK(f.value({3.0}) == 0.0);
}

TEST_CASE("ensemble json round trip") {
    EnsembleState e = make_ens(torus1, {{{1.0}, {0.5}}, {{3.0}, {-0.5}}});
    EnsembleState back = ensemble_from_json(ensemble_to_json(e));
    CHECK(back.size() == 2);
    CHECK(back.space.torus());
    CHECK(sup_distance(back.points[1], e.points[1], torus1) == 0.0);

    EnsembleState bad;
    bad.space = torus1;
    bad.points = {PhasePoint({1.0}, {0.5}), PhasePoint({1.0}, {0.5})};
    CHECK_THROWS_AS(bad.validate(), input_error);
}
