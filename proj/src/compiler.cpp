#include "hamflow/compiler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hamflow/errors.hpp"

namespace hamflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Safety factors of the rotation geometry: cubes sit strictly inside r1, the
// support stays strictly inside the foreign-column margin and strictly off
// the same-column bystanders.
constexpr double kR1Pad = 1.01;
constexpr double kR2Pad = 1.02;
constexpr double kMarginUse = 0.95;

double swap_s_max(double c, double w, double half_gap) {
    double reach = w * (half_gap + c);
    return std::sqrt(c * c + reach * reach);
}

} // namespace

std::pair<double, double> swap_w_window(double h, double eta, double pair_gap,
                                        double bystander_min_dist) {
    const double c = h - eta;
    const double Q = h + eta; // distance from column center to foreign cube edge
    const double half_gap = pair_gap / 2;
    const double s_limit = kMarginUse * Q / (kR1Pad * kR2Pad);
    if (s_limit <= c) return {1e300, 0.0};
    double w_upper = std::sqrt(s_limit * s_limit - c * c) / (half_gap + c);
    double w_lower = 0.0;
    if (std::isfinite(bystander_min_dist)) {
        double D = bystander_min_dist - c;
        double k = kR1Pad * kR2Pad / kMarginUse;
        double denom = D * D - k * k * (half_gap + c) * (half_gap + c);
        if (denom <= 0) return {1e300, w_upper};
        w_lower = std::sqrt(k * k * c * c / denom);
    }
    return {w_lower, w_upper};
}

namespace {

// Rotation width for a swap under the configured policy: w_factor * w_upper
// when it clears the bystander bound, otherwise the geometric mean of the
// admissible window.
double pick_swap_w(double h, double eta, double pair_gap, double bystander_min_dist,
                   double w_factor) {
    auto [lo, hi] = swap_w_window(h, eta, pair_gap, bystander_min_dist);
    if (hi <= 0 || lo > hi) {
        std::ostringstream os;
        os << "swap geometry infeasible: admissible w window is empty (max admissible w = " << hi
           << ")";
        throw geometry_error(os.str());
    }
    double w = w_factor * hi;
    if (w < lo) w = std::sqrt(lo * hi);
    return w;
}

CutoffSpec swap_cutoff(double h, double eta, double pair_gap, double bystander_min_dist,
                       double w) {
    const double c = h - eta;
    const double Q = h + eta;
    double s_max = swap_s_max(c, w, pair_gap / 2);
    double r1 = kR1Pad * s_max;
    double r2 = std::min(1.2 * r1, kMarginUse * Q);
    if (std::isfinite(bystander_min_dist))
        r2 = std::min(r2, kMarginUse * w * (bystander_min_dist - c));
    if (!(r2 > r1)) {
        std::ostringstream os;
        os << "swap not certified at w = " << w << " (max admissible w = "
           << swap_w_window(h, eta, pair_gap, bystander_min_dist).second << ")";
        throw geometry_error(os.str());
    }
    return CutoffSpec{r1, r2};
}

std::string idx_str(const CubeIndex& n) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < n.size(); ++i) os << (i ? "," : "") << n[i];
    os << ")";
    return os.str();
}

} // namespace

// ---------------------------------------------------------------------------
// Public single-stage constructors

FlowStage column_spread(const Mesh& mesh, const std::vector<CubeIndex>& cubes,
                        const std::vector<Vec>& target_momenta, double eta) {
    if (cubes.size() != target_momenta.size())
        throw input_error("column_spread: cubes and targets must pair up");
    if (cubes.empty()) throw input_error("column_spread: empty cube list");
    const SpaceSpec& sp = mesh.space();
    const int d = sp.d;
    const double h = mesh.h(), c = h - eta, margin = eta / 2;

    // Group into columns by the q-part of the index.
    std::map<std::vector<long>, std::vector<std::size_t>> columns;
    for (std::size_t i = 0; i < cubes.size(); ++i)
        columns[std::vector<long>(cubes[i].begin(), cubes[i].begin() + d)].push_back(i);

    // Pairwise separation of the images.
    for (std::size_t i = 0; i < cubes.size(); ++i)
        for (std::size_t j = i + 1; j < cubes.size(); ++j) {
            double sep = 0;
            for (int k = 0; k < d; ++k)
                sep = std::max(sep, std::fabs(target_momenta[i][k] - target_momenta[j][k]));
            if (sep < 2 * h - 1e-12)
                throw geometry_error("column_spread: images " + idx_str(cubes[i]) + " and " +
                                     idx_str(cubes[j]) + " closer than 2h");
        }

    LocalizedShearStage stage;
    for (const auto& [qkey, members] : columns) {
        PhasePoint q_center = mesh.center_of(cubes[members[0]]);
        // One offset per column.
        Vec a(d, 0.0);
        {
            PhasePoint m0 = mesh.center_of(cubes[members[0]]);
            for (int k = 0; k < d; ++k) a[k] = m0.p[k] - target_momenta[members[0]][k];
        }
        Vec plo(d, 1e300), phi(d, -1e300);
        for (std::size_t mi : members) {
            PhasePoint m = mesh.center_of(cubes[mi]);
            for (int k = 0; k < d; ++k) {
                double off = m.p[k] - a[k];
                if (std::fabs(off - target_momenta[mi][k]) > 1e-9)
                    throw geometry_error("column_spread: offsets within column " + idx_str(cubes[mi]) +
                                         " are not constant");
                plo[k] = std::min({plo[k], m.p[k] - c, off - c});
                phi[k] = std::max({phi[k], m.p[k] + c, off + c});
            }
        }
        LocalizedProfile prof;
        prof.base = LocalizedProfile::Base::vertical;
        prof.coeff = a;
        prof.bump.space = sp;
        prof.bump.center.q = q_center.q;
        prof.bump.center.p.resize(d);
        prof.bump.plateau_half.assign(2 * d, 0.0);
        prof.bump.support_half.assign(2 * d, 0.0);
        for (int k = 0; k < d; ++k) {
            prof.bump.plateau_half[k] = c;
            prof.bump.support_half[k] = c + margin;
            prof.bump.center.p[k] = 0.5 * (plo[k] + phi[k]);
            prof.bump.plateau_half[d + k] = 0.5 * (phi[k] - plo[k]);
            prof.bump.support_half[d + k] = prof.bump.plateau_half[d + k] + margin;
        }
        stage.profiles.push_back(std::move(prof));
    }
    // Columns live on the 2h lattice, so distinct q-plateaus are disjoint by
    // construction; verify anyway.
    for (std::size_t i = 0; i < stage.profiles.size(); ++i)
        for (std::size_t j = i + 1; j < stage.profiles.size(); ++j) {
            Vec dq = sp.q_diff(stage.profiles[i].bump.center.q, stage.profiles[j].bump.center.q);
            double gap = sup_norm(dq);
            if (gap < 2 * (c + margin))
                throw geometry_error("column_spread: columns too close for disjoint plateaus");
        }
    return stage;
}

FlowStage horizontal_translate(const Mesh& mesh, const Vec& q_from, const Vec& o_n,
                               const Vec& q_to, double eta) {
    const SpaceSpec& sp = mesh.space();
    const int d = sp.d;
    const double h = mesh.h(), c = h - eta, margin = eta / 2;
    Vec b = sp.q_diff(q_to, q_from); // minimal representative of the move
    LocalizedProfile prof;
    prof.base = LocalizedProfile::Base::horizontal;
    prof.coeff = b;
    prof.bump.space = sp;
    prof.bump.center.q.resize(d);
    prof.bump.center.p = o_n;
    prof.bump.plateau_half.assign(2 * d, 0.0);
    prof.bump.support_half.assign(2 * d, 0.0);
    for (int k = 0; k < d; ++k) {
        prof.bump.center.q[k] = sp.wrap_coord(q_from[k] + 0.5 * b[k]);
        prof.bump.plateau_half[k] = 0.5 * std::fabs(b[k]) + c;
        prof.bump.support_half[k] = prof.bump.plateau_half[k] + margin;
        if (sp.torus() && prof.bump.support_half[k] >= kPi * 0.999)
            throw geometry_error("horizontal_translate: tube wraps around the torus");
        prof.bump.plateau_half[d + k] = c;
        prof.bump.support_half[d + k] = c + margin;
    }
    LocalizedShearStage stage;
    stage.profiles.push_back(std::move(prof));
    return stage;
}

FlowStage swap_consecutive(const Mesh& mesh, const Vec& column_q, const Vec& o1, const Vec& o2,
                           double w, double eta) {
    const SpaceSpec& sp = mesh.space();
    const int d = sp.d;
    const double h = mesh.h();
    Vec gap = vsub(o2, o1);
    double pair_gap = norm2(gap);
    if (pair_gap <= 0) throw input_error("swap_consecutive: coincident momenta");
    PhasePoint center;
    center.q = column_q;
    center.p.resize(d);
    for (int k = 0; k < d; ++k) center.p[k] = 0.5 * (o1[k] + o2[k]);
    CutoffSpec cut = swap_cutoff(h, eta, pair_gap, 1e300, w);
    return make_harmonic_rotation(std::move(center), w, kPi * w, cut);
}

// ---------------------------------------------------------------------------
// compile_permutation

namespace {

struct Member {
    CubeIndex id;  // original cube
    CubeIndex cur; // current lattice position (q-part then p-part)
    CubeIndex tgt; // F(id)
    bool fixed;    // protected: target == id
};

struct Builder {
    const Mesh& mesh;
    SpaceSpec sp;
    CompileConfig cfg;
    int d;
    double h, eta, c, margin;
    std::vector<Member> members;
    PrimitiveSeq seq;

    Builder(const Mesh& m, const CompileConfig& config)
        : mesh(m), sp(m.space()), cfg(config), d(sp.d), h(m.h()) {
        eta = cfg.eta > 0 ? cfg.eta : h / 4.0;
        if (eta >= h) throw input_error("compile: eta must be below h");
        c = h - eta;
        margin = eta / 2;
        seq.flow = FlowMap(sp);
    }

    std::vector<long> qpart(const CubeIndex& n) const {
        return std::vector<long>(n.begin(), n.begin() + d);
    }

    // Integer collision test: moving member mi along momentum axis `axis`
    // from its current slot to `to`.  Lattice margins keep non-equal slots
    // clear, so only exact slot containment blocks.
    bool move_clear(std::size_t mi, int axis, long to) const {
        const Member& m = members[mi];
        long from = m.cur[d + axis];
        long lo = std::min(from, to) - 2, hi = std::max(from, to) + 2; // headroom margin
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (j == mi) continue;
            const Member& o = members[j];
            if (qpart(o.cur) != qpart(m.cur)) continue;
            bool same_lateral = true;
            for (int k = 0; k < d; ++k)
                if (k != axis && o.cur[d + k] != m.cur[d + k]) same_lateral = false;
            if (!same_lateral) continue;
            if (o.cur[d + axis] >= lo && o.cur[d + axis] <= hi) return false;
        }
        return true;
    }

    void push(FlowStage st, const std::string& label) {
        seq.flow.stages.push_back(std::move(st));
        seq.annotations.push_back(label);
    }

    // Single-cube vertical translation along one momentum axis.
    void vertical_move(std::size_t mi, int axis, long to, const std::string& label) {
        Member& m = members[mi];
        long from = m.cur[d + axis];
        if (from == to) return;
        if (!move_clear(mi, axis, to))
            throw geometry_error("compile: vertical path blocked for cube " + idx_str(m.id));
        PhasePoint cur = mesh.center_of(m.cur);
        CubeIndex next = m.cur;
        next[d + axis] = to;
        PhasePoint dst = mesh.center_of(next);

        LocalizedProfile prof;
        prof.base = LocalizedProfile::Base::vertical;
        prof.coeff.assign(d, 0.0);
        prof.coeff[axis] = cur.p[axis] - dst.p[axis];
        prof.bump.space = sp;
        prof.bump.center.q = cur.q;
        prof.bump.center.p.resize(d);
        prof.bump.plateau_half.assign(2 * d, 0.0);
        prof.bump.support_half.assign(2 * d, 0.0);
        for (int k = 0; k < d; ++k) {
            prof.bump.plateau_half[k] = c;
            prof.bump.support_half[k] = c + margin;
            double lo = std::min(cur.p[k], dst.p[k]) - c;
            double hi = std::max(cur.p[k], dst.p[k]) + c;
            if (k == axis) { // headroom, see column_shift
                lo -= 4 * h;
                hi += 4 * h;
            }
            prof.bump.center.p[k] = 0.5 * (lo + hi);
            prof.bump.plateau_half[d + k] = 0.5 * (hi - lo);
            prof.bump.support_half[d + k] = prof.bump.plateau_half[d + k] + margin;
        }
        LocalizedShearStage stage;
        stage.dt = cfg.numeric_dt;
        stage.profiles.push_back(std::move(prof));
        push(std::move(stage), label);
        m.cur = next;
    }

    // Bands of every member of a column shifted by one common offset (the
    // spread and its inverse).  steps is the p_1-lattice shift.
    void column_shift(const std::vector<std::size_t>& col, const Vec& offset_steps,
                      const std::string& label) {
        bool nonzero = false;
        for (double s : offset_steps)
            if (s != 0) nonzero = true;
        if (!nonzero) return;
        PhasePoint q_center = mesh.center_of(members[col[0]].cur);
        Vec plo(d, 1e300), phi(d, -1e300);
        Vec a(d, 0.0);
        for (int k = 0; k < d; ++k) a[k] = -2 * h * offset_steps[k];
        for (std::size_t mi : col) {
            PhasePoint m = mesh.center_of(members[mi].cur);
            for (int k = 0; k < d; ++k) {
                double off = m.p[k] - a[k];
                plo[k] = std::min({plo[k], m.p[k] - c, off - c});
                phi[k] = std::max({phi[k], m.p[k] + c, off + c});
            }
        }
        // Headroom along the moving axis: corridor points then ride the exact
        // translation instead of stalling in the stiff cutoff zone, and the
        // residual junk piles far from every tube catchment.
        for (int k = 0; k < d; ++k) {
            if (offset_steps[k] == 0) continue;
            plo[k] -= 4 * h;
            phi[k] += 4 * h;
        }
        LocalizedProfile prof;
        prof.base = LocalizedProfile::Base::vertical;
        prof.coeff = a;
        prof.bump.space = sp;
        prof.bump.center.q = q_center.q;
        prof.bump.center.p.resize(d);
        prof.bump.plateau_half.assign(2 * d, 0.0);
        prof.bump.support_half.assign(2 * d, 0.0);
        for (int k = 0; k < d; ++k) {
            prof.bump.plateau_half[k] = c;
            prof.bump.support_half[k] = c + margin;
            prof.bump.center.p[k] = 0.5 * (plo[k] + phi[k]);
            prof.bump.plateau_half[d + k] = 0.5 * (phi[k] - plo[k]);
            prof.bump.support_half[d + k] = prof.bump.plateau_half[d + k] + margin;
        }
        LocalizedShearStage stage;
        stage.dt = cfg.numeric_dt;
        stage.profiles.push_back(std::move(prof));
        push(std::move(stage), label);
        for (std::size_t mi : col)
            for (int k = 0; k < d; ++k)
                members[mi].cur[d + k] += static_cast<long>(offset_steps[k]);
    }

    // Adjacent-transposition rotation between the slots of members mi and mj
    // (same column, no other member between them).
    void swap_members(std::size_t mi, std::size_t mj, const std::string& label) {
        Member& A = members[mi];
        Member& B = members[mj];
        PhasePoint a = mesh.center_of(A.cur), b = mesh.center_of(B.cur);
        double pair_gap = 2 * h * std::fabs(static_cast<double>(A.cur[d] - B.cur[d]));
        for (int k = 1; k < d; ++k)
            if (A.cur[d + k] != B.cur[d + k])
                throw geometry_error("compile: swap members differ off the stacking axis");
        PhasePoint center;
        center.q = a.q;
        center.p.resize(d);
        for (int k = 0; k < d; ++k) center.p[k] = 0.5 * (a.p[k] + b.p[k]);
        // Nearest same-column bystander distance from the rotation center.
        double D = 1e300;
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (j == mi || j == mj) continue;
            const Member& o = members[j];
            if (qpart(o.cur) != qpart(A.cur)) continue;
            PhasePoint oc = mesh.center_of(o.cur);
            D = std::min(D, norm2(vsub(oc.p, center.p)));
        }
        double w = pick_swap_w(h, eta, pair_gap, D, cfg.w_factor);
        CutoffSpec cut = swap_cutoff(h, eta, pair_gap, D, w);
        push(make_harmonic_rotation(center, w, kPi * w, cut), label);
        seq.rotation_time += kPi * w;
        std::swap(A.cur, B.cur);
    }

    // d = 1 column reshuffle: optional hoist to widely separated hover bands,
    // bubble-sort adjacent swaps, collision-free descents.
    void reshuffle_column_1d(std::vector<std::size_t> col) {
        auto slot = [&](std::size_t mi) { return members[mi].cur[d]; };
        auto goal = [&](std::size_t mi) { return members[mi].tgt[d]; };
        std::sort(col.begin(), col.end(), [&](auto a, auto b) { return slot(a) < slot(b); });
        bool done = true;
        for (std::size_t mi : col)
            if (slot(mi) != goal(mi)) done = false;
        if (done) return;

        // Congruent order-preserving case: one merged shift.
        {
            std::vector<std::size_t> by_goal = col;
            std::sort(by_goal.begin(), by_goal.end(),
                      [&](auto a, auto b) { return goal(a) < goal(b); });
            bool order_ok = by_goal == col;
            long delta = goal(col[0]) - slot(col[0]);
            bool congruent = true;
            for (std::size_t mi : col)
                if (goal(mi) - slot(mi) != delta) congruent = false;
            if (order_ok && congruent) {
                Vec steps(d, 0.0);
                steps[0] = static_cast<double>(delta);
                column_shift(col, steps, "unspread column " + idx_str(qpart(members[col[0]].cur)));
                return;
            }
        }

        const long pitch = std::max<long>(2, static_cast<long>(std::llround(cfg.hover_pitch / 2)));
        // Try swaps in place when slots already equal targets as sets.
        {
            std::vector<long> slots, goals;
            for (std::size_t mi : col) slots.push_back(slot(mi));
            for (std::size_t mi : col) goals.push_back(goal(mi));
            std::sort(goals.begin(), goals.end());
            bool same_sets = slots == goals;
            if (same_sets) {
                bool feasible = true;
                for (std::size_t i = 0; i + 1 < col.size() && feasible; ++i) {
                    double gap = 2 * h * static_cast<double>(slots[i + 1] - slots[i]);
                    double D = 1e300;
                    if (i > 0) D = std::min(D, h * static_cast<double>(slots[i + 1] + slots[i]) -
                                                   2 * h * slots[i - 1]);
                    if (i + 2 < col.size())
                        D = std::min(D, 2 * h * slots[i + 2] -
                                            h * static_cast<double>(slots[i + 1] + slots[i]));
                    auto [lo, hi] = swap_w_window(h, eta, gap, D);
                    if (hi <= 0 || lo > hi) feasible = false;
                }
                if (feasible) {
                    bubble_sort_swaps(col);
                    return;
                }
            }
        }

        // Hoist to hover bands above everything, sort there, descend.
        long top = hover_base();
        std::vector<long> hover(col.size());
        for (std::size_t i = 0; i < col.size(); ++i) hover[i] = top + pitch * static_cast<long>(i + 1);
        for (std::size_t i = col.size(); i-- > 0;)
            vertical_move(col[i], 0, hover[i], "hoist " + idx_str(members[col[i]].id));
        bubble_sort_swaps(col);
        std::vector<std::size_t> by_goal = col;
        std::sort(by_goal.begin(), by_goal.end(), [&](auto a, auto b) { return goal(a) < goal(b); });
        for (std::size_t mi : by_goal)
            vertical_move(mi, 0, goal(mi), "descend " + idx_str(members[mi].id));
    }

    // Bubble sort member contents into target order using adjacent swaps.
    void bubble_sort_swaps(std::vector<std::size_t>& col) {
        auto slot = [&](std::size_t mi) { return members[mi].cur[d]; };
        auto goal = [&](std::size_t mi) { return members[mi].tgt[d]; };
        std::sort(col.begin(), col.end(), [&](auto a, auto b) { return slot(a) < slot(b); });
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::size_t i = 0; i + 1 < col.size(); ++i) {
                if (goal(col[i]) > goal(col[i + 1])) {
                    swap_members(col[i], col[i + 1],
                                 "swap " + idx_str(members[col[i]].id) + " <-> " +
                                     idx_str(members[col[i + 1]].id));
                    std::swap(col[i], col[i + 1]);
                    changed = true;
                }
            }
        }
    }

    // d >= 2 reshuffle: hoist to isolated p_1 altitudes, then Manhattan routes
    // (staging lanes on the second momentum axis when direct paths block).
    void reshuffle_column_nd(std::vector<std::size_t> col) {
        bool done = true;
        for (std::size_t mi : col)
            if (members[mi].cur != members[mi].tgt) done = false;
        if (done) return;
        const long pitch = std::max<long>(2, static_cast<long>(std::llround(cfg.hover_pitch / 2)));
        long top = hover_base();
        std::vector<std::size_t> by_cur = col;
        std::sort(by_cur.begin(), by_cur.end(), [&](auto a, auto b) {
            return std::vector<long>(members[a].cur.begin() + d, members[a].cur.end()) >
                   std::vector<long>(members[b].cur.begin() + d, members[b].cur.end());
        });
        // Highest first; altitudes keep the current order.
        for (std::size_t i = 0; i < by_cur.size(); ++i) {
            long alt = top + pitch * static_cast<long>(by_cur.size() - i);
            vertical_move(by_cur[i], 0, alt, "hoist " + idx_str(members[by_cur[i]].id));
        }
        long lane_base = lane_base_index(col);
        std::vector<std::size_t> by_goal = col;
        std::sort(by_goal.begin(), by_goal.end(), [&](auto a, auto b) {
            return std::vector<long>(members[a].tgt.begin() + d, members[a].tgt.end()) <
                   std::vector<long>(members[b].tgt.begin() + d, members[b].tgt.end());
        });
        std::vector<std::size_t> pending = by_goal;
        int pass = 0;
        const int max_pass = static_cast<int>(col.size()) * 2 + 8;
        while (!pending.empty()) {
            if (++pass > max_pass)
                throw geometry_error("compile: staging allocator did not converge");
            std::vector<std::size_t> next;
            for (std::size_t idx = 0; idx < pending.size(); ++idx) {
                std::size_t mi = pending[idx];
                if (try_place_nd(mi, lane_base + 2 * static_cast<long>(idx)))
                    continue;
                next.push_back(mi);
            }
            if (next.size() == pending.size())
                throw geometry_error("compile: no progress placing column cubes");
            pending = std::move(next);
        }
    }

    bool try_place_nd(std::size_t mi, long lane) {
        Member& m = members[mi];
        if (m.cur == m.tgt) return true;
        // direct: lateral axes then the stacking axis
        bool direct_ok = true;
        CubeIndex probe = m.cur;
        for (int k = 1; k < d && direct_ok; ++k) {
            if (!axis_clear(probe, mi, k, m.tgt[d + k])) direct_ok = false;
            probe[d + k] = m.tgt[d + k];
        }
        if (direct_ok && axis_clear(probe, mi, 0, m.tgt[d])) {
            for (int k = 1; k < d; ++k)
                vertical_move(mi, k, m.tgt[d + k], "route " + idx_str(m.id));
            vertical_move(mi, 0, m.tgt[d], "place " + idx_str(m.id));
            return true;
        }
        // via an exclusive staging lane on axis 1
        CubeIndex s = m.cur;
        if (!axis_clear(s, mi, 1, lane)) return false;
        s[d + 1] = lane;
        if (!axis_clear(s, mi, 0, m.tgt[d])) return false;
        s[d] = m.tgt[d];
        for (int k = 2; k < d; ++k) {
            if (!axis_clear(s, mi, k, m.tgt[d + k])) return false;
            s[d + k] = m.tgt[d + k];
        }
        if (!axis_clear(s, mi, 1, m.tgt[d + 1])) return false;
        vertical_move(mi, 1, lane, "stage " + idx_str(m.id));
        vertical_move(mi, 0, m.tgt[d], "lower " + idx_str(m.id));
        for (int k = 2; k < d; ++k) vertical_move(mi, k, m.tgt[d + k], "route " + idx_str(m.id));
        vertical_move(mi, 1, m.tgt[d + 1], "place " + idx_str(m.id));
        return true;
    }

    // Like move_clear but from a hypothetical position.
    bool axis_clear(const CubeIndex& pos, std::size_t mi, int axis, long to) const {
        long lo = std::min(pos[d + axis], to) - 2, hi = std::max(pos[d + axis], to) + 2;
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (j == mi) continue;
            const Member& o = members[j];
            if (std::vector<long>(o.cur.begin(), o.cur.begin() + d) !=
                std::vector<long>(pos.begin(), pos.begin() + d))
                continue;
            bool same_lateral = true;
            for (int k = 0; k < d; ++k)
                if (k != axis && o.cur[d + k] != pos[d + k]) same_lateral = false;
            if (!same_lateral) continue;
            if (o.cur[d + axis] >= lo && o.cur[d + axis] <= hi) return false;
        }
        return true;
    }

    long hover_base() const {
        long top = -(1l << 30);
        for (const auto& m : members) {
            for (int k = 0; k < d; ++k) {
                top = std::max(top, m.cur[d + k]);
                top = std::max(top, m.tgt[d + k]);
            }
        }
        return top + 4;
    }

    long lane_base_index(const std::vector<std::size_t>& col) const {
        long right = -(1l << 30);
        for (std::size_t mi : col) {
            right = std::max(right, members[mi].cur[d + 1]);
            right = std::max(right, members[mi].tgt[d + 1]);
        }
        return right + 2;
    }
};

} // namespace

CompileResult compile_permutation(const MeshPermutation& F, const Mesh& mesh,
                                  const CompileConfig& config) {
    Builder b(mesh, config);
    const int d = b.d;

    auto check_canonical = [&](const CubeIndex& n) {
        if (static_cast<int>(n.size()) != 2 * d)
            throw input_error("compile: index length mismatch");
        if (mesh.space().torus())
            for (int k = 0; k < d; ++k)
                if (n[k] < 0 || n[k] >= mesh.q_cells_per_dim())
                    throw input_error("compile: torus q-indices must be canonical (0 <= k < pi/h)");
    };
    for (const auto& [n, l] : F.mapping()) {
        check_canonical(n);
        check_canonical(l);
        b.members.push_back(Member{n, n, l, false});
    }
    for (const auto& n : config.protected_cubes) {
        if (F.mapping().count(n)) continue;
        b.members.push_back(Member{n, n, n, true});
    }
    std::sort(b.members.begin(), b.members.end(),
              [](const Member& a, const Member& z) { return a.id < z.id; });

    CompileResult out;
    if (b.members.empty()) {
        out.seq.flow = FlowMap(mesh.space());
        out.report.ok = true;
        return out;
    }

    // Phase 1+2: spread columns and translate horizontally when any cube
    // changes column.
    bool need_horizontal = false;
    for (const auto& m : b.members)
        if (b.qpart(m.cur) != b.qpart(m.tgt)) need_horizontal = true;

    if (need_horizontal) {
        std::map<std::vector<long>, std::vector<std::size_t>> columns;
        for (std::size_t i = 0; i < b.members.size(); ++i)
            columns[b.qpart(b.members[i].cur)].push_back(i);
        // Tube disjointness needs pairwise-distinct bands; 4 lattice steps of
        // clearance keep the headroom piles of one column out of every tube
        // catchment of the next.
        const long gap = 4;
        long base = b.hover_base();
        for (auto& [qkey, col] : columns) {
            long lo = (1l << 30), hi = -(1l << 30);
            for (std::size_t mi : col) {
                lo = std::min(lo, b.members[mi].cur[d]);
                hi = std::max(hi, b.members[mi].cur[d]);
            }
            Vec steps(d, 0.0);
            steps[0] = static_cast<double>(base - lo);
            b.column_shift(col, steps, "spread column");
            base += (hi - lo) + gap;
        }
        // Horizontal tubes: all bands now globally >= 2h separated.
        LocalizedShearStage tubes;
        tubes.dt = b.cfg.numeric_dt;
        for (auto& m : b.members) {
            if (b.qpart(m.cur) == b.qpart(m.tgt)) continue;
            PhasePoint from = mesh.center_of(m.cur);
            CubeIndex moved = m.tgt;
            for (int k = 0; k < d; ++k) moved[d + k] = m.cur[d + k];
            PhasePoint to = mesh.center_of(moved);
            FlowStage single = horizontal_translate(mesh, from.q, from.p, to.q, b.eta);
            tubes.profiles.push_back(std::get<LocalizedShearStage>(single).profiles[0]);
            m.cur = moved;
        }
        if (!tubes.profiles.empty()) b.push(std::move(tubes), "translate columns");
    }

    // Phase 3: per-column reshuffle.
    {
        std::map<std::vector<long>, std::vector<std::size_t>> columns;
        for (std::size_t i = 0; i < b.members.size(); ++i)
            columns[b.qpart(b.members[i].cur)].push_back(i);
        for (auto& [qkey, col] : columns) {
            if (d == 1)
                b.reshuffle_column_1d(col);
            else
                b.reshuffle_column_nd(col);
        }
    }

    for (const auto& m : b.members)
        if (m.cur != m.tgt) throw geometry_error("compile: cube not delivered " + idx_str(m.id));

    // Safety box covering all excursions.
    double extent = 10 * mesh.p_box() + 1e3;
    for (const auto& st : b.seq.flow.stages)
        if (const auto* ls = std::get_if<LocalizedShearStage>(&st))
            for (const auto& pr : ls->profiles)
                for (int k = 0; k < d; ++k)
                    extent = std::max(extent, std::fabs(pr.bump.center.p[k]) +
                                                  pr.bump.support_half[d + k] + 10);
    b.seq.flow.safety_box = 4 * extent;

    // Verification on centers and 8 shrunken-cube boundary samples.
    out.report.stages = b.seq.stage_count();
    out.report.rotation_time = b.seq.rotation_time;
    double worst_center = 0, worst_corner = 0;
    for (const auto& m : b.members) {
        PhasePoint start = mesh.center_of(m.id);
        PhasePoint want = mesh.center_of(m.tgt);
        PhasePoint got = b.seq.flow.apply(start);
        worst_center = std::max(worst_center, sup_distance(got, want, mesh.space()));
        for (int s = 0; s < 8; ++s) {
            Vec u = halton_point(s, 2 * d);
            PhasePoint corner = start;
            for (int k = 0; k < d; ++k) {
                corner.q[k] += (2 * u[k] - 1) * 0.999 * b.c;
                corner.p[k] += (2 * u[d + k] - 1) * 0.999 * b.c;
            }
            // face sample: push one coordinate to the boundary
            int face = s % (2 * d);
            if (face < d)
                corner.q[face] = start.q[face] + (s % 2 ? 1 : -1) * 0.999 * b.c;
            else
                corner.p[face - d] = start.p[face - d] + (s % 2 ? 1 : -1) * 0.999 * b.c;
            corner.q = mesh.space().wrap_q(corner.q);
            PhasePoint img = b.seq.flow.apply(corner);
            double slack = sup_distance(img, want, mesh.space()) - b.c;
            worst_corner = std::max(worst_corner, slack);
        }
    }
    out.report.max_center_error = worst_center;
    out.report.max_corner_slack = std::max(0.0, worst_corner);
    out.report.ok = worst_center <= config.center_tol && worst_corner <= config.center_tol;
    if (!out.report.ok)
        throw geometry_error("compile: verification failed, center error " +
                             std::to_string(worst_center));
    out.seq = std::move(b.seq);
    return out;
}

CompileResult emulate_symmetry(const Mesh& mesh, const std::vector<CubeIndex>& cubes,
                               const CompileConfig& config) {
    if (!mesh.space().torus()) throw unsupported_error("emulate_symmetry: torus space required");
    if (cubes.empty()) throw input_error("emulate_symmetry: empty cube list");
    const SpaceSpec& sp = mesh.space();
    const int d = sp.d;
    const double h = mesh.h();
    const double eta = config.eta > 0 ? config.eta : h / 4.0;
    const double c = h - eta;
    const double Q = h + eta;

    std::map<std::vector<long>, std::vector<CubeIndex>> columns;
    for (const auto& n : cubes) columns[std::vector<long>(n.begin(), n.begin() + d)].push_back(n);

    CompileResult out;
    out.seq.flow = FlowMap(sp);
    for (const auto& [qkey, col] : columns) {
        PhasePoint q_center = mesh.center_of(col[0]);
        PhasePoint center;
        center.q = q_center.q;
        center.p.assign(d, 0.0);
        // Largest w keeping every cube certified and the support off the
        // neighbor columns.
        const double s_limit = kMarginUse * Q / (kR1Pad * kR2Pad);
        double qq = d * c * c;
        if (s_limit * s_limit <= qq)
            throw geometry_error("emulate_symmetry: cubes exceed the ellipse at every w");
        double reach2 = 0;
        for (const auto& n : col) {
            PhasePoint m = mesh.center_of(n);
            double r2 = 0;
            for (int k = 0; k < d; ++k) {
                double e = std::fabs(m.p[k]) + c;
                r2 += e * e;
            }
            reach2 = std::max(reach2, r2);
        }
        double w_upper = std::sqrt((s_limit * s_limit - qq) / reach2);
        double w = config.w_factor * w_upper;
        double s_max = std::sqrt(qq + w * w * reach2);
        CutoffSpec cut{kR1Pad * s_max, std::min(1.2 * kR1Pad * s_max, kMarginUse * Q)};
        if (!(cut.r2 > cut.r1))
            throw geometry_error("emulate_symmetry: column spans exceed the ellipse");
        out.seq.flow.stages.push_back(make_harmonic_rotation(center, w, kPi * w, cut));
        out.seq.annotations.push_back("symmetry rotation at column " + idx_str(qkey) +
                                      " (density-level only)");
        out.seq.rotation_time += kPi * w;
    }

    // Verify the cube images setwise: the center of each cube must land on
    // the reflected center.
    double worst = 0;
    for (const auto& n : cubes) {
        PhasePoint m = mesh.center_of(n);
        PhasePoint want = m;
        for (double& v : want.p) v = -v;
        PhasePoint got = out.seq.flow.apply(m);
        worst = std::max(worst, sup_distance(got, want, sp));
    }
    out.report.max_center_error = worst;
    out.report.stages = out.seq.stage_count();
    out.report.rotation_time = out.seq.rotation_time;
    out.report.ok = worst <= config.center_tol;
    return out;
}

std::string PrimitiveSeq::to_json() const {
    nlohmann::json j = nlohmann::json::parse(flow.to_json());
    j["annotations"] = annotations;
    j["rotation_time"] = rotation_time;
    return j.dump(2);
}

std::string CompileReport::to_json() const {
    nlohmann::json j;
    j["ok"] = ok;
    j["max_center_error"] = max_center_error;
    j["max_corner_slack"] = max_corner_slack;
    j["stages"] = stages;
    j["rotation_time"] = rotation_time;
    return j.dump(2);
}

} // namespace hamflow
