#include "hamflow/rearrange.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hamflow/errors.hpp"

namespace hamflow {

void RearrangeConfig::validate() const {
    if (!(0 < a && a < A)) throw input_error("RearrangeConfig: need 0 < a < A");
    if (N < 1) throw input_error("RearrangeConfig: need N >= 1");
    if (!(r >= 1)) throw input_error("RearrangeConfig: need r >= 1");
}

DensityField truncate_density(const DensityField& rho, double a, double A) {
    if (!(0 < a && a < A)) throw input_error("truncate: need 0 < a < A");
    return DensityField::from_callable(
        rho.space(),
        [rho, a, A](const PhasePoint& x) {
            double v = rho(x);
            double m = std::fabs(v);
            return (m > a && m < A) ? v : 0.0;
        },
        rho.support(), rho.exponent(), "truncated");
}

QuantizeResult quantize(const DensityField& rho, const RearrangeConfig& config,
                        const QuadratureSpec& quad) {
    config.validate();
    QuantizeResult out;
    const double A = config.A;
    const int N = config.N;
    for (int k = 0; k <= N; ++k) out.levels.push_back(-A + 2.0 * A * k / N);
    Vec levels = out.levels;
    out.step = DensityField::from_callable(
        rho.space(),
        [rho, levels, N](const PhasePoint& x) {
            double v = rho(x);
            if (v == 0.0) return 0.0;
            for (int k = 1; k <= N; ++k)
                if (levels[k - 1] <= v && v < levels[k]) return levels[k];
            return 0.0;
        },
        rho.support(), rho.exponent(), "quantized");
    out.error = lr_distance(out.step, rho, config.r, quad);
    return out;
}

namespace {

// Enumerate mesh cubes whose closed cube intersects the box.
std::vector<CubeIndex> cubes_touching(const Mesh& mesh, const PhaseBox& box) {
    const SpaceSpec& sp = mesh.space();
    const int d = sp.d;
    const double h = mesh.h();
    std::vector<long> lo(2 * d), hi(2 * d);
    for (int i = 0; i < 2 * d; ++i) {
        if (sp.torus() && i < d) {
            lo[i] = 0;
            hi[i] = mesh.q_cells_per_dim() - 1;
        } else {
            lo[i] = static_cast<long>(std::ceil((box.lo[i] - h - mesh.anchor()[i]) / (2 * h)));
            hi[i] = static_cast<long>(std::floor((box.hi[i] + h - mesh.anchor()[i]) / (2 * h)));
        }
    }
    std::vector<CubeIndex> out;
    CubeIndex idx(2 * d);
    std::function<void(int)> rec = [&](int axis) {
        if (axis == 2 * d) {
            if (mesh.index_in_p_range(idx)) out.push_back(idx);
            return;
        }
        for (long k = lo[axis]; k <= hi[axis]; ++k) {
            idx[axis] = k;
            rec(axis + 1);
        }
    };
    rec(0);
    return out;
}

double band_overlap_fraction(const DensityField& rho, const Mesh& mesh, const CubeIndex& n,
                             double lo, double hi, int samples_per_axis) {
    const int d = mesh.space().d;
    PhasePoint c = mesh.center_of(n);
    const double h = mesh.h();
    long in_band = 0, total = 0;
    std::vector<long> dims(2 * d, samples_per_axis);
    std::vector<long> idx(2 * d, 0);
    bool done = false;
    while (!done) {
        PhasePoint x = c;
        for (int i = 0; i < d; ++i)
            x.q[i] = c.q[i] - h + (idx[i] + 0.5) * (2 * h / samples_per_axis);
        for (int i = 0; i < d; ++i)
            x.p[i] = c.p[i] - h + (idx[d + i] + 0.5) * (2 * h / samples_per_axis);
        x.q = mesh.space().wrap_q(x.q);
        double v = rho(x);
        if (v >= lo && v < hi) ++in_band;
        ++total;
        done = true;
        for (int i = 0; i < 2 * d; ++i) {
            if (++idx[i] < dims[i]) {
                done = false;
                break;
            }
            idx[i] = 0;
        }
    }
    return static_cast<double>(in_band) / static_cast<double>(total);
}

} // namespace

LevelCover cover_level(const DensityField& rho, double lo, double hi, const Mesh& mesh,
                       double eta) {
    if (!(lo < hi)) throw input_error("cover_level: need lo < hi");
    if (lo <= 0 && 0 < hi)
        throw input_error("cover_level: band must avoid the value 0");
    if (!(eta > 0 && eta < mesh.h())) throw input_error("cover_level: need 0 < eta < h");
    for (int i = 0; i < 2 * mesh.space().d; ++i)
        if (!std::isfinite(rho.support().lo[i]) || !std::isfinite(rho.support().hi[i]))
            throw input_error("cover_level: unbounded band support");
    // Sample spacing bounded by the margin eta.
    int samples = std::max(4, static_cast<int>(std::ceil(2 * mesh.h() / eta)));
    LevelCover cover;
    for (const auto& n : cubes_touching(mesh, rho.support())) {
        double frac = band_overlap_fraction(rho, mesh, n, lo, hi, samples);
        if (frac > 0) cover.J.push_back(n);
        if (frac > 0.5) cover.J_hat.push_back(n);
    }
    std::sort(cover.J.begin(), cover.J.end());
    std::sort(cover.J_hat.begin(), cover.J_hat.end());
    return cover;
}

DensityField compose_with_permutation(const DensityField& rho, const MeshPermutation& F,
                                      const Mesh& mesh) {
    // Conservative support: original box widened by every translation the
    // inverse permutation can apply.
    PhaseBox box = rho.support();
    const int d = mesh.space().d;
    for (const auto& [n, l] : F.mapping()) {
        PhasePoint from = mesh.center_of(n);
        PhasePoint to = mesh.center_of(l);
        Vec fl = from.flat(), tl = to.flat();
        for (int i = 0; i < 2 * d; ++i) {
            double shift = fl[i] - tl[i];
            if (shift > 0)
                box.hi[i] = std::max(box.hi[i], rho.support().hi[i] + shift);
            else
                box.lo[i] = std::min(box.lo[i], rho.support().lo[i] + shift);
        }
    }
    if (mesh.space().torus())
        for (int i = 0; i < d; ++i) {
            box.lo[i] = 0;
            box.hi[i] = two_pi;
        }
    Mesh mesh_copy = mesh;
    return DensityField::from_callable(
        rho.space(),
        [rho, F, mesh_copy](const PhasePoint& x) { return rho(F.apply_or_identity(mesh_copy, x)); },
        box, rho.exponent(), "permuted");
}

RearrangeResult build_permutation(const DensityField& rho0, const DensityField& rho1,
                                  const Mesh& mesh, const RearrangeConfig& config,
                                  const QuadratureSpec& quad) {
    config.validate();
    if (rho0.space().kind != mesh.space().kind || rho0.space().d != mesh.space().d)
        throw input_error("build_permutation: density/mesh space mismatch");

    RearrangeResult out;
    for (int k = 0; k <= config.N; ++k)
        out.levels.push_back(-config.A + 2.0 * config.A * k / config.N);

    // Precondition: matching signatures on the quantization grid.
    LevelSignature s0 = signature(rho0, out.levels, quad);
    LevelSignature s1 = signature(rho1, out.levels, quad);
    double sig_tol = config.tol > 0 ? config.tol : 1e-6;
    for (std::size_t i = 0; i + 1 < out.levels.size(); ++i) {
        if (out.levels[i] <= 0 && 0 < out.levels[i + 1]) continue; // band holding 0
        if (std::fabs(s0.band_volumes[i] - s1.band_volumes[i]) >
            sig_tol + s0.band_errors[i] + s1.band_errors[i]) {
            std::ostringstream os;
            os << "densities are not signature-equivalent on band [" << out.levels[i] << ", "
               << out.levels[i + 1] << "): " << s0.band_volumes[i] << " vs "
               << s1.band_volumes[i];
            throw not_equivalent_error(os.str());
        }
    }

    DensityField t0 = truncate_density(rho0, config.a, config.A);
    DensityField t1 = truncate_density(rho1, config.a, config.A);
    double eta = config.eta > 0 ? config.eta : mesh.h() / 4;

    std::map<CubeIndex, CubeIndex> mapping;
    std::set<CubeIndex> used_sources, used_targets;
    for (std::size_t k = 0; k + 1 < out.levels.size(); ++k) {
        double lo = out.levels[k], hi = out.levels[k + 1];
        if (lo <= 0 && 0 < hi) continue;
        LevelCover c0 = cover_level(t0, lo, hi, mesh, eta);
        LevelCover c1 = cover_level(t1, lo, hi, mesh, eta);
        RearrangeLevelStats st;
        st.lo = lo;
        st.hi = hi;
        st.cover0 = c0.J.size();
        st.cover1 = c1.J.size();
        st.majority0 = c0.J_hat.size();
        st.majority1 = c1.J_hat.size();
        st.band_volume0 = s0.band_volumes[k];
        st.band_volume1 = s1.band_volumes[k];
        std::size_t m = std::min(c0.J_hat.size(), c1.J_hat.size());
        st.matched = m;
        // Pair in lexicographic order.  F must satisfy rho0 o F ~ rho1, and
        // composition pulls values back, so F translates rho1's band cubes
        // onto rho0's.
        for (std::size_t i = 0; i < m; ++i) {
            const CubeIndex& src = c1.J_hat[i];
            const CubeIndex& dst = c0.J_hat[i];
            if (!used_sources.insert(src).second || !used_targets.insert(dst).second)
                throw std::logic_error(
                    "build_permutation: majority covers of distinct bands overlap");
            mapping[src] = dst;
        }
        out.per_level.push_back(st);
    }

    // Complete the partial injection to a permutation of the involved cubes:
    // leftover targets receive the leftover sources in lexicographic order.
    std::vector<CubeIndex> missing_src, missing_dst;
    for (const auto& [src, dst] : mapping) {
        if (!used_sources.count(dst)) missing_src.push_back(dst); // target never a source
        if (!used_targets.count(src)) missing_dst.push_back(src); // source never a target
    }
    std::sort(missing_src.begin(), missing_src.end());
    std::sort(missing_dst.begin(), missing_dst.end());
    for (std::size_t i = 0; i < missing_src.size(); ++i) mapping[missing_src[i]] = missing_dst[i];

    out.F = MeshPermutation(std::move(mapping));
    DensityField composed = compose_with_permutation(rho0, out.F, mesh);
    out.achieved = lr_distance(composed, rho1, config.r, quad);
    return out;
}

std::string RearrangeResult::report_json() const {
    nlohmann::json j;
    j["lr_error"] = achieved.value;
    j["refinement_delta"] = achieved.refinement_delta;
    j["levels"] = levels;
    auto arr = nlohmann::json::array();
    for (const auto& st : per_level)
        arr.push_back({{"band", {st.lo, st.hi}},
                       {"cover", {st.cover0, st.cover1}},
                       {"majority", {st.majority0, st.majority1}},
                       {"matched", st.matched},
                       {"band_volume", {st.band_volume0, st.band_volume1}}});
    j["per_level"] = arr;
    j["support_size"] = F.support_size();
    return j.dump(2);
}

} // namespace hamflow
