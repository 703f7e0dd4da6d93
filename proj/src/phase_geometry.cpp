#include "hamflow/phase_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hamflow/errors.hpp"

namespace hamflow {

SpaceSpec::SpaceSpec(SpaceKind k, int dim) : kind(k), d(dim) {
    if (dim < 1) throw input_error("SpaceSpec: d must be >= 1");
}

double SpaceSpec::wrap_coord(double x) const {
    if (!torus()) return x;
    double r = std::fmod(x, two_pi);
    if (r < 0) r += two_pi;
    if (r >= two_pi) r = 0; // fmod rounding at the seam
    return r;
}

Vec SpaceSpec::wrap_q(Vec q) const {
    if (!torus()) return q;
    for (double& x : q) x = wrap_coord(x);
    return q;
}

Vec SpaceSpec::q_diff(const Vec& a, const Vec& b) const {
    if (a.size() != b.size()) throw input_error("q_diff: dimension mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double dq = a[i] - b[i];
        if (torus()) {
            dq = std::remainder(dq, two_pi); // shortest representative in [-pi, pi]
        }
        r[i] = dq;
    }
    return r;
}

Vec PhasePoint::flat() const {
    Vec x;
    x.reserve(q.size() + p.size());
    x.insert(x.end(), q.begin(), q.end());
    x.insert(x.end(), p.begin(), p.end());
    return x;
}

PhasePoint PhasePoint::from_flat(const Vec& x) {
    if (x.size() % 2 != 0) throw input_error("PhasePoint::from_flat: odd length");
    std::size_t d = x.size() / 2;
    return PhasePoint(Vec(x.begin(), x.begin() + d), Vec(x.begin() + d, x.end()));
}

double sup_distance(const PhasePoint& x, const PhasePoint& y, const SpaceSpec& space) {
    if (x.dim() != y.dim() || static_cast<int>(x.p.size()) != static_cast<int>(y.p.size()))
        throw input_error("sup_distance: dimension mismatch");
    if (x.dim() != space.d) throw input_error("sup_distance: point/space dimension mismatch");
    double m = 0;
    Vec dq = space.q_diff(x.q, y.q);
    for (double v : dq) m = std::max(m, std::fabs(v));
    for (std::size_t i = 0; i < x.p.size(); ++i) m = std::max(m, std::fabs(x.p[i] - y.p[i]));
    return m;
}

Mesh::Mesh(SpaceSpec space, double h, Vec anchor, double p_box)
    : space_(space), h_(h), anchor_(std::move(anchor)), p_box_(p_box) {
    if (h_ <= 0) throw input_error("Mesh: h must be positive");
    if (p_box_ <= 0) throw input_error("Mesh: p_box must be positive");
    if (static_cast<int>(anchor_.size()) != 2 * space_.d)
        throw input_error("Mesh: anchor must have length 2d");
    if (space_.torus()) {
        // 2h must divide 2pi so the cubes tile each q-circle.
        double cells = M_PI / h_;
        q_cells_ = std::llround(cells);
        if (q_cells_ < 1 || std::fabs(cells - static_cast<double>(q_cells_)) > 1e-9)
            throw input_error("Mesh: on the torus h must divide pi exactly");
    }
}

PhasePoint Mesh::center_of(const CubeIndex& n) const {
    const int d = space_.d;
    if (static_cast<int>(n.size()) != 2 * d) throw input_error("Mesh: bad index length");
    Vec q(d), p(d);
    for (int i = 0; i < d; ++i) q[i] = anchor_[i] + 2 * h_ * static_cast<double>(n[i]);
    for (int i = 0; i < d; ++i) p[i] = anchor_[d + i] + 2 * h_ * static_cast<double>(n[d + i]);
    q = space_.wrap_q(q);
    return PhasePoint(std::move(q), std::move(p));
}

CubeLocation Mesh::locate(const PhasePoint& x, double face_eps) const {
    const int d = space_.d;
    if (x.dim() != d) throw input_error("Mesh::locate: dimension mismatch");
    CubeIndex n(2 * d, 0);
    double worst = 0; // sup distance to the candidate center
    for (int i = 0; i < d; ++i) {
        double rel = x.q[i] - anchor_[i];
        if (space_.torus()) {
            rel = std::fmod(rel, two_pi);
            if (rel < 0) rel += two_pi;
        }
        double k = std::round(rel / (2 * h_));
        if (space_.torus()) {
            long ki = static_cast<long>(k);
            ki = ((ki % q_cells_) + q_cells_) % q_cells_;
            n[i] = ki;
            double dq = std::remainder(rel - 2 * h_ * k, two_pi);
            worst = std::max(worst, std::fabs(dq));
        } else {
            n[i] = static_cast<long>(k);
            worst = std::max(worst, std::fabs(rel - 2 * h_ * k));
        }
    }
    for (int i = 0; i < d; ++i) {
        double rel = x.p[i] - anchor_[d + i];
        double k = std::round(rel / (2 * h_));
        n[d + i] = static_cast<long>(k);
        worst = std::max(worst, std::fabs(rel - 2 * h_ * k));
    }
    if (!index_in_p_range(n))
        return CubeLocation{CubeLocation::Kind::outside, std::move(n)};
    if (worst > h_ - face_eps)
        return CubeLocation{CubeLocation::Kind::boundary, std::move(n)};
    return CubeLocation{CubeLocation::Kind::interior, std::move(n)};
}

CubeLocation Mesh::cube_index_of(const PhasePoint& x) const {
    CubeLocation loc = locate(x);
    if (loc.kind == CubeLocation::Kind::outside)
        throw range_error("cube_index_of: point outside the covered p-region");
    return loc;
}

bool Mesh::index_in_p_range(const CubeIndex& n) const {
    const int d = space_.d;
    for (int i = 0; i < d; ++i) {
        double pc = anchor_[d + i] + 2 * h_ * static_cast<double>(n[d + i]);
        if (std::fabs(pc) > p_box_ + h_) return false;
    }
    return true;
}

MeshPermutation::MeshPermutation(std::map<CubeIndex, CubeIndex> mapping) : map_(std::move(mapping)) {
    // Drop fixed cubes, then check bijectivity on the support.
    for (auto it = map_.begin(); it != map_.end();) {
        if (it->first == it->second)
            it = map_.erase(it);
        else
            ++it;
    }
    std::map<CubeIndex, int> image_count;
    for (const auto& [n, l] : map_) image_count[l]++;
    for (const auto& [l, c] : image_count)
        if (c != 1) throw input_error("MeshPermutation: mapping is not injective");
    // Keys and images must coincide as sets (a finite bijection of cubes).
    for (const auto& [l, c] : image_count)
        if (map_.find(l) == map_.end())
            throw input_error("MeshPermutation: image cube missing from support");
}

CubeIndex MeshPermutation::image_of(const CubeIndex& n) const {
    auto it = map_.find(n);
    return it == map_.end() ? n : it->second;
}

MeshPermutation MeshPermutation::inverse() const {
    std::map<CubeIndex, CubeIndex> inv;
    for (const auto& [n, l] : map_) inv[l] = n;
    return MeshPermutation(std::move(inv));
}

PhasePoint MeshPermutation::apply(const Mesh& mesh, const PhasePoint& x) const {
    CubeLocation loc = mesh.cube_index_of(x);
    if (loc.kind == CubeLocation::Kind::boundary)
        throw boundary_error("apply_permutation: point on a closed-cube face");
    auto it = map_.find(loc.index);
    if (it == map_.end()) return PhasePoint(mesh.space().wrap_q(x.q), x.p);
    PhasePoint from = mesh.center_of(loc.index);
    PhasePoint to = mesh.center_of(it->second);
    Vec q(x.q.size()), p(x.p.size());
    Vec dq = mesh.space().q_diff(x.q, from.q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = to.q[i] + dq[i];
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = to.p[i] + (x.p[i] - from.p[i]);
    return PhasePoint(mesh.space().wrap_q(std::move(q)), std::move(p));
}

PhasePoint MeshPermutation::apply_or_identity(const Mesh& mesh, const PhasePoint& x) const {
    CubeLocation loc = mesh.locate(x);
    if (loc.kind != CubeLocation::Kind::interior) return x;
    auto it = map_.find(loc.index);
    if (it == map_.end()) return x;
    return apply(mesh, x);
}

PhasePoint apply_permutation(const MeshPermutation& F, const Mesh& mesh, const PhasePoint& x) {
    return F.apply(mesh, x);
}

std::string permutation_to_json(const Mesh& mesh, const MeshPermutation& F) {
    nlohmann::json j;
    j["h"] = mesh.h();
    j["anchor"] = mesh.anchor();
    j["kind"] = mesh.space().kind_name();
    j["d"] = mesh.space().d;
    j["p_box"] = mesh.p_box();
    auto mapping = nlohmann::json::array();
    for (const auto& [n, l] : F.mapping()) mapping.push_back({n, l});
    j["mapping"] = mapping;
    return j.dump(2);
}

std::pair<Mesh, MeshPermutation> permutation_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SpaceKind kind = j.at("kind").get<std::string>() == "torus" ? SpaceKind::torus
                                                                : SpaceKind::euclidean;
    SpaceSpec space(kind, j.at("d").get<int>());
    Mesh mesh(space, j.at("h").get<double>(), j.at("anchor").get<Vec>(),
              j.at("p_box").get<double>());
    std::map<CubeIndex, CubeIndex> mapping;
    for (const auto& pair : j.at("mapping")) {
        if (!pair.is_array() || pair.size() != 2)
            throw input_error("permutation json: mapping entries must be [n, l]");
        mapping[pair[0].get<CubeIndex>()] = pair[1].get<CubeIndex>();
    }
    return {mesh, MeshPermutation(std::move(mapping))};
}

} // namespace hamflow
