#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hamflow/linalg.hpp"

namespace hamflow {

constexpr double two_pi = 6.283185307179586476925286766559;

enum class SpaceKind { euclidean, torus };

// Configuration manifold: R^d or T^d = R^d / 2pi Z^d.  Phase space is T*M,
// dimension 2d.
struct SpaceSpec {
    SpaceKind kind = SpaceKind::euclidean;
    int d = 1;

    SpaceSpec() = default;
    SpaceSpec(SpaceKind k, int dim);

    bool torus() const { return kind == SpaceKind::torus; }

    // Canonical representative in [0, 2pi) per coordinate (identity on R^d).
    double wrap_coord(double x) const;
    Vec wrap_q(Vec q) const;

    // Shortest wrapped representative of a - b per q-coordinate; plain
    // difference on R^d.
    Vec q_diff(const Vec& a, const Vec& b) const;

    std::string kind_name() const { return torus() ? "torus" : "euclidean"; }
};

struct PhasePoint {
    Vec q, p;

    PhasePoint() = default;
    PhasePoint(Vec q_, Vec p_) : q(std::move(q_)), p(std::move(p_)) {}

    int dim() const { return static_cast<int>(q.size()); }

    // Flattened (q_1..q_d, p_1..p_d).
    Vec flat() const;
    static PhasePoint from_flat(const Vec& x);
};

// Sup-norm distance on T*M; torus q-differences use the shortest wrapped
// representative.
double sup_distance(const PhasePoint& x, const PhasePoint& y, const SpaceSpec& space);

// Open sup-norm cube {y : ||y - center|| < radius}.
struct Cube {
    PhasePoint center;
    double radius = 0;

    bool contains_open(const PhasePoint& x, const SpaceSpec& space) const {
        return sup_distance(x, center, space) < radius;
    }
    bool contains_closed(const PhasePoint& x, const SpaceSpec& space) const {
        return sup_distance(x, center, space) <= radius;
    }
    double volume(int d) const {
        double v = 1;
        for (int i = 0; i < 2 * d; ++i) v *= 2 * radius;
        return v;
    }
};

// Integer lattice coordinates of a cube center, length 2d, ordered q then p.
using CubeIndex = std::vector<long>;

struct CubeLocation {
    enum class Kind { interior, boundary, outside } kind;
    CubeIndex index; // valid for interior and boundary
};

// Regular mesh of size h: centers = anchor + 2h * Z^{2d}, truncated in p to
// |p_i| <= p_box.  On the torus the q-coordinates must tile: pi/h integral.
class Mesh {
public:
    Mesh(SpaceSpec space, double h, Vec anchor, double p_box);

    const SpaceSpec& space() const { return space_; }
    double h() const { return h_; }
    const Vec& anchor() const { return anchor_; }
    double p_box() const { return p_box_; }
    long q_cells_per_dim() const { return q_cells_; } // torus only

    PhasePoint center_of(const CubeIndex& n) const;
    Cube cube_of(const CubeIndex& n) const { return Cube{center_of(n), h_}; }

    // Locate the open cube containing x; boundary flag on closed-cube faces
    // (tolerance face_eps in sup distance); range error outside the covered
    // p-region.
    CubeLocation locate(const PhasePoint& x, double face_eps = 1e-12) const;

    // Convenience wrapper that throws range_error when outside.
    CubeLocation cube_index_of(const PhasePoint& x) const;

    bool index_in_p_range(const CubeIndex& n) const;

private:
    SpaceSpec space_;
    double h_;
    Vec anchor_; // length 2d
    double p_box_;
    long q_cells_ = 0;
};

// Finite bijection of mesh cubes acting by translations: x -> x + m_l - m_n
// on each moved open cube, identity elsewhere.
class MeshPermutation {
public:
    MeshPermutation() = default;
    explicit MeshPermutation(std::map<CubeIndex, CubeIndex> mapping);

    const std::map<CubeIndex, CubeIndex>& mapping() const { return map_; }
    bool is_identity() const { return map_.empty(); }
    std::size_t support_size() const { return map_.size(); }

    CubeIndex image_of(const CubeIndex& n) const;
    MeshPermutation inverse() const;

    // Point action.  Throws boundary_error on faces.
    PhasePoint apply(const Mesh& mesh, const PhasePoint& x) const;

    // Non-throwing variant: boundary and unmoved points map to themselves.
    PhasePoint apply_or_identity(const Mesh& mesh, const PhasePoint& x) const;

private:
    std::map<CubeIndex, CubeIndex> map_;
};

PhasePoint apply_permutation(const MeshPermutation& F, const Mesh& mesh, const PhasePoint& x);

// JSON round trip: one document holds the mesh and the mapping,
// {h, anchor, kind, d, p_box, mapping: [[n, l], ...]} with indices as integer
// lattice tuples in lexicographic order.
std::string permutation_to_json(const Mesh& mesh, const MeshPermutation& F);
std::pair<Mesh, MeshPermutation> permutation_from_json(const std::string& text);

} // namespace hamflow
