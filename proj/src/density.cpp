#include "hamflow/density.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hamflow/errors.hpp"

namespace hamflow {

namespace {

bool in_box(const PhaseBox& b, const Vec& flat, const SpaceSpec& space) {
    const int d = space.d;
    for (int i = 0; i < 2 * d; ++i) {
        double v = flat[i];
        if (space.torus() && i < d) continue; // torus q-range is the full circle
        if (v < b.lo[i] || v > b.hi[i]) return false;
    }
    return true;
}

// Cells per axis: the resolution fixes the cell size on the shortest axis so
// elongated boxes stay resolved instead of diluting a fixed per-axis count.
std::vector<long> quad_dims(const PhaseBox& box, int res) {
    const int n = box.dim2();
    double min_ext = 1e300;
    for (int i = 0; i < n; ++i) min_ext = std::min(min_ext, box.hi[i] - box.lo[i]);
    if (!(min_ext > 0)) throw input_error("quadrature: degenerate box");
    double cell = min_ext / res;
    std::vector<long> dims(n);
    for (int i = 0; i < n; ++i) {
        long k = static_cast<long>(std::ceil((box.hi[i] - box.lo[i]) / cell - 1e-9));
        dims[i] = std::min<long>(std::max<long>(4, k), 64l * res);
    }
    return dims;
}

// Odometer over a multi-index.
struct Odometer {
    std::vector<long> idx, dims;
    bool done = false;
    explicit Odometer(std::vector<long> d) : idx(d.size(), 0), dims(std::move(d)) {
        for (long n : dims)
            if (n <= 0) done = true;
    }
    void next() {
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (++idx[i] < dims[i]) return;
            idx[i] = 0;
        }
        done = true;
    }
};

} // namespace

long GridDensity::cell_count() const {
    long n = 1;
    for (long k : dims) n *= k;
    return n;
}

double GridDensity::value_at(const Vec& flat) const {
    long index = 0, stride = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        double w = (box.hi[i] - box.lo[i]) / static_cast<double>(dims[i]);
        long k = static_cast<long>(std::floor((flat[i] - box.lo[i]) / w));
        if (k < 0 || k >= dims[i]) return 0.0;
        index += k * stride;
        stride *= dims[i];
    }
    return values[static_cast<std::size_t>(index)];
}

std::string grid_density_header_json(const GridDensity& g, const SpaceSpec& space) {
    nlohmann::json j;
    j["kind"] = space.kind_name();
    j["d"] = space.d;
    j["lo"] = g.box.lo;
    j["hi"] = g.box.hi;
    j["dims"] = g.dims;
    j["r"] = g.r;
    return j.dump(2);
}

std::string grid_density_values_csv(const GridDensity& g) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < g.values.size(); ++i) os << i << "," << g.values[i] << "\n";
    return os.str();
}

GridDensity grid_density_load(const std::string& header_json, const std::string& values_csv) {
    nlohmann::json j = nlohmann::json::parse(header_json);
    GridDensity g;
    g.box.lo = j.at("lo").get<Vec>();
    g.box.hi = j.at("hi").get<Vec>();
    g.dims = j.at("dims").get<std::vector<long>>();
    g.r = j.value("r", 1.0);
    g.values.assign(static_cast<std::size_t>(g.cell_count()), 0.0);
    std::istringstream is(values_csv);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw input_error("grid csv: rows are index,value");
        long idx = std::stol(line.substr(0, comma));
        double v = std::stod(line.substr(comma + 1));
        if (idx < 0 || idx >= g.cell_count()) throw input_error("grid csv: index out of range");
        g.values[static_cast<std::size_t>(idx)] = v;
    }
    return g;
}

DensityField DensityField::from_expr(const SpaceSpec& space, HamExpr e, PhaseBox support, double r) {
    if (e.dim() != space.d) throw input_error("DensityField: expression dimension mismatch");
    if (space.torus() && e.has_q_monomials())
        throw input_error("DensityField: q-monomials are ill-defined on the torus");
    DensityField f;
    f.space_ = space;
    f.support_ = std::move(support);
    f.r_ = r;
    f.kind_ = "expr";
    f.eval_ = [expr = std::move(e)](const PhasePoint& x) { return expr.eval(x.q, x.p); };
    return f;
}

DensityField DensityField::from_cubes(const SpaceSpec& space,
                                      std::vector<std::pair<Cube, double>> cubes, double r) {
    DensityField f;
    f.space_ = space;
    f.r_ = r;
    f.kind_ = "cubes";
    const int d = space.d;
    PhaseBox box;
    box.lo.assign(2 * d, 0);
    box.hi.assign(2 * d, 0);
    bool first = true;
    for (const auto& [c, w] : cubes) {
        (void)w;
        Vec flat = c.center.flat();
        for (int i = 0; i < 2 * d; ++i) {
            double lo = flat[i] - c.radius, hi = flat[i] + c.radius;
            if (first) {
                box.lo[i] = lo;
                box.hi[i] = hi;
            } else {
                box.lo[i] = std::min(box.lo[i], lo);
                box.hi[i] = std::max(box.hi[i], hi);
            }
        }
        first = false;
    }
    if (first) throw input_error("DensityField::from_cubes: empty cube list");
    f.support_ = box;
    f.eval_ = [space, cubes = std::move(cubes)](const PhasePoint& x) {
        double s = 0;
        for (const auto& [c, w] : cubes)
            if (c.contains_open(x, space)) s += w;
        return s;
    };
    f.clip_to_support_ = false; // cubes already vanish outside
    return f;
}

DensityField DensityField::from_grid(const SpaceSpec& space, GridDensity grid) {
    if (static_cast<int>(grid.dims.size()) != 2 * space.d)
        throw input_error("DensityField::from_grid: dims length mismatch");
    DensityField f;
    f.space_ = space;
    f.support_ = grid.box;
    f.r_ = grid.r;
    f.kind_ = "grid";
    f.eval_ = [g = std::move(grid)](const PhasePoint& x) { return g.value_at(x.flat()); };
    f.clip_to_support_ = false;
    return f;
}

DensityField DensityField::from_callable(const SpaceSpec& space,
                                         std::function<double(const PhasePoint&)> fn,
                                         PhaseBox support, double r, std::string kind) {
    DensityField f;
    f.space_ = space;
    f.support_ = std::move(support);
    f.r_ = r;
    f.kind_ = std::move(kind);
    f.eval_ = std::move(fn);
    return f;
}

double DensityField::operator()(const PhasePoint& x) const {
    if (!eval_) return 0.0;
    if (clip_to_support_ && !in_box(support_, x.flat(), space_)) return 0.0;
    return eval_(x);
}

DensityField pushforward(const DensityField& rho0, const FlowMap& flow) {
    if (rho0.space().d != flow.space.d || rho0.space().kind != flow.space.kind)
        throw input_error("pushforward: density and flow on different spaces");
    const SpaceSpec space = rho0.space();
    const int d = space.d;

    // Transport the support conservatively: image of the support box corners
    // and face samples through the inverse flow, padded.
    FlowMap inv = flow.inverse();
    PhaseBox sup = rho0.support();
    PhaseBox out;
    out.lo.assign(2 * d, 0);
    out.hi.assign(2 * d, 0);
    bool first = true;
    auto absorb = [&](const PhasePoint& y) {
        Vec flat = y.flat();
        for (int i = 0; i < 2 * d; ++i) {
            if (first) {
                out.lo[i] = flat[i];
                out.hi[i] = flat[i];
            } else {
                out.lo[i] = std::min(out.lo[i], flat[i]);
                out.hi[i] = std::max(out.hi[i], flat[i]);
            }
        }
        first = false;
    };
    const int face_samples = 40;
    for (long s = 0; s < (1l << (2 * d)); ++s) {
        Vec u(2 * d);
        for (int i = 0; i < 2 * d; ++i) u[i] = (s >> i) & 1 ? 1.0 : 0.0;
        absorb(inv.apply(PhasePoint::from_flat(sup.sample(u))));
    }
    for (int face = 0; face < 2 * d; ++face)
        for (int side = 0; side < 2; ++side)
            for (int k = 0; k < face_samples; ++k) {
                Vec u = halton_point(k, 2 * d);
                u[face] = side;
                absorb(inv.apply(PhasePoint::from_flat(sup.sample(u))));
            }
    // Interior cloud: boundary samples alone can sit on fixed sets of a
    // piecewise-localized flow (mesh skeletons), missing the bulk transport.
    for (int k = 0; k < 100 * d; ++k)
        absorb(inv.apply(PhasePoint::from_flat(sup.sample(halton_point(k, 2 * d)))));
    for (int i = 0; i < 2 * d; ++i) {
        double pad = 0.05 * (out.hi[i] - out.lo[i]) + 1e-9;
        out.lo[i] -= pad;
        out.hi[i] += pad;
        if (space.torus() && i < d) {
            out.lo[i] = 0;
            out.hi[i] = two_pi;
        }
    }

    return DensityField::from_callable(
        space, [rho0, flow](const PhasePoint& x) { return rho0(flow.apply(x)); }, out,
        rho0.exponent(), "composed");
}

PhaseBox common_box(const DensityField& a, const DensityField& b) {
    const int n = a.support().dim2();
    if (b.support().dim2() != n) throw input_error("common_box: dimension mismatch");
    PhaseBox box;
    box.lo.assign(n, 0);
    box.hi.assign(n, 0);
    const int d = a.space().d;
    for (int i = 0; i < n; ++i) {
        box.lo[i] = std::min(a.support().lo[i], b.support().lo[i]);
        box.hi[i] = std::max(a.support().hi[i], b.support().hi[i]);
        if (a.space().torus() && i < d) {
            box.lo[i] = 0;
            box.hi[i] = two_pi;
        }
        if (!(box.hi[i] > box.lo[i] - 1e-300))
            throw input_error("common_box: degenerate support");
        if (!std::isfinite(box.lo[i]) || !std::isfinite(box.hi[i]))
            throw input_error("common_box: unbounded support");
    }
    return box;
}

namespace {

// One cell of the midpoint rule with bisection where the integrand jumps
// across the cell (indicator edges, junk slivers); smooth cells stay cheap.
void lr_cell(const DensityField& a, const DensityField* b, double r, const Vec& lo,
             const Vec& width, int depth, double& acc, double& comp) {
    const int n = static_cast<int>(lo.size());
    double cellvol = 1;
    for (int i = 0; i < n; ++i) cellvol *= width[i];
    Vec mid(n);
    for (int i = 0; i < n; ++i) mid[i] = lo[i] + 0.5 * width[i];
    auto integrand = [&](const Vec& flat) {
        PhasePoint x = PhasePoint::from_flat(flat);
        return std::fabs(a(x) - (b ? (*b)(x) : 0.0));
    };
    double vmid = integrand(mid);
    double vmin = vmid, vmax = vmid;
    if (depth > 0) {
        for (long s = 0; s < (1l << n); ++s) {
            Vec corner(n);
            for (int i = 0; i < n; ++i)
                corner[i] = lo[i] + ((s >> i) & 1 ? width[i] * (1 - 1e-9) : width[i] * 1e-9);
            double v = integrand(corner);
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }
    if (depth <= 0 || vmax - vmin <= 0.3 * (vmax + vmin) + 1e-12) {
        double term = std::pow(vmid, r) * cellvol;
        double y = term - comp;
        double t = acc + y;
        comp = (t - acc) - y;
        acc = t;
        return;
    }
    Vec half(n);
    for (int i = 0; i < n; ++i) half[i] = width[i] / 2;
    for (long s = 0; s < (1l << n); ++s) {
        Vec sublo(n);
        for (int i = 0; i < n; ++i) sublo[i] = lo[i] + ((s >> i) & 1 ? half[i] : 0.0);
        lr_cell(a, b, r, sublo, half, depth - 1, acc, comp);
    }
}

double lr_pass(const DensityField& a, const DensityField* b, double r, const PhaseBox& box,
               int res, int refine) {
    const int n = box.dim2();
    std::vector<long> dims = quad_dims(box, res);
    Vec width(n);
    for (int i = 0; i < n; ++i) width[i] = (box.hi[i] - box.lo[i]) / dims[i];
    double acc = 0, comp = 0; // Kahan
    for (Odometer od(dims); !od.done; od.next()) {
        Vec lo(n);
        for (int i = 0; i < n; ++i) lo[i] = box.lo[i] + od.idx[i] * width[i];
        lr_cell(a, b, r, lo, width, refine, acc, comp);
    }
    return std::pow(acc, 1.0 / r);
}

double lr_monte_carlo(const DensityField& a, const DensityField* b, double r, const PhaseBox& box,
                      long samples, std::uint64_t seed) {
    Rng rng(seed);
    const int n = box.dim2();
    double acc = 0;
    for (long k = 0; k < samples; ++k) {
        Vec u(n);
        for (int i = 0; i < n; ++i) u[i] = rng.uniform();
        PhasePoint x = PhasePoint::from_flat(box.sample(u));
        double va = a(x), vb = b ? (*b)(x) : 0.0;
        acc += std::pow(std::fabs(va - vb), r);
    }
    return std::pow(acc / samples * box.volume(), 1.0 / r);
}

} // namespace

LrResult lr_distance(const DensityField& a, const DensityField& b, double r,
                     const QuadratureSpec& spec) {
    if (r < 1) throw input_error("lr_distance: r must be >= 1");
    PhaseBox box = common_box(a, b);
    LrResult out;
    if (spec.mc_samples > 0) {
        out.value = lr_monte_carlo(a, &b, r, box, spec.mc_samples, spec.seed);
        out.refinement_delta =
            std::fabs(out.value - lr_monte_carlo(a, &b, r, box, spec.mc_samples / 2 + 1,
                                                 spec.seed + 1));
        return out;
    }
    out.value = lr_pass(a, &b, r, box, spec.resolution, spec.refine_levels);
    int coarse = std::max(2, spec.resolution / 2);
    out.refinement_delta =
        std::fabs(out.value - lr_pass(a, &b, r, box, coarse, spec.refine_levels));
    return out;
}

LrResult lr_norm(const DensityField& a, double r, const QuadratureSpec& spec) {
    if (r < 1) throw input_error("lr_norm: r must be >= 1");
    PhaseBox box = a.support();
    LrResult out;
    if (spec.mc_samples > 0) {
        out.value = lr_monte_carlo(a, nullptr, r, box, spec.mc_samples, spec.seed);
        return out;
    }
    out.value = lr_pass(a, nullptr, r, box, spec.resolution, spec.refine_levels);
    int coarse = std::max(2, spec.resolution / 2);
    out.refinement_delta =
        std::fabs(out.value - lr_pass(a, nullptr, r, box, coarse, spec.refine_levels));
    return out;
}

namespace {

// Recursive cell classifier for band volumes.  Returns (volume, error).
void band_cell(const DensityField& rho, const Vec& lo, const Vec& width, int depth,
               double mu, double nu, double& vol, double& err) {
    const int n = static_cast<int>(lo.size());
    double cellvol = 1;
    for (int i = 0; i < n; ++i) cellvol *= width[i];
    Vec mid(n);
    for (int i = 0; i < n; ++i) mid[i] = lo[i] + 0.5 * width[i];
    auto inside = [&](const Vec& flat) {
        double v = rho(PhasePoint::from_flat(flat));
        return v > mu && v < nu;
    };
    bool mid_in = inside(mid);
    bool uniform = true;
    for (long s = 0; s < (1l << n) && uniform; ++s) {
        Vec corner(n);
        for (int i = 0; i < n; ++i)
            corner[i] = lo[i] + ((s >> i) & 1 ? width[i] * (1 - 1e-9) : width[i] * 1e-9);
        if (inside(corner) != mid_in) uniform = false;
    }
    if (uniform) {
        if (mid_in) vol += cellvol;
        return;
    }
    if (depth <= 0) {
        vol += 0.5 * cellvol;
        err += 0.5 * cellvol;
        return;
    }
    Vec half(n);
    for (int i = 0; i < n; ++i) half[i] = width[i] / 2;
    for (long s = 0; s < (1l << n); ++s) {
        Vec sublo(n);
        for (int i = 0; i < n; ++i) sublo[i] = lo[i] + ((s >> i) & 1 ? half[i] : 0.0);
        band_cell(rho, sublo, half, depth - 1, mu, nu, vol, err);
    }
}

} // namespace

VolumeResult level_set_volume(const DensityField& rho, double mu, double nu,
                              const QuadratureSpec& spec) {
    if (!(mu < nu)) throw input_error("level_set_volume: need mu < nu");
    PhaseBox box = rho.support();
    const int n = box.dim2();
    const int d = rho.space().d;
    if (rho.space().torus())
        for (int i = 0; i < d; ++i) {
            box.lo[i] = 0;
            box.hi[i] = two_pi;
        }
    // Counting runs over the declared support region; when 0 sits inside the
    // band the complement would have infinite volume on R^d, so callers
    // compare like with like over matching boxes.
    std::vector<long> dims = quad_dims(box, spec.resolution);
    Vec width(n);
    for (int i = 0; i < n; ++i) width[i] = (box.hi[i] - box.lo[i]) / dims[i];
    VolumeResult out;
    for (Odometer od(dims); !od.done; od.next()) {
        Vec lo(n);
        for (int i = 0; i < n; ++i) lo[i] = box.lo[i] + od.idx[i] * width[i];
        band_cell(rho, lo, width, spec.refine_levels, mu, nu, out.volume, out.error_bound);
    }
    return out;
}

LevelSignature signature(const DensityField& rho, const Vec& levels, const QuadratureSpec& spec) {
    if (levels.size() < 2) throw input_error("signature: need at least two levels");
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i - 1] < levels[i])) throw input_error("signature: levels must be increasing");
    LevelSignature sig;
    sig.levels = levels;
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
        VolumeResult v = level_set_volume(rho, levels[i], levels[i + 1], spec);
        sig.band_volumes.push_back(v.volume);
        sig.band_errors.push_back(v.error_bound);
    }
    return sig;
}

bool signatures_match(const LevelSignature& a, const LevelSignature& b, double tol) {
    if (a.levels.size() != b.levels.size()) throw input_error("signatures_match: grid mismatch");
    for (std::size_t i = 0; i < a.levels.size(); ++i)
        if (std::fabs(a.levels[i] - b.levels[i]) > 1e-12)
            throw input_error("signatures_match: grid mismatch");
    for (std::size_t i = 0; i < a.band_volumes.size(); ++i)
        if (std::fabs(a.band_volumes[i] - b.band_volumes[i]) > tol) return false;
    return true;
}

std::string LevelSignature::to_json() const {
    nlohmann::json j;
    j["levels"] = levels;
    j["band_volumes"] = band_volumes;
    j["band_errors"] = band_errors;
    return j.dump(2);
}

} // namespace hamflow
