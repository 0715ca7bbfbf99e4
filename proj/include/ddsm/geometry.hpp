#pragma once

// Cartesian grids on a box (default (-1,1)^d), node-indexed scalar fields,
// ordered boundary traces, and random level-set inclusion sets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ddsm/errors.hpp"
#include "ddsm/rng.hpp"

namespace ddsm {

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);
inline constexpr double pi = 3.14159265358979323846;

enum class Scenario { circles2d, ellipses2d, ellipsoids3d };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::circles2d: return "circles2d";
        case Scenario::ellipses2d: return "ellipses2d";
        case Scenario::ellipsoids3d: return "ellipsoids3d";
    }
    return "?";
}

inline Scenario scenario_from_string(const std::string& name) {
    if (name == "circles2d") return Scenario::circles2d;
    if (name == "ellipses2d") return Scenario::ellipses2d;
    if (name == "ellipsoids3d") return Scenario::ellipsoids3d;
    throw parameter_error("unknown scenario: " + name);
}

struct BoundaryNode {
    std::size_t node = 0;             // flat node index
    std::array<double, 3> normal{};   // unit outward normal
    double theta = 0.0;               // polar angle of (x1,x2), 2D grids
    int face = -1;                    // primary face id (3D): 0..5 = x1-,x1+,x2-,x2+,x3-,x3+
    double weight = 0.0;              // surface quadrature weight (trapezoid)
    double arclen = 0.0;              // perimeter parameter from the start node (2D)
};

// Tensor grid over [lo,hi]^dim. Boundary nodes are listed once each; in 2D the
// list walks the perimeter exactly once, counter-clockwise from (lo,lo).
struct Grid {
    int dim = 2;
    std::array<std::size_t, 3> counts{1, 1, 1};
    double lo = -1.0, hi = 1.0;
    std::array<double, 3> h{0, 0, 0};
    std::vector<BoundaryNode> boundary;
    std::vector<std::size_t> node_to_boundary;  // npos for interior nodes
    double perimeter = 0.0;                     // 2D boundary length

    std::size_t node_count() const { return counts[0] * counts[1] * counts[2]; }
    std::size_t boundary_count() const { return boundary.size(); }

    std::size_t index(std::size_t i1, std::size_t i2, std::size_t i3 = 0) const {
        return i1 + counts[0] * (i2 + counts[1] * i3);
    }
    std::array<std::size_t, 3> multi_index(std::size_t flat) const {
        std::array<std::size_t, 3> m{};
        m[0] = flat % counts[0];
        flat /= counts[0];
        m[1] = flat % counts[1];
        m[2] = flat / counts[1];
        return m;
    }
    double coord(int axis, std::size_t i) const { return lo + h[axis] * static_cast<double>(i); }
    std::array<double, 3> coords(std::size_t flat) const {
        const auto m = multi_index(flat);
        std::array<double, 3> x{0, 0, 0};
        for (int a = 0; a < dim; ++a) x[a] = coord(a, m[a]);
        return x;
    }
    bool is_boundary(std::size_t flat) const { return node_to_boundary[flat] != npos; }
};

using GridPtr = std::shared_ptr<const Grid>;

// One real value per grid node.
struct ScalarField {
    GridPtr grid;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(GridPtr g, double fill = 0.0)
        : grid(std::move(g)), v(grid->node_count(), fill) {}

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }
};

// One real value per ordered boundary node.
struct BoundaryTrace {
    GridPtr grid;
    std::vector<double> v;

    BoundaryTrace() = default;
    explicit BoundaryTrace(GridPtr g, double fill = 0.0)
        : grid(std::move(g)), v(grid->boundary_count(), fill) {}

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }
};

namespace detail {

inline void build_boundary_2d(Grid& g) {
    const std::size_t n1 = g.counts[0], n2 = g.counts[1];
    const double h1 = g.h[0], h2 = g.h[1];
    std::vector<std::array<std::size_t, 2>> walk;
    walk.reserve(2 * (n1 + n2) - 4);
    for (std::size_t i = 0; i < n1; ++i) walk.push_back({i, 0});
    for (std::size_t j = 1; j < n2; ++j) walk.push_back({n1 - 1, j});
    for (std::size_t i = n1 - 1; i-- > 0;) walk.push_back({i, n2 - 1});
    for (std::size_t j = n2 - 1; j-- > 1;) walk.push_back({0, j});

    const std::size_t nb = walk.size();
    auto seg_len = [&](std::size_t k) {
        // length of the segment from walk[k] to walk[k+1]
        const auto& a = walk[k];
        const auto& b = walk[(k + 1) % nb];
        return a[0] == b[0] ? h2 : h1;
    };

    g.boundary.resize(nb);
    double arc = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
        const auto [i, j] = walk[k];
        BoundaryNode bn;
        bn.node = g.index(i, j);
        double nx = 0.0, ny = 0.0;
        if (i == 0) nx -= 1.0;
        if (i == n1 - 1) nx += 1.0;
        if (j == 0) ny -= 1.0;
        if (j == n2 - 1) ny += 1.0;
        const double len = std::hypot(nx, ny);
        bn.normal = {nx / len, ny / len, 0.0};
        bn.theta = std::atan2(g.coord(1, j), g.coord(0, i));
        const double prev = seg_len((k + nb - 1) % nb);
        const double next = seg_len(k);
        bn.weight = 0.5 * (prev + next);
        bn.arclen = arc;
        arc += next;
        g.boundary[k] = bn;
        g.node_to_boundary[bn.node] = k;
    }
    g.perimeter = arc;
}

inline void build_boundary_3d(Grid& g) {
    const auto& n = g.counts;
    for (std::size_t i3 = 0; i3 < n[2]; ++i3)
        for (std::size_t i2 = 0; i2 < n[1]; ++i2)
            for (std::size_t i1 = 0; i1 < n[0]; ++i1) {
                const std::array<std::size_t, 3> idx{i1, i2, i3};
                bool on = false;
                for (int a = 0; a < 3; ++a) on |= (idx[a] == 0 || idx[a] == n[a] - 1);
                if (!on) continue;
                BoundaryNode bn;
                bn.node = g.index(i1, i2, i3);
                std::array<double, 3> nrm{0, 0, 0};
                double weight = 0.0;
                for (int a = 0; a < 3; ++a) {
                    for (int side = 0; side < 2; ++side) {
                        if (idx[a] != (side == 0 ? 0 : n[a] - 1)) continue;
                        nrm[a] += side == 0 ? -1.0 : 1.0;
                        if (bn.face < 0) bn.face = 2 * a + side;
                        // face trapezoid weight: product over tangential axes
                        double w = 1.0;
                        for (int b = 0; b < 3; ++b) {
                            if (b == a) continue;
                            const bool edge = idx[b] == 0 || idx[b] == n[b] - 1;
                            w *= g.h[b] * (edge ? 0.5 : 1.0);
                        }
                        weight += w;
                    }
                }
                const double len = std::sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]);
                bn.normal = {nrm[0] / len, nrm[1] / len, nrm[2] / len};
                bn.weight = weight;
                bn.theta = std::atan2(g.coord(1, i2), g.coord(0, i1));
                g.node_to_boundary[bn.node] = g.boundary.size();
                g.boundary.push_back(bn);
            }
}

}  // namespace detail

inline GridPtr make_grid(int dim, const std::vector<std::size_t>& counts, double lo = -1.0,
                         double hi = 1.0) {
    if (dim != 2 && dim != 3) throw parameter_error("grid dim must be 2 or 3");
    if (counts.size() != static_cast<std::size_t>(dim))
        throw parameter_error("counts must list one entry per axis");
    if (!(lo < hi)) throw parameter_error("grid extent requires lo < hi");
    auto g = std::make_shared<Grid>();
    g->dim = dim;
    g->lo = lo;
    g->hi = hi;
    for (int a = 0; a < dim; ++a) {
        if (counts[a] < 3) throw parameter_error("grid needs at least 3 nodes per axis");
        g->counts[a] = counts[a];
        g->h[a] = (hi - lo) / static_cast<double>(counts[a] - 1);
    }
    g->node_to_boundary.assign(g->node_count(), npos);
    if (dim == 2)
        detail::build_boundary_2d(*g);
    else
        detail::build_boundary_3d(*g);
    return g;
}

inline GridPtr make_grid(int dim, std::size_t n_per_axis, double lo = -1.0, double hi = 1.0) {
    return make_grid(dim, std::vector<std::size_t>(static_cast<std::size_t>(dim), n_per_axis), lo,
                     hi);
}

// --- boundary quadrature (trapezoid over the node weights) ---

inline double boundary_integral(const BoundaryTrace& t) {
    double s = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) s += t.v[k] * t.grid->boundary[k].weight;
    return s;
}

inline double boundary_inner(const BoundaryTrace& a, const BoundaryTrace& b) {
    if (a.grid != b.grid || a.size() != b.size()) throw shape_error("traces on different grids");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a.v[k] * b.v[k] * a.grid->boundary[k].weight;
    return s;
}

inline double boundary_l2(const BoundaryTrace& t) { return std::sqrt(boundary_inner(t, t)); }

// --- inclusion primitives ---

struct Circle {
    std::array<double, 2> center{};
    double radius = 0.0;
};

struct Ellipse {
    std::array<double, 2> center{};
    double a = 0.0;      // semi-major
    double b = 0.0;      // semi-minor
    double angle = 0.0;  // rotation of the a-axis
};

struct Ellipsoid {
    std::array<double, 3> center{};
    std::array<double, 3> semi_axes{};
    std::array<double, 3> angles{};  // intrinsic Z-Y-X rotation
};

// Union of primitives described by the min of per-primitive level sets,
// negative inside. Contrast values ride along with the geometry.
struct InclusionSet {
    std::vector<Circle> circles;
    std::vector<Ellipse> ellipses;
    std::vector<Ellipsoid> ellipsoids;
    double mu0 = 0.0;
    double mu1 = 50.0;

    std::size_t primitive_count() const {
        return circles.size() + ellipses.size() + ellipsoids.size();
    }
};

namespace detail {

inline double circle_level(const Circle& c, double x, double y) {
    return std::hypot(x - c.center[0], y - c.center[1]) - c.radius;
}

inline double ellipse_level(const Ellipse& e, double x, double y) {
    const double dx = x - e.center[0], dy = y - e.center[1];
    const double ca = std::cos(e.angle), sa = std::sin(e.angle);
    const double q1 = ca * dx + sa * dy;
    const double q2 = -sa * dx + ca * dy;
    return (q1 / e.a) * (q1 / e.a) + (q2 / e.b) * (q2 / e.b) - 1.0;
}

inline double ellipsoid_level(const Ellipsoid& e, const std::array<double, 3>& x) {
    const double d0 = x[0] - e.center[0], d1 = x[1] - e.center[1], d2 = x[2] - e.center[2];
    const double c1 = std::cos(e.angles[0]), s1 = std::sin(e.angles[0]);
    const double c2 = std::cos(e.angles[1]), s2 = std::sin(e.angles[1]);
    const double c3 = std::cos(e.angles[2]), s3 = std::sin(e.angles[2]);
    // rows of R = Rz(a3) Ry(a2) Rx(a1); q = R^T d
    const double r00 = c3 * c2, r01 = c3 * s2 * s1 - s3 * c1, r02 = c3 * s2 * c1 + s3 * s1;
    const double r10 = s3 * c2, r11 = s3 * s2 * s1 + c3 * c1, r12 = s3 * s2 * c1 - c3 * s1;
    const double r20 = -s2, r21 = c2 * s1, r22 = c2 * c1;
    const double q0 = r00 * d0 + r10 * d1 + r20 * d2;
    const double q1 = r01 * d0 + r11 * d1 + r21 * d2;
    const double q2 = r02 * d0 + r12 * d1 + r22 * d2;
    const auto& s = e.semi_axes;
    return (q0 / s[0]) * (q0 / s[0]) + (q1 / s[1]) * (q1 / s[1]) + (q2 / s[2]) * (q2 / s[2]) - 1.0;
}

}  // namespace detail

inline double level_set(const InclusionSet& incl, const std::array<double, 3>& x) {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& c : incl.circles) v = std::min(v, detail::circle_level(c, x[0], x[1]));
    for (const auto& e : incl.ellipses) v = std::min(v, detail::ellipse_level(e, x[0], x[1]));
    for (const auto& e : incl.ellipsoids) v = std::min(v, detail::ellipsoid_level(e, x));
    return v;
}

// Default primitive counts follow the scenario definitions; figure captions
// elsewhere disagree, so the count stays overridable.
inline InclusionSet sample_inclusions(Scenario scenario, std::uint64_t seed,
                                      std::size_t count_override = 0) {
    Rng rng(seed);
    InclusionSet set;
    switch (scenario) {
        case Scenario::circles2d: {
            const std::size_t n = count_override ? count_override : 5;
            for (std::size_t i = 0; i < n; ++i) {
                Circle c;
                c.center = {rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
                c.radius = rng.uniform(0.2, 0.4);
                set.circles.push_back(c);
            }
            break;
        }
        case Scenario::ellipses2d: {
            const std::size_t n = count_override ? count_override : 4;
            for (std::size_t i = 0; i < n; ++i) {
                Ellipse e;
                e.center = {rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
                const double longer = rng.uniform(0.2, 0.6);
                const double ecc = rng.uniform(0.0, 0.9);
                e.a = 0.5 * longer;
                e.b = e.a * std::sqrt(1.0 - ecc * ecc);
                e.angle = 0.0;
                set.ellipses.push_back(e);
            }
            break;
        }
        case Scenario::ellipsoids3d: {
            const std::size_t n = count_override ? count_override : 2;
            for (std::size_t i = 0; i < n; ++i) {
                Ellipsoid e;
                for (int a = 0; a < 3; ++a) e.center[a] = rng.uniform(-0.4, 0.4);
                for (int a = 0; a < 3; ++a) e.semi_axes[a] = rng.uniform(0.4, 0.6);
                for (int a = 0; a < 3; ++a) e.angles[a] = rng.uniform(0.0, 2.0 * pi);
                set.ellipsoids.push_back(e);
            }
            break;
        }
    }
    return set;
}

// Indicator of the inclusion support on the grid nodes: 1 inside, 0 otherwise.
inline ScalarField rasterize_mask(const InclusionSet& incl, const GridPtr& grid) {
    ScalarField mask(grid);
    for (std::size_t p = 0; p < grid->node_count(); ++p)
        mask.v[p] = level_set(incl, grid->coords(p)) < 0.0 ? 1.0 : 0.0;
    return mask;
}

// Absorption coefficient field: mu1 inside the inclusions, mu0 outside.
inline ScalarField absorption_field(const InclusionSet& incl, const GridPtr& grid) {
    ScalarField mu(grid);
    for (std::size_t p = 0; p < grid->node_count(); ++p)
        mu.v[p] = level_set(incl, grid->coords(p)) < 0.0 ? incl.mu1 : incl.mu0;
    return mu;
}

}  // namespace ddsm
