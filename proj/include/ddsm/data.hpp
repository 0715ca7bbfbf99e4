#pragma once

// Input pipeline: boundary flux bases, forward Cauchy-pair synthesis,
// measurement noise, limited-data interpolation, and the Cauchy difference
// fields that feed both the classical index function and the network.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ddsm/errors.hpp"
#include "ddsm/geometry.hpp"
#include "ddsm/pde.hpp"
#include "ddsm/rng.hpp"

namespace ddsm {

struct CauchyPair {
    std::size_t omega = 0;  // 1-based mode index
    BoundaryTrace g;        // applied flux
    BoundaryTrace f;        // measured potential
};

struct Sample {
    InclusionSet inclusions;
    ScalarField truth;               // rasterized mask, the training target
    std::vector<CauchyPair> pairs;   // N Cauchy pairs
    std::vector<ScalarField> phis;   // N Cauchy difference fields
    Scenario scenario = Scenario::circles2d;
    std::uint64_t seed = 0;
};

// Removes the quadrature mean so the trace lies in the compatible subspace of
// the pure-Neumann (mu0 = 0) background operator.
inline BoundaryTrace project_mean_free(BoundaryTrace t) {
    double measure = 0.0;
    for (const auto& bn : t.grid->boundary) measure += bn.weight;
    const double mean = boundary_integral(t) / measure;
    for (auto& v : t.v) v -= mean;
    return t;
}

// Fourier flux basis on the square boundary, cos(w*theta) for the first half
// of the modes and sin((w-N/2)*theta) for the second half, theta the polar
// angle of the boundary node. Modes whose frequency is a multiple of 4 have a
// nonzero mean over the square's perimeter, so every mode is projected onto
// the zero-boundary-mean subspace; otherwise the mu0 = 0 background problem
// they feed is unsolvable. The projection is exactly zero for all other
// frequencies.
inline BoundaryTrace fourier_flux(std::size_t omega, std::size_t n_modes, const GridPtr& grid) {
    if (grid->dim != 2) throw parameter_error("fourier_flux needs a 2D grid");
    if (omega < 1 || omega > n_modes) throw parameter_error("mode index out of range");
    const std::size_t half = (n_modes + 1) / 2;
    if (omega > half && n_modes % 2 != 0)
        throw parameter_error("sine modes need an even mode count");
    BoundaryTrace t(grid);
    for (std::size_t k = 0; k < grid->boundary_count(); ++k) {
        const double theta = grid->boundary[k].theta;
        t.v[k] = omega <= half ? std::cos(static_cast<double>(omega) * theta)
                               : std::sin(static_cast<double>(omega - half) * theta);
    }
    return project_mean_free(std::move(t));
}

enum class HarmonicPart { re, im };

struct HarmonicIndex {
    int l = 0;
    int m = 0;
    HarmonicPart part = HarmonicPart::im;
};

// The nine distinct nonzero spherical-harmonic fluxes with l <= 2; the real
// part carries sin(m phi), so it vanishes identically for m = 0.
inline std::vector<HarmonicIndex> harmonic_basis_3d() {
    return {{0, 0, HarmonicPart::im}, {1, 0, HarmonicPart::im}, {1, 1, HarmonicPart::re},
            {1, 1, HarmonicPart::im}, {2, 0, HarmonicPart::im}, {2, 1, HarmonicPart::re},
            {2, 1, HarmonicPart::im}, {2, 2, HarmonicPart::re}, {2, 2, HarmonicPart::im}};
}

// Real/imaginary spherical-harmonic forms evaluated at the radial projection
// of each boundary node onto the unit sphere. Associated Legendre functions
// without the Condon-Shortley phase.
inline BoundaryTrace spherical_harmonic_flux(int l, int m, HarmonicPart part,
                                             const GridPtr& grid) {
    if (grid->dim != 3) throw parameter_error("spherical harmonics need a 3D grid");
    if (l < 0 || l > 2 || m < 0 || m > l) throw parameter_error("harmonic indices out of range");
    auto legendre = [](int l, int m, double z) {
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        if (l == 0) return 1.0;
        if (l == 1) return m == 0 ? z : s;
        if (m == 0) return 0.5 * (3.0 * z * z - 1.0);
        if (m == 1) return 3.0 * z * s;
        return 3.0 * s * s;
    };
    double fact = 1.0;  // (l-m)! / (l+m)!
    for (int i = l - m + 1; i <= l + m; ++i) fact /= static_cast<double>(i);
    const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * pi) * fact);
    BoundaryTrace t(grid);
    for (std::size_t k = 0; k < grid->boundary_count(); ++k) {
        const auto x = grid->coords(grid->boundary[k].node);
        const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        const double cos_theta = x[2] / r;
        const double phi = std::atan2(x[1], x[0]);
        const double p = legendre(l, m, cos_theta);
        t.v[k] = norm * p *
                 (part == HarmonicPart::re ? std::sin(m * phi) : std::cos(m * phi));
    }
    return t;
}

// Pointwise multiplicative measurement noise f -> (1 + delta*G)f with iid
// standard-normal G per boundary node.
inline BoundaryTrace add_noise(const BoundaryTrace& f, double delta, std::uint64_t seed) {
    if (delta < 0.0) throw parameter_error("noise level must be nonnegative");
    BoundaryTrace out = f;
    if (delta == 0.0) return out;
    Rng rng(seed);
    for (auto& v : out.v) v *= 1.0 + delta * rng.normal();
    return out;
}

// Keeps the trace at 4L nodes spread uniformly along the perimeter (2D) or at
// the 26 distinct 3x3-per-face points (3D) and replaces everything else by
// linear / bilinear interpolation, mimicking sparsely placed sources.
inline BoundaryTrace subsample_interpolate(const BoundaryTrace& t, std::size_t points_per_side) {
    const auto& grid = *t.grid;
    if (grid.dim == 2) {
        if (points_per_side < 2) throw parameter_error("need at least 2 points per side");
        const std::size_t nb = grid.boundary_count();
        const std::size_t kept_count = 4 * points_per_side;
        if (kept_count > nb) throw parameter_error("more kept points than boundary nodes");
        std::vector<std::size_t> kept(kept_count);
        for (std::size_t j = 0; j < kept_count; ++j)
            kept[j] = static_cast<std::size_t>(std::llround(
                          static_cast<double>(j) * static_cast<double>(nb) /
                          static_cast<double>(kept_count))) %
                      nb;
        BoundaryTrace out(t.grid);
        const double P = grid.perimeter;
        for (std::size_t j = 0; j < kept_count; ++j) {
            const std::size_t k0 = kept[j];
            const std::size_t k1 = kept[(j + 1) % kept_count];
            const double s0 = grid.boundary[k0].arclen;
            double s1 = grid.boundary[k1].arclen;
            if (s1 <= s0) s1 += P;
            for (std::size_t k = k0;; k = (k + 1) % nb) {
                double s = grid.boundary[k].arclen;
                if (s < s0) s += P;
                const double w = (s - s0) / (s1 - s0);
                out.v[k] = (1.0 - w) * t.v[k0] + w * t.v[k1];
                if (k == k1) break;
            }
        }
        return out;
    }
    // 3D: 9 points per face at tangential index {0, mid, last}, bilinear in
    // between; edge values only involve the shared edge's kept points, so the
    // faces agree where they meet.
    BoundaryTrace out(t.grid);
    const auto& n = grid.counts;
    for (std::size_t k = 0; k < grid.boundary_count(); ++k) {
        const auto& bn = grid.boundary[k];
        const int axis = bn.face / 2;
        const int b = axis == 0 ? 1 : 0;
        const int c = axis == 2 ? 1 : 2;
        const auto m = grid.multi_index(bn.node);
        auto cell = [&](int ax, std::size_t i, std::size_t& lo, std::size_t& hi, double& w) {
            const std::size_t mid = (n[ax] - 1) / 2, last = n[ax] - 1;
            if (i <= mid) {
                lo = 0;
                hi = mid;
            } else {
                lo = mid;
                hi = last;
            }
            w = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
        };
        std::size_t blo, bhi, clo, chi;
        double wb, wc;
        cell(b, m[b], blo, bhi, wb);
        cell(c, m[c], clo, chi, wc);
        auto value_at = [&](std::size_t ib, std::size_t ic) {
            auto idx = m;
            idx[b] = ib;
            idx[c] = ic;
            return t.v[grid.node_to_boundary[grid.index(idx[0], idx[1], idx[2])]];
        };
        out.v[k] = (1.0 - wb) * (1.0 - wc) * value_at(blo, clo) +
                   wb * (1.0 - wc) * value_at(bhi, clo) +
                   (1.0 - wb) * wc * value_at(blo, chi) + wb * wc * value_at(bhi, chi);
    }
    return out;
}

// s = 0: identity. s = 1: the boundary Laplacian (-Lap_Gamma) as the negative
// second difference along the periodic arclength parameter.
inline BoundaryTrace boundary_operator(const BoundaryTrace& t, int s) {
    if (s == 0) return t;
    if (s != 1) throw parameter_error("boundary operator order must be 0 or 1");
    const auto& grid = *t.grid;
    if (grid.dim != 2) throw parameter_error("boundary Laplacian is 2D only");
    const std::size_t nb = grid.boundary_count();
    BoundaryTrace out(t.grid);
    for (std::size_t k = 0; k < nb; ++k) {
        const std::size_t prev = (k + nb - 1) % nb;
        const std::size_t next = (k + 1) % nb;
        double d_prev = grid.boundary[k].arclen - grid.boundary[prev].arclen;
        if (d_prev <= 0.0) d_prev += grid.perimeter;
        double d_next = grid.boundary[next].arclen - grid.boundary[k].arclen;
        if (d_next <= 0.0) d_next += grid.perimeter;
        const double lap = 2.0 / (d_prev + d_next) *
                           ((t.v[next] - t.v[k]) / d_next - (t.v[k] - t.v[prev]) / d_prev);
        out.v[k] = -lap;
    }
    return out;
}

// Shared background solvers for a fixed (grid, mu0); both factorizations are
// built once and reused across samples, modes, and probing points.
class BackgroundOps {
public:
    BackgroundOps(GridPtr grid, double mu0, const SolveOptions& opts = {})
        : grid_(grid),
          mu0_(mu0),
          neumann_(grid, ScalarField(grid, mu0), opts),
          dirichlet_(grid, mu0, opts) {}

    const GridPtr& grid() const { return grid_; }
    double mu0() const { return mu0_; }
    BoundaryTrace ntd(const BoundaryTrace& g) const { return trace(neumann_.solve(g)); }
    const DirichletProblem& dirichlet() const { return dirichlet_; }

private:
    GridPtr grid_;
    double mu0_;
    NeumannProblem neumann_;
    DirichletProblem dirichlet_;
};

// Cauchy difference field: solves the background equation with boundary value
// -(-Lap_Gamma)^s (f - NtD(g)).
inline ScalarField cauchy_difference(const BackgroundOps& bg, const CauchyPair& pair, int s) {
    BoundaryTrace data = pair.f;
    const BoundaryTrace lam = bg.ntd(pair.g);
    for (std::size_t k = 0; k < data.size(); ++k) data.v[k] -= lam.v[k];
    BoundaryTrace bval = boundary_operator(data, s);
    for (auto& v : bval.v) v = -v;
    return bg.dirichlet().solve(bval);
}

inline ScalarField cauchy_difference(const GridPtr& grid, double mu0, const CauchyPair& pair,
                                     int s, const SolveOptions& opts = {}) {
    return cauchy_difference(BackgroundOps(grid, mu0, opts), pair, s);
}

// Flux basis by grid dimension: 2D Fourier modes, 3D spherical harmonics
// (at most the nine l <= 2 functions).
inline BoundaryTrace basis_flux(const GridPtr& grid, std::size_t omega, std::size_t n_modes) {
    if (grid->dim == 2) return fourier_flux(omega, n_modes, grid);
    const auto basis = harmonic_basis_3d();
    if (n_modes > basis.size())
        throw parameter_error("3D flux basis has at most 9 functions");
    if (omega < 1 || omega > n_modes) throw parameter_error("mode index out of range");
    const auto& hi = basis[omega - 1];
    return spherical_harmonic_flux(hi.l, hi.m, hi.part, grid);
}

struct SampleSpec {
    Scenario scenario = Scenario::circles2d;
    std::size_t n_pairs = 1;
    double mu0 = 0.0;
    double mu1 = 50.0;
    int s = 0;
    double noise = 0.0;         // applied to f only
    std::size_t limited = 0;    // 0: full data, else points per side for g
    std::size_t count_override = 0;
};

// Full synthetic pipeline for one inclusion sample: sample geometry, solve the
// forward problem per mode, apply the optional measurement transforms, and
// compute the Cauchy difference fields. Deterministic given the seed.
inline Sample build_sample(const SampleSpec& spec, const GridPtr& grid, std::uint64_t seed,
                           const BackgroundOps* shared_bg = nullptr,
                           const SolveOptions& opts = {}) {
    if (spec.n_pairs < 1) throw parameter_error("need at least one Cauchy pair");
    if ((spec.scenario == Scenario::ellipsoids3d) != (grid->dim == 3))
        throw parameter_error("scenario dimensionality does not match the grid");

    Sample sample;
    sample.scenario = spec.scenario;
    sample.seed = seed;
    sample.inclusions = sample_inclusions(spec.scenario, seed, spec.count_override);
    sample.inclusions.mu0 = spec.mu0;
    sample.inclusions.mu1 = spec.mu1;
    sample.truth = rasterize_mask(sample.inclusions, grid);

    std::optional<BackgroundOps> local_bg;
    if (!shared_bg) local_bg.emplace(grid, spec.mu0, opts);
    const BackgroundOps& bg = shared_bg ? *shared_bg : *local_bg;

    NeumannProblem forward(grid, absorption_field(sample.inclusions, grid), opts);
    for (std::size_t omega = 1; omega <= spec.n_pairs; ++omega) {
        BoundaryTrace g = basis_flux(grid, omega, spec.n_pairs);
        if (spec.limited) g = subsample_interpolate(g, spec.limited);
        if (spec.mu0 == 0.0) g = project_mean_free(std::move(g));
        CauchyPair pair;
        pair.omega = omega;
        pair.f = trace(forward.solve(g));
        pair.g = std::move(g);
        if (spec.noise > 0.0)
            pair.f = add_noise(pair.f, spec.noise, derive_seed(seed, 1000 + omega));
        sample.phis.push_back(cauchy_difference(bg, pair, spec.s));
        sample.pairs.push_back(std::move(pair));
    }
    return sample;
}

// Re-measures an existing sample with fresh multiplicative noise on f and
// recomputes the difference fields; used for test-time robustness runs.
inline Sample perturb_sample(const Sample& original, const BackgroundOps& bg, double delta,
                             std::uint64_t seed, int s) {
    Sample out = original;
    for (std::size_t i = 0; i < out.pairs.size(); ++i) {
        out.pairs[i].f =
            add_noise(original.pairs[i].f, delta, derive_seed(seed, 2000 + i));
        out.phis[i] = cauchy_difference(bg, out.pairs[i], s);
    }
    return out;
}

}  // namespace ddsm
