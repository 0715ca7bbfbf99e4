#pragma once

// Classical direct sampling machinery: probing functions and their boundary
// norms, the duality-product identity, the sampling index field, the discrete
// NtD-difference spectrum, and the Picard-series diagnostic.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ddsm/data.hpp"
#include "ddsm/errors.hpp"
#include "ddsm/geometry.hpp"
#include "ddsm/linalg.hpp"
#include "ddsm/pde.hpp"

namespace ddsm {

struct ProbingTrace {
    std::size_t node = 0;  // interior source node
    BoundaryTrace eta;     // normal flux of the point-source solution
    double l2 = 0.0;       // |eta|_{L2(boundary)}
    double h1 = 0.0;       // |eta|_{H1(boundary)} seminorm
};

namespace detail {

// H1 boundary seminorm by first differences: exact trapezoid analogue along
// the 2D perimeter; in 3D a per-axis difference quadrature over the surface.
inline double h1_seminorm(const BoundaryTrace& t) {
    const auto& grid = *t.grid;
    double sum = 0.0;
    if (grid.dim == 2) {
        const std::size_t nb = grid.boundary_count();
        for (std::size_t k = 0; k < nb; ++k) {
            const std::size_t next = (k + 1) % nb;
            double d = grid.boundary[next].arclen - grid.boundary[k].arclen;
            if (d <= 0.0) d += grid.perimeter;
            const double slope = (t.v[next] - t.v[k]) / d;
            sum += slope * slope * d;
        }
        return std::sqrt(sum);
    }
    for (std::size_t k = 0; k < grid.boundary_count(); ++k) {
        const auto& bn = grid.boundary[k];
        const auto m = grid.multi_index(bn.node);
        for (int a = 0; a < 3; ++a) {
            if (m[a] + 1 >= grid.counts[a]) continue;
            auto q = m;
            q[a] += 1;
            const std::size_t qb = grid.node_to_boundary[grid.index(q[0], q[1], q[2])];
            if (qb == npos) continue;
            const double slope = (t.v[qb] - t.v[k]) / grid.h[a];
            sum += slope * slope * 0.5 * (bn.weight + grid.boundary[qb].weight);
        }
    }
    return std::sqrt(sum);
}

}  // namespace detail

// Probing function for one interior point: the boundary flux of the
// zero-Dirichlet point-source solution, with its cached norms.
inline ProbingTrace probing_numeric(const GridPtr& grid, double mu0, std::size_t node,
                                    const DirichletProblem* solver = nullptr) {
    ProbingTrace p;
    p.node = node;
    p.eta = normal_flux(solver ? solver->solve_point_source(node)
                               : solve_point_source(grid, mu0, node));
    p.l2 = boundary_l2(p.eta);
    p.h1 = detail::h1_seminorm(p.eta);
    return p;
}

// |eta|_Y = |eta|_H1^p * |eta|_L2^q, the sampling-norm combination.
struct NormExponents {
    double p = 0.5;
    double q = 0.75;
};

// Per-node probing norms for a fixed (grid, mu0). Building the table costs one
// point-source solve per interior node, so it is computed once and shared by
// every index evaluation on that grid.
class ProbingNormCache {
public:
    ProbingNormCache(GridPtr grid, double mu0, const SolveOptions& opts = {})
        : grid_(std::move(grid)), mu0_(mu0) {
        DirichletProblem solver(grid_, mu0_, opts);
        l2_.assign(grid_->node_count(), 0.0);
        h1_.assign(grid_->node_count(), 0.0);
        for (std::size_t node = 0; node < grid_->node_count(); ++node) {
            if (grid_->is_boundary(node)) continue;
            const auto p = probing_numeric(grid_, mu0_, node, &solver);
            l2_[node] = p.l2;
            h1_[node] = p.h1;
        }
    }

    const GridPtr& grid() const { return grid_; }
    double mu0() const { return mu0_; }

    double norm_y(std::size_t node, const NormExponents& e) const {
        return std::pow(h1_[node], e.p) * std::pow(l2_[node], e.q);
    }

private:
    GridPtr grid_;
    double mu0_;
    std::vector<double> l2_, h1_;
};

// Duality pairing <eta, data>_s: the boundary operator acts on the data side
// before integrating against eta, matching how the difference fields are
// generated.
inline double duality_product(const ProbingTrace& eta, const BoundaryTrace& data, int s) {
    return boundary_inner(eta.eta, boundary_operator(data, s));
}

// Classical sampling index I(x) = phi(x) / |eta_x|_Y on interior nodes, zero
// on the boundary.
inline ScalarField dsm_index(const GridPtr& grid, double mu0, const CauchyPair& pair, int s,
                             const NormExponents& exps = {},
                             const ProbingNormCache* cache = nullptr,
                             const SolveOptions& opts = {}) {
    std::optional<ProbingNormCache> local;
    if (!cache) local.emplace(grid, mu0, opts);
    const ProbingNormCache& norms = cache ? *cache : *local;

    const ScalarField phi = cauchy_difference(grid, mu0, pair, s, opts);
    ScalarField index(grid, 0.0);
    for (std::size_t node = 0; node < grid->node_count(); ++node) {
        if (grid->is_boundary(node)) continue;
        const double ny = norms.norm_y(node, exps);
        if (!(ny > 0.0)) throw degeneracy_error("zero probing norm at an interior node");
        index.v[node] = phi.v[node] / ny;
    }
    return index;
}

// Probing function on the unit disk via the modified-Bessel mode ratios; the
// mu0 -> 0 limit of each ratio is r^|n| and the sum collapses to the Poisson
// kernel. Evaluated as a symmetric partial sum over |n| <= n_terms.
inline double probing_series_disk(double r, double theta_x, double xi_angle, double mu0,
                                  std::size_t n_terms) {
    if (!(r >= 0.0) || r >= 1.0) throw parameter_error("source radius must satisfy 0 <= r < 1");
    if (mu0 < 0.0) throw parameter_error("mu0 must be nonnegative");
    if (n_terms < 1) throw parameter_error("need at least one series term");
    const double x = std::sqrt(mu0);
    // normalized series S_n(z) = sum_k (z^2/4)^k / (k! (n+1)...(n+k)); the
    // Bessel ratio I_n(z r)/I_n(z) equals r^n S_n(z r)/S_n(z).
    auto s_series = [](int n, double z) {
        const double z2 = 0.25 * z * z;
        double term = 1.0, sum = 1.0;
        for (int k = 1; k <= 60; ++k) {
            term *= z2 / (static_cast<double>(k) * static_cast<double>(n + k));
            sum += term;
            if (term < 1e-18 * sum) break;
        }
        return sum;
    };
    const double dtheta = theta_x - xi_angle;
    double sum = s_series(0, x * r) / s_series(0, x);  // n = 0 ratio
    for (std::size_t n = 1; n <= n_terms; ++n) {
        const double ratio =
            std::pow(r, static_cast<double>(n)) * s_series(static_cast<int>(n), x * r) /
            s_series(static_cast<int>(n), x);
        sum += 2.0 * ratio * std::cos(static_cast<double>(n) * dtheta);
    }
    return sum / (2.0 * pi);
}

// Discrete NtD difference restricted to a flux basis, with its eigenpairs and
// the data fields of the eigen-fluxes.
struct SpectralDecomposition {
    std::size_t n = 0;
    std::vector<double> matrix;       // symmetrized, row-major
    double asymmetry = 0.0;           // max |A - A^T| before symmetrization
    std::vector<double> eigenvalues;  // sorted by descending |lambda|
    std::vector<std::vector<double>> coefficients;  // eigenvectors in the flux basis
    std::vector<BoundaryTrace> eigen_fluxes;        // nu_w
    std::vector<ScalarField> data_fields;           // phi^w for each eigen-flux
    std::vector<double> nu_l2;                      // |nu_w|_L2(boundary)
    std::vector<double> phi_trace_l2;               // |phi^w|_L2(boundary)
};

// Flux basis for the spectral paths. The leading eigenfunctions of the NtD
// difference carry a constant component that the mean-free Fourier modes
// cannot represent, so for a positive background the admissible constant flux
// is prepended to the basis.
inline std::vector<BoundaryTrace> spectral_flux_basis(const GridPtr& grid, std::size_t n_modes,
                                                      double mu0) {
    std::vector<BoundaryTrace> fluxes;
    if (mu0 > 0.0) fluxes.emplace_back(grid, 1.0);
    for (std::size_t w = 1; w <= n_modes; ++w) fluxes.push_back(basis_flux(grid, w, n_modes));
    return fluxes;
}

inline SpectralDecomposition ntd_difference_matrix(const GridPtr& grid,
                                                   const InclusionSet& incl, double mu0,
                                                   std::vector<BoundaryTrace> fluxes,
                                                   const SolveOptions& opts = {}) {
    const std::size_t n = fluxes.size();
    if (n < 1) throw parameter_error("need at least one basis flux");

    // quadrature orthonormalization (modified Gram-Schmidt)
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double c = boundary_inner(fluxes[i], fluxes[j]);
            for (std::size_t k = 0; k < fluxes[i].size(); ++k)
                fluxes[i].v[k] -= c * fluxes[j].v[k];
        }
        const double norm = boundary_l2(fluxes[i]);
        if (!(norm > 0.0)) throw degeneracy_error("flux basis is numerically dependent");
        for (auto& v : fluxes[i].v) v /= norm;
    }

    BackgroundOps bg(grid, mu0, opts);
    NeumannProblem forward(grid, absorption_field(incl, grid), opts);
    std::vector<BoundaryTrace> f_incl(n), f_bg(n);
    for (std::size_t j = 0; j < n; ++j) {
        f_incl[j] = trace(forward.solve(fluxes[j]));
        f_bg[j] = bg.ntd(fluxes[j]);
    }

    SpectralDecomposition out;
    out.n = n;
    // The difference is oriented background-minus-inclusion: that direction is
    // the positive-definite one when the inclusion raises the absorption, so
    // the spectrum comes out nonnegative as the factorization theory expects.
    std::vector<double> raw(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            BoundaryTrace diff = f_bg[j];
            for (std::size_t k = 0; k < diff.size(); ++k) diff.v[k] -= f_incl[j].v[k];
            raw[i * n + j] = boundary_inner(fluxes[i], diff);
        }
    out.matrix.resize(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            out.matrix[i * n + j] = 0.5 * (raw[i * n + j] + raw[j * n + i]);
            out.asymmetry = std::max(out.asymmetry, std::abs(raw[i * n + j] - raw[j * n + i]));
        }

    std::vector<double> evals, evecs;
    jacobi_eigen(out.matrix, n, evals, evecs);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(evals[a]) > std::abs(evals[b]);
    });

    for (std::size_t rank = 0; rank < n; ++rank) {
        const std::size_t w = order[rank];
        out.eigenvalues.push_back(evals[w]);
        std::vector<double> coeff(n);
        for (std::size_t j = 0; j < n; ++j) coeff[j] = evecs[j * n + w];

        BoundaryTrace nu(grid, 0.0), fnu(grid, 0.0), bnu(grid, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < nu.size(); ++k) {
                nu.v[k] += coeff[j] * fluxes[j].v[k];
                fnu.v[k] += coeff[j] * f_incl[j].v[k];
                bnu.v[k] += coeff[j] * f_bg[j].v[k];
            }
        CauchyPair pair;
        pair.omega = rank + 1;
        pair.g = nu;
        pair.f = fnu;
        // phi for the eigen-flux reuses the linearity of both maps
        BoundaryTrace bval(grid, 0.0);
        for (std::size_t k = 0; k < bval.size(); ++k) bval.v[k] = -(fnu.v[k] - bnu.v[k]);
        ScalarField phi = bg.dirichlet().solve(bval);

        out.nu_l2.push_back(boundary_l2(nu));
        out.phi_trace_l2.push_back(boundary_l2(trace(phi)));
        out.coefficients.push_back(std::move(coeff));
        out.eigen_fluxes.push_back(std::move(nu));
        out.data_fields.push_back(std::move(phi));
    }
    return out;
}

// Truncated Picard series S_K(x) = sum |phi^w(x)|^2 / |lambda_w|^3 over the
// leading modes above the eigenvalue floor. Small values indicate x inside
// the inclusion; only that soft ordering is claimed at finite truncation.
inline ScalarField picard_index(const SpectralDecomposition& spec, std::size_t truncation) {
    if (truncation < 1 || truncation > spec.n)
        throw parameter_error("truncation must be in [1, N]");
    const double floor = 1e-10 * std::abs(spec.eigenvalues.front());
    ScalarField s(spec.data_fields.front().grid, 0.0);
    std::size_t used = 0;
    for (std::size_t w = 0; w < truncation; ++w) {
        const double lam = std::abs(spec.eigenvalues[w]);
        if (lam <= floor) continue;
        const double lam3 = lam * lam * lam;
        const auto& phi = spec.data_fields[w];
        for (std::size_t p = 0; p < s.size(); ++p) s.v[p] += phi.v[p] * phi.v[p] / lam3;
        ++used;
    }
    if (used == 0) throw degeneracy_error("all eigenvalues below the spectral floor");
    return s;
}

}  // namespace ddsm
