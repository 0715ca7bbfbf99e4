#pragma once

// Second-order finite differences for -Lap(u) + mu*u = 0 on tensor grids.
//
// The 5/7-point scheme with ghost-node Neumann closure is assembled in an
// "integrated" form: each FD row is scaled by the trapezoid volume weight of
// its node. That scaling makes the matrix symmetric positive semidefinite
// (definite unless mu == 0 with pure Neumann data), so CG applies directly,
// and the Neumann datum enters the right-hand side as g times the node's
// surface quadrature weight.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "ddsm/errors.hpp"
#include "ddsm/geometry.hpp"
#include "ddsm/linalg.hpp"

namespace ddsm {

enum class BcKind { neumann, dirichlet };

struct SolveOptions {
    double tol = 1e-10;
    std::size_t max_iterations = 0;   // 0: 20 * sqrt(unknowns), floor 200
    std::size_t direct_limit = 160;   // banded direct path for 2D grids up to this size per axis
};

class StencilSystem {
public:
    StencilSystem(GridPtr grid, std::vector<double> mu, BcKind bc)
        : grid_(std::move(grid)), mu_(std::move(mu)), bc_(bc) {
        if (mu_.size() != grid_->node_count()) throw shape_error("mu field size mismatch");
        for (double m : mu_) {
            if (!(m >= 0.0) || !std::isfinite(m))
                throw parameter_error("absorption must be nonnegative and finite");
        }
        singular_ = bc_ == BcKind::neumann &&
                    std::all_of(mu_.begin(), mu_.end(), [](double m) { return m == 0.0; });
        for (int a = 0; a < grid_->dim; ++a) {
            const std::size_t n = grid_->counts[a];
            wf_[a].resize(n);
            for (std::size_t i = 0; i < n; ++i)
                wf_[a][i] = grid_->h[a] * ((i == 0 || i == n - 1) ? 0.5 : 1.0);
        }
        if (bc_ == BcKind::dirichlet) {
            for (int a = 0; a < grid_->dim; ++a) interior_[a] = grid_->counts[a] - 2;
        }
        build_diagonal();
    }

    std::size_t unknowns() const {
        if (bc_ == BcKind::neumann) return grid_->node_count();
        std::size_t n = 1;
        for (int a = 0; a < grid_->dim; ++a) n *= interior_[a];
        return n;
    }

    bool singular() const { return singular_; }
    BcKind bc() const { return bc_; }
    const GridPtr& grid() const { return grid_; }
    const std::vector<double>& mu() const { return mu_; }
    const std::vector<double>& diagonal() const { return diag_; }

    void apply(const double* x, double* y) const {
        if (bc_ == BcKind::neumann)
            grid_->dim == 2 ? apply_neumann_2d(x, y) : apply_neumann_3d(x, y);
        else
            grid_->dim == 2 ? apply_dirichlet_2d(x, y) : apply_dirichlet_3d(x, y);
    }

    // Interior <-> node index maps for the Dirichlet system.
    std::size_t interior_index(std::size_t i1, std::size_t i2, std::size_t i3 = 1) const {
        return (i1 - 1) + interior_[0] * ((i2 - 1) + interior_[1] * (grid_->dim == 3 ? i3 - 1 : 0));
    }

    // Dirichlet edge coefficient toward a neighbor along `axis`.
    double dirichlet_edge(int axis) const {
        double t = 1.0;
        for (int b = 0; b < grid_->dim; ++b)
            if (b != axis) t *= grid_->h[b];
        return t / grid_->h[axis];
    }

    BandedCholesky assemble_banded() const {
        if (grid_->dim != 2) throw parameter_error("banded assembly is 2D only");
        if (singular_) throw parameter_error("banded assembly requires a definite system");
        const std::size_t n1 = grid_->counts[0], n2 = grid_->counts[1];
        if (bc_ == BcKind::neumann) {
            BandedCholesky chol(n1 * n2, n1);
            for (std::size_t j = 0; j < n2; ++j)
                for (std::size_t i = 0; i < n1; ++i) {
                    const std::size_t p = j * n1 + i;
                    chol.at(p, p) = diag_[p];
                    if (i > 0) chol.at(p, p - 1) = -wf_[1][j] / grid_->h[0];
                    if (j > 0) chol.at(p, p - n1) = -wf_[0][i] / grid_->h[1];
                }
            chol.factor();
            return chol;
        }
        const std::size_t m1 = interior_[0], m2 = interior_[1];
        const double c1 = dirichlet_edge(0), c2 = dirichlet_edge(1);
        BandedCholesky chol(m1 * m2, m1);
        for (std::size_t j = 0; j < m2; ++j)
            for (std::size_t i = 0; i < m1; ++i) {
                const std::size_t p = j * m1 + i;
                chol.at(p, p) = diag_[p];
                if (i > 0) chol.at(p, p - 1) = -c1;
                if (j > 0) chol.at(p, p - m1) = -c2;
            }
        chol.factor();
        return chol;
    }

private:
    void build_diagonal() {
        diag_.assign(unknowns(), 0.0);
        if (bc_ == BcKind::neumann) {
            const auto& n = grid_->counts;
            for (std::size_t p = 0; p < grid_->node_count(); ++p) {
                const auto m = grid_->multi_index(p);
                double vol = 1.0, d = 0.0;
                for (int a = 0; a < grid_->dim; ++a) vol *= wf_[a][m[a]];
                for (int a = 0; a < grid_->dim; ++a) {
                    const double c = vol / wf_[a][m[a]] / grid_->h[a];
                    if (m[a] > 0) d += c;
                    if (m[a] + 1 < n[a]) d += c;
                }
                diag_[p] = d + mu_[p] * vol;
            }
        } else {
            double vol = 1.0;
            for (int a = 0; a < grid_->dim; ++a) vol *= grid_->h[a];
            double base = 0.0;
            for (int a = 0; a < grid_->dim; ++a) base += 2.0 * dirichlet_edge(a);
            const std::size_t i3max = grid_->dim == 3 ? interior_[2] : 1;
            for (std::size_t k = 0; k < i3max; ++k)
                for (std::size_t j = 0; j < interior_[1]; ++j)
                    for (std::size_t i = 0; i < interior_[0]; ++i) {
                        const std::size_t node =
                            grid_->index(i + 1, j + 1, grid_->dim == 3 ? k + 1 : 0);
                        diag_[i + interior_[0] * (j + interior_[1] * k)] =
                            base + mu_[node] * vol;
                    }
        }
    }

    void apply_neumann_2d(const double* x, double* y) const {
        const std::size_t n1 = grid_->counts[0], n2 = grid_->counts[1];
        const double h1 = grid_->h[0], h2 = grid_->h[1];
        for (std::size_t j = 0; j < n2; ++j) {
            const double w2 = wf_[1][j];
            const double c1 = w2 / h1;
            for (std::size_t i = 0; i < n1; ++i) {
                const std::size_t p = j * n1 + i;
                const double w1 = wf_[0][i];
                const double c2 = w1 / h2;
                double s = mu_[p] * w1 * w2 * x[p];
                if (i > 0) s += c1 * (x[p] - x[p - 1]);
                if (i + 1 < n1) s += c1 * (x[p] - x[p + 1]);
                if (j > 0) s += c2 * (x[p] - x[p - n1]);
                if (j + 1 < n2) s += c2 * (x[p] - x[p + n1]);
                y[p] = s;
            }
        }
    }

    void apply_neumann_3d(const double* x, double* y) const {
        const std::size_t n1 = grid_->counts[0], n2 = grid_->counts[1], n3 = grid_->counts[2];
        const double h1 = grid_->h[0], h2 = grid_->h[1], h3 = grid_->h[2];
        const std::size_t s2 = n1, s3 = n1 * n2;
        for (std::size_t k = 0; k < n3; ++k) {
            const double w3 = wf_[2][k];
            for (std::size_t j = 0; j < n2; ++j) {
                const double w2 = wf_[1][j];
                const double c1 = w2 * w3 / h1;
                for (std::size_t i = 0; i < n1; ++i) {
                    const std::size_t p = i + s2 * j + s3 * k;
                    const double w1 = wf_[0][i];
                    const double c2 = w1 * w3 / h2;
                    const double c3 = w1 * w2 / h3;
                    double s = mu_[p] * w1 * w2 * w3 * x[p];
                    if (i > 0) s += c1 * (x[p] - x[p - 1]);
                    if (i + 1 < n1) s += c1 * (x[p] - x[p + 1]);
                    if (j > 0) s += c2 * (x[p] - x[p - s2]);
                    if (j + 1 < n2) s += c2 * (x[p] - x[p + s2]);
                    if (k > 0) s += c3 * (x[p] - x[p - s3]);
                    if (k + 1 < n3) s += c3 * (x[p] - x[p + s3]);
                    y[p] = s;
                }
            }
        }
    }

    void apply_dirichlet_2d(const double* x, double* y) const {
        const std::size_t m1 = interior_[0], m2 = interior_[1];
        const double c1 = dirichlet_edge(0), c2 = dirichlet_edge(1);
        const double vol = grid_->h[0] * grid_->h[1];
        for (std::size_t j = 0; j < m2; ++j)
            for (std::size_t i = 0; i < m1; ++i) {
                const std::size_t p = j * m1 + i;
                const std::size_t node = grid_->index(i + 1, j + 1);
                double s = (2.0 * c1 + 2.0 * c2 + mu_[node] * vol) * x[p];
                if (i > 0) s -= c1 * x[p - 1];
                if (i + 1 < m1) s -= c1 * x[p + 1];
                if (j > 0) s -= c2 * x[p - m1];
                if (j + 1 < m2) s -= c2 * x[p + m1];
                y[p] = s;
            }
    }

    void apply_dirichlet_3d(const double* x, double* y) const {
        const std::size_t m1 = interior_[0], m2 = interior_[1], m3 = interior_[2];
        const double c1 = dirichlet_edge(0), c2 = dirichlet_edge(1), c3 = dirichlet_edge(2);
        const double vol = grid_->h[0] * grid_->h[1] * grid_->h[2];
        const std::size_t s2 = m1, s3 = m1 * m2;
        for (std::size_t k = 0; k < m3; ++k)
            for (std::size_t j = 0; j < m2; ++j)
                for (std::size_t i = 0; i < m1; ++i) {
                    const std::size_t p = i + s2 * j + s3 * k;
                    const std::size_t node = grid_->index(i + 1, j + 1, k + 1);
                    double s = (2.0 * (c1 + c2 + c3) + mu_[node] * vol) * x[p];
                    if (i > 0) s -= c1 * x[p - 1];
                    if (i + 1 < m1) s -= c1 * x[p + 1];
                    if (j > 0) s -= c2 * x[p - s2];
                    if (j + 1 < m2) s -= c2 * x[p + s2];
                    if (k > 0) s -= c3 * x[p - s3];
                    if (k + 1 < m3) s -= c3 * x[p + s3];
                    y[p] = s;
                }
    }

    GridPtr grid_;
    std::vector<double> mu_;
    BcKind bc_;
    bool singular_ = false;
    std::array<std::vector<double>, 3> wf_;  // per-axis trapezoid factors (h or h/2)
    std::array<std::size_t, 3> interior_{0, 0, 0};
    std::vector<double> diag_;
};

namespace detail {

inline std::size_t default_max_iter(std::size_t unknowns) {
    const auto cap = static_cast<std::size_t>(20.0 * std::sqrt(static_cast<double>(unknowns)));
    return std::max<std::size_t>(cap, 200);
}

inline bool use_direct(const StencilSystem& sys, const SolveOptions& opts) {
    if (sys.grid()->dim != 2 || sys.singular()) return false;
    return std::max(sys.grid()->counts[0], sys.grid()->counts[1]) <= opts.direct_limit;
}

inline std::vector<double> solve_system(const StencilSystem& sys, const BandedCholesky* chol,
                                        std::vector<double> b, const SolveOptions& opts) {
    if (chol) {
        chol->solve(b);
        return b;
    }
    std::vector<double> x;
    const std::size_t max_iter =
        opts.max_iterations ? opts.max_iterations : default_max_iter(sys.unknowns());
    pcg(
        sys.unknowns(), [&sys](const double* in, double* out) { sys.apply(in, out); },
        sys.diagonal(), b, x, opts.tol, max_iter, sys.singular());
    return x;
}

}  // namespace detail

// Neumann problem -Lap(u) + mu*u = 0, du/dn = g, for a fixed (grid, mu).
// The direct factorization (when applicable) is built eagerly so that solve()
// is const and safe to call concurrently.
class NeumannProblem {
public:
    NeumannProblem(GridPtr grid, ScalarField mu, const SolveOptions& opts = {})
        : sys_(grid, std::move(mu.v), BcKind::neumann), opts_(opts) {
        if (detail::use_direct(sys_, opts_))
            chol_ = std::make_unique<BandedCholesky>(sys_.assemble_banded());
    }

    ScalarField solve(const BoundaryTrace& flux) const {
        const auto& grid = sys_.grid();
        if (flux.grid.get() != grid.get()) throw shape_error("flux on a different grid");
        std::vector<double> b(grid->node_count(), 0.0);
        for (std::size_t k = 0; k < grid->boundary_count(); ++k)
            b[grid->boundary[k].node] = flux.v[k] * grid->boundary[k].weight;
        if (sys_.singular()) {
            // Compatibility: net flux must vanish for the pure-Neumann problem.
            double net = 0.0;
            for (double v : b) net += v;
            const double gnorm = boundary_l2(flux);
            if (gnorm == 0.0) return ScalarField(grid, 0.0);
            if (std::abs(net) > compat_tol_ * gnorm)
                throw incompatible_flux_error("pure-Neumann flux has nonzero boundary mean");
        }
        auto x = detail::solve_system(sys_, chol_.get(), std::move(b), opts_);
        ScalarField u(grid);
        u.v = std::move(x);
        if (sys_.singular()) {
            double mean = 0.0;
            for (double v : u.v) mean += v;
            mean /= static_cast<double>(u.v.size());
            for (auto& v : u.v) v -= mean;  // gauge: zero node mean
        }
        return u;
    }

    const StencilSystem& system() const { return sys_; }

private:
    StencilSystem sys_;
    SolveOptions opts_;
    std::unique_ptr<BandedCholesky> chol_;
    double compat_tol_ = 1e-8;
};

// Dirichlet problem for the constant-background coefficient, also serving the
// point-source (discrete delta) solves.
class DirichletProblem {
public:
    DirichletProblem(GridPtr grid, double mu0, const SolveOptions& opts = {})
        : sys_(grid, std::vector<double>(grid->node_count(), mu0), BcKind::dirichlet),
          opts_(opts) {
        if (mu0 < 0.0) throw parameter_error("mu0 must be nonnegative");
        if (detail::use_direct(sys_, opts_))
            chol_ = std::make_unique<BandedCholesky>(sys_.assemble_banded());
    }

    ScalarField solve(const BoundaryTrace& bdry) const {
        const auto& grid = sys_.grid();
        if (bdry.grid.get() != grid.get()) throw shape_error("trace on a different grid");
        std::vector<double> b(sys_.unknowns(), 0.0);
        add_boundary_rhs(bdry, b);
        return assemble(detail::solve_system(sys_, chol_.get(), std::move(b), opts_), &bdry);
    }

    // Discrete delta at an interior node: integrated right-hand side is 1.
    ScalarField solve_point_source(std::size_t node) const {
        const auto& grid = sys_.grid();
        if (node >= grid->node_count()) throw parameter_error("source node out of range");
        if (grid->is_boundary(node)) throw parameter_error("source node must be interior");
        std::vector<double> b(sys_.unknowns(), 0.0);
        const auto m = grid->multi_index(node);
        b[sys_.interior_index(m[0], m[1], grid->dim == 3 ? m[2] : 1)] = 1.0;
        return assemble(detail::solve_system(sys_, chol_.get(), std::move(b), opts_), nullptr);
    }

private:
    void add_boundary_rhs(const BoundaryTrace& bdry, std::vector<double>& b) const {
        const auto& grid = sys_.grid();
        const auto& n = grid->counts;
        // Interior unknowns adjacent to the boundary pick up c * bdry.
        for (std::size_t k = 0; k < grid->boundary_count(); ++k) {
            const auto m = grid->multi_index(grid->boundary[k].node);
            const double val = bdry.v[k];
            if (val == 0.0) continue;
            for (int a = 0; a < grid->dim; ++a) {
                auto q = m;
                if (m[a] == 0)
                    q[a] = 1;
                else if (m[a] == n[a] - 1)
                    q[a] = n[a] - 2;
                else
                    continue;
                bool interior = true;
                for (int bb = 0; bb < grid->dim; ++bb)
                    interior &= q[bb] > 0 && q[bb] < n[bb] - 1;
                if (!interior) continue;
                b[sys_.interior_index(q[0], q[1], grid->dim == 3 ? q[2] : 1)] +=
                    sys_.dirichlet_edge(a) * val;
            }
        }
    }

    ScalarField assemble(std::vector<double> x, const BoundaryTrace* bdry) const {
        const auto& grid = sys_.grid();
        ScalarField u(grid, 0.0);
        const auto& n = grid->counts;
        const std::size_t i3max = grid->dim == 3 ? n[2] - 1 : 1;
        std::size_t q = 0;
        for (std::size_t k = grid->dim == 3 ? 1 : 0; k < i3max; ++k)
            for (std::size_t j = 1; j + 1 < n[1]; ++j)
                for (std::size_t i = 1; i + 1 < n[0]; ++i)
                    u.v[grid->index(i, j, k)] = x[q++];
        if (bdry)
            for (std::size_t k = 0; k < grid->boundary_count(); ++k)
                u.v[grid->boundary[k].node] = bdry->v[k];
        return u;
    }

    StencilSystem sys_;
    SolveOptions opts_;
    std::unique_ptr<BandedCholesky> chol_;
};

// --- one-shot operations ---

inline ScalarField solve_neumann(const GridPtr& grid, const ScalarField& mu,
                                 const BoundaryTrace& g, const SolveOptions& opts = {}) {
    if (mu.grid.get() != grid.get()) throw shape_error("mu on a different grid");
    return NeumannProblem(grid, mu, opts).solve(g);
}

inline BoundaryTrace trace(const ScalarField& u) {
    BoundaryTrace t(u.grid);
    for (std::size_t k = 0; k < u.grid->boundary_count(); ++k)
        t.v[k] = u.v[u.grid->boundary[k].node];
    return t;
}

inline BoundaryTrace ntd_background(const GridPtr& grid, double mu0, const BoundaryTrace& g,
                                    const SolveOptions& opts = {}) {
    if (mu0 < 0.0) throw parameter_error("mu0 must be nonnegative");
    return trace(NeumannProblem(grid, ScalarField(grid, mu0), opts).solve(g));
}

inline ScalarField solve_dirichlet(const GridPtr& grid, double mu0, const BoundaryTrace& bdry,
                                   const SolveOptions& opts = {}) {
    return DirichletProblem(grid, mu0, opts).solve(bdry);
}

inline ScalarField solve_point_source(const GridPtr& grid, double mu0, std::size_t node,
                                      const SolveOptions& opts = {}) {
    return DirichletProblem(grid, mu0, opts).solve_point_source(node);
}

// Outward normal derivative on the boundary, one-sided second-order
// differences along each axis combined by the node's normal components.
inline BoundaryTrace normal_flux(const ScalarField& u) {
    const auto& grid = *u.grid;
    BoundaryTrace t(u.grid);
    for (std::size_t k = 0; k < grid.boundary_count(); ++k) {
        const auto& bn = grid.boundary[k];
        const auto m = grid.multi_index(bn.node);
        double val = 0.0;
        for (int a = 0; a < grid.dim; ++a) {
            if (bn.normal[a] == 0.0) continue;
            std::size_t stride = 1;
            for (int b = 0; b < a; ++b) stride *= grid.counts[b];
            const double h = grid.h[a];
            double d;
            if (m[a] == 0)
                d = (-3.0 * u.v[bn.node] + 4.0 * u.v[bn.node + stride] -
                     u.v[bn.node + 2 * stride]) /
                    (2.0 * h);
            else
                d = (3.0 * u.v[bn.node] - 4.0 * u.v[bn.node - stride] +
                     u.v[bn.node - 2 * stride]) /
                    (2.0 * h);
            val += bn.normal[a] * d;
        }
        t.v[k] = val;
    }
    return t;
}

}  // namespace ddsm
