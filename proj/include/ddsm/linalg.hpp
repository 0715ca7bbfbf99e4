#pragma once

// Dependency-free linear algebra kernels used by the solvers: Jacobi
// preconditioned CG, banded Cholesky for the 2D stencil systems, and a cyclic
// Jacobi eigensolver for the small dense NtD-difference matrices.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "ddsm/errors.hpp"

namespace ddsm {

struct CgStats {
    std::size_t iterations = 0;
    double rel_residual = 0.0;
};

// Solves A x = b for symmetric positive (semi)definite A given as a matvec.
// With deflate_constants the constant null direction is projected out of the
// residual each iteration (consistent singular Neumann systems).
template <class Apply>
CgStats pcg(std::size_t n, Apply&& apply, const std::vector<double>& diag,
            const std::vector<double>& b, std::vector<double>& x, double tol,
            std::size_t max_iter, bool deflate_constants = false) {
    auto dot = [n](const std::vector<double>& a, const std::vector<double>& c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[i] * c[i];
        return s;
    };
    auto deflate = [&](std::vector<double>& r) {
        double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(n);
        for (auto& v : r) v -= mean;
    };

    x.assign(n, 0.0);
    std::vector<double> r = b;
    if (deflate_constants) deflate(r);
    const double bnorm = std::sqrt(dot(r, r));
    if (bnorm == 0.0) return {0, 0.0};

    std::vector<double> z(n), p(n), ap(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    p = z;
    double rz = dot(r, z);
    CgStats stats;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        apply(p.data(), ap.data());
        const double pap = dot(p, ap);
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if (deflate_constants) deflate(r);
        const double rnorm = std::sqrt(dot(r, r));
        stats.iterations = it;
        stats.rel_residual = rnorm / bnorm;
        if (stats.rel_residual <= tol) return stats;
        for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw convergence_error("cg did not reach tolerance", stats.iterations);
}

// Lower-band Cholesky, band[d * n + i] = A(i + d, i) for d = 0..bw.
class BandedCholesky {
public:
    BandedCholesky(std::size_t n, std::size_t bw) : n_(n), bw_(bw), band_((bw + 1) * n, 0.0) {}

    double& at(std::size_t row, std::size_t col) { return band_[(row - col) * n_ + col]; }
    double at(std::size_t row, std::size_t col) const { return band_[(row - col) * n_ + col]; }

    void factor() {
        for (std::size_t j = 0; j < n_; ++j) {
            double d = band_[j];
            const std::size_t kmin = j > bw_ ? j - bw_ : 0;
            for (std::size_t k = kmin; k < j; ++k) {
                const double ljk = band_[(j - k) * n_ + k];
                d -= ljk * ljk;
            }
            if (d <= 0.0) throw convergence_error("banded cholesky: non-positive pivot", j);
            const double lj = std::sqrt(d);
            band_[j] = lj;
            const std::size_t imax = std::min(n_ - 1, j + bw_);
            for (std::size_t i = j + 1; i <= imax; ++i) {
                double s = band_[(i - j) * n_ + j];
                const std::size_t k0 = i > bw_ ? i - bw_ : 0;
                for (std::size_t k = std::max(k0, kmin); k < j; ++k)
                    s -= band_[(i - k) * n_ + k] * band_[(j - k) * n_ + k];
                band_[(i - j) * n_ + j] = s / lj;
            }
        }
        factored_ = true;
    }

    void solve(std::vector<double>& rhs) const {
        // forward: L y = rhs
        for (std::size_t i = 0; i < n_; ++i) {
            double s = rhs[i];
            const std::size_t k0 = i > bw_ ? i - bw_ : 0;
            for (std::size_t k = k0; k < i; ++k) s -= band_[(i - k) * n_ + k] * rhs[k];
            rhs[i] = s / band_[i];
        }
        // backward: L^T x = y
        for (std::size_t i = n_; i-- > 0;) {
            double s = rhs[i];
            const std::size_t imax = std::min(n_ - 1, i + bw_);
            for (std::size_t k = i + 1; k <= imax; ++k) s -= band_[(k - i) * n_ + i] * rhs[k];
            rhs[i] = s / band_[i];
        }
    }

    bool factored() const { return factored_; }
    std::size_t size() const { return n_; }

private:
    std::size_t n_, bw_;
    std::vector<double> band_;
    bool factored_ = false;
};

// Cyclic Jacobi for a symmetric matrix (row-major, n x n). Returns eigenvalues
// and the orthonormal eigenvector matrix V (columns are eigenvectors),
// unsorted.
inline void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& eigenvalues,
                         std::vector<double>& eigenvectors) {
    eigenvectors.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigenvectors[i * n + i] = 1.0;
    if (n == 1) {
        eigenvalues = {a[0]};
        return;
    }
    double frob = 0.0;
    for (double v : a) frob += v * v;
    frob = std::sqrt(frob);
    const double stop = std::max(1e-300, 1e-14 * frob);

    for (std::size_t sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a[p * n + q] * a[p * n + q];
        if (std::sqrt(off) <= stop) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigenvectors[k * n + p], vkq = eigenvectors[k * n + q];
                    eigenvectors[k * n + p] = c * vkp - s * vkq;
                    eigenvectors[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i * n + i];
}

}  // namespace ddsm
