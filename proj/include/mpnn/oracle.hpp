#pragma once

// Finite-difference eigensolvers used to certify the closed-form states.
// The Hamiltonian -1/2 d2/dx2 + V on a uniform grid with Dirichlet ends is a
// symmetric tridiagonal matrix over the interior points; its lowest
// eigenvalues come from Sturm-sequence bisection and the eigenvectors from
// inverse iteration.

#include "mpnn/errors.hpp"
#include "mpnn/trainer.hpp"
#include "mpnn/wavefunction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace mpnn::oracle {

struct Grid1D {
    double lo = 0.0;
    double hi = 1.0;
    long n = 3; // points including both Dirichlet ends

    double spacing() const { return (hi - lo) / static_cast<double>(n - 1); }
    double x(long i) const { return i == n - 1 ? hi : lo + static_cast<double>(i) * spacing(); }

    void validate() const {
        if (n < 3) throw InputError("grid needs at least 3 points");
        if (!(hi > lo)) throw InputError("grid needs hi > lo");
    }
};

struct Eigenpair {
    double energy = 0.0;
    std::vector<double> vector; // on all n grid points, zero at both ends, sum |v|^2 h = 1
};

/// Symmetric tridiagonal matrix: diag[0..m), off[0..m-1).
struct Tridiagonal {
    std::vector<double> diag;
    std::vector<double> off;

    long size() const { return static_cast<long>(diag.size()); }

    /// Number of eigenvalues strictly below `x`.
    long count_below(double x) const {
        long count = 0;
        double q = 1.0;
        const double tiny = std::numeric_limits<double>::min();
        for (long i = 0; i < size(); ++i) {
            const double b2 = i == 0 ? 0.0 : off[i - 1] * off[i - 1];
            q = diag[i] - x - (i == 0 ? 0.0 : b2 / q);
            if (q == 0.0) q = -tiny;
            if (q < 0.0) ++count;
        }
        return count;
    }

    /// k-th smallest eigenvalue (0-based) by bisection.
    double eigenvalue(long k) const {
        double lo = std::numeric_limits<double>::max();
        double hi = std::numeric_limits<double>::lowest();
        for (long i = 0; i < size(); ++i) {
            const double r = (i > 0 ? std::abs(off[i - 1]) : 0.0) + (i + 1 < size() ? std::abs(off[i]) : 0.0);
            lo = std::min(lo, diag[i] - r);
            hi = std::max(hi, diag[i] + r);
        }
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            (count_below(mid) > k ? hi : lo) = mid;
        }
        return 0.5 * (lo + hi);
    }

    /// Solves (T - shift I) y = rhs by Gaussian elimination with partial pivoting.
    std::vector<double> solve_shifted(double shift, std::vector<double> rhs) const {
        const long m = size();
        std::vector<double> d(diag), du(off), dl(off), du2(static_cast<std::size_t>(std::max<long>(m - 2, 0)), 0.0);
        for (auto& v : d) v -= shift;
        du.resize(static_cast<std::size_t>(std::max<long>(m - 1, 0)));
        const double tiny = 1e-300;
        for (long i = 0; i + 1 < m; ++i) {
            if (std::abs(d[i]) >= std::abs(dl[i])) {
                if (d[i] == 0.0) d[i] = tiny;
                const double f = dl[i] / d[i];
                d[i + 1] -= f * du[i];
                rhs[i + 1] -= f * rhs[i];
                dl[i] = f;
            } else {
                const double f = d[i] / dl[i];
                d[i] = dl[i];
                std::swap(du[i], d[i + 1]);
                d[i + 1] -= f * du[i];
                if (i + 2 < m) {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du[i + 1];
                }
                std::swap(rhs[i], rhs[i + 1]);
                rhs[i + 1] -= f * rhs[i];
                dl[i] = f;
            }
        }
        if (d[m - 1] == 0.0) d[m - 1] = tiny;
        std::vector<double> y(rhs);
        for (long i = m - 1; i >= 0; --i) {
            double s = y[i];
            if (i + 1 < m) s -= du[i] * y[i + 1];
            if (i + 2 < m) s -= du2[i] * y[i + 2];
            y[i] = s / d[i];
        }
        return y;
    }

    std::vector<double> eigenvector(double lambda) const {
        const long m = size();
        std::vector<double> v(static_cast<std::size_t>(m));
        for (long i = 0; i < m; ++i) v[i] = 1.0 + 0.01 * std::sin(0.7 * static_cast<double>(i)); // generic start
        const double shift = lambda + 1e-12 * std::max(1.0, std::abs(lambda));
        for (int it = 0; it < 4; ++it) {
            v = solve_shifted(shift, v);
            double norm = 0.0;
            for (double e : v) norm += e * e;
            norm = std::sqrt(norm);
            if (!std::isfinite(norm) || norm == 0.0) throw NumericalError("inverse iteration failed");
            for (double& e : v) e /= norm;
        }
        return v;
    }
};

namespace detail {

inline std::vector<Eigenpair> solve_lowest(const Tridiagonal& t, const Grid1D& grid, long k) {
    if (k < 1 || k > t.size()) throw InputError("requested state count must be in [1, interior points]");
    const double h = grid.spacing();
    std::vector<Eigenpair> out;
    for (long s = 0; s < k; ++s) {
        Eigenpair e;
        e.energy = t.eigenvalue(s);
        if (!std::isfinite(e.energy)) throw NumericalError("eigensolve produced a non-finite energy");
        const auto v = t.eigenvector(e.energy);
        e.vector.assign(static_cast<std::size_t>(grid.n), 0.0);
        double norm = 0.0;
        for (long i = 0; i < t.size(); ++i) norm += v[i] * v[i] * h;
        norm = std::sqrt(norm);
        // sign convention: first significant lobe positive
        double sign = 1.0;
        for (double c : v)
            if (std::abs(c) > 1e-3) {
                sign = c > 0 ? 1.0 : -1.0;
                break;
            }
        for (long i = 0; i < t.size(); ++i) e.vector[static_cast<std::size_t>(i + 1)] = sign * v[i] / norm;
        out.push_back(std::move(e));
    }
    return out;
}

inline Tridiagonal hamiltonian(const Grid1D& grid, const std::function<double(double)>& potential) {
    grid.validate();
    const double h = grid.spacing();
    const long m = grid.n - 2;
    Tridiagonal t;
    t.diag.resize(static_cast<std::size_t>(m));
    t.off.assign(static_cast<std::size_t>(std::max<long>(m - 1, 0)), -0.5 / (h * h));
    for (long i = 0; i < m; ++i) {
        const double v = potential(grid.x(i + 1));
        if (!std::isfinite(v)) throw InputError("potential is not finite on the grid");
        t.diag[i] = 1.0 / (h * h) + v;
    }
    return t;
}

} // namespace detail

/// Lowest k eigenpairs of -1/2 d2/dx2 + V(x) with Dirichlet ends, ascending.
inline std::vector<Eigenpair> fd_eigensolve_1d(const std::function<double(double)>& potential, const Grid1D& grid,
                                               long k) {
    return detail::solve_lowest(detail::hamiltonian(grid, potential), grid, k);
}

/// Radial problem for u(rho) = rho R(rho):
///   -1/2 u'' + (V(rho) + l(l+1)/(2 rho^2)) u = E u,  u = 0 at both ends.
inline std::vector<Eigenpair> fd_eigensolve_radial(int l, const std::function<double(double)>& potential,
                                                   const Grid1D& grid, long k) {
    if (!(grid.lo > 0.0)) throw InputError("radial grid must start at rho > 0");
    if (l < 0) throw InputError("angular momentum must be >= 0");
    const double centrifugal = 0.5 * l * (l + 1);
    return detail::solve_lowest(
        detail::hamiltonian(grid, [&](double rho) { return potential(rho) + centrifugal / (rho * rho); }), grid, k);
}

struct ResidualReport {
    double max_abs = 0.0;
    double rms = 0.0;
    double energy = 0.0; // the scalar E minimizing sum |(H - E) psi|^2
    long used = 0;
    long excluded = 0;
};

/// Residual of [-lap/2 + U - E] psi over the valid points of `points`, with E
/// fitted by least squares.
template <PotentialModel M>
ResidualReport schrodinger_residual(const WavefunctionSpec& spec, const M& model, const Eigen::MatrixXd& points) {
    if (points.rows() != spec.dim()) throw InputError("point dimension does not match wavefunction");
    const auto dim = static_cast<std::size_t>(spec.dim());
    std::vector<long> keep;
    for (long i = 0; i < points.cols(); ++i)
        if (is_valid_point(spec, Coordinate(points.col(i).data(), dim))) keep.push_back(i);
    ResidualReport r;
    r.used = static_cast<long>(keep.size());
    r.excluded = points.cols() - r.used;
    if (r.used == 0) return r;
    Eigen::MatrixXd pts(spec.dim(), r.used);
    for (long j = 0; j < r.used; ++j) pts.col(j) = points.col(keep[static_cast<std::size_t>(j)]);
    const Eigen::RowVectorXd u = evaluate_potential(model, pts);
    std::vector<double> h_psi(static_cast<std::size_t>(r.used)), psis(static_cast<std::size_t>(r.used));
    double num = 0.0, den = 0.0;
    for (long j = 0; j < r.used; ++j) {
        const Coordinate c(pts.col(j).data(), dim);
        const double p = psi(spec, c);
        h_psi[j] = -0.5 * laplacian_psi(spec, c) + u[j] * p;
        psis[j] = p;
        num += h_psi[j] * p;
        den += p * p;
    }
    r.energy = num / den;
    double sq = 0.0;
    for (long j = 0; j < r.used; ++j) {
        const double res = h_psi[j] - r.energy * psis[j];
        r.max_abs = std::max(r.max_abs, std::abs(res));
        sq += res * res;
    }
    r.rms = std::sqrt(sq / static_cast<double>(r.used));
    return r;
}

} // namespace mpnn::oracle
