#pragma once

#include "impulse_qvi/core.hpp"

#include <span>
#include <vector>

namespace impulse_qvi {

/// Tridiagonal system: lower[i] multiplies x[i-1], upper[i] multiplies x[i+1].
/// lower[0] and upper[n-1] are ignored.
struct Tridiagonal {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;

    explicit Tridiagonal(std::size_t n) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0) {}
    [[nodiscard]] std::size_t size() const noexcept { return diag.size(); }
};

/// Thomas algorithm. Throws SolverError on a vanishing pivot, which cannot
/// happen for the diagonally dominant M-matrices assembled by pde_step.
inline std::vector<double> solve_tridiagonal(const Tridiagonal& m, std::span<const double> rhs) {
    const std::size_t n = m.size();
    if (rhs.size() != n || n == 0) throw SolverError("solve_tridiagonal: size mismatch");
    std::vector<double> c(n), d(n), x(n);
    double pivot = m.diag[0];
    if (pivot == 0.0 || !std::isfinite(pivot)) throw SolverError("solve_tridiagonal: singular system");
    c[0] = m.upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = m.diag[i] - m.lower[i] * c[i - 1];
        if (pivot == 0.0 || !std::isfinite(pivot)) throw SolverError("solve_tridiagonal: singular system");
        c[i] = (i + 1 < n) ? m.upper[i] / pivot : 0.0;
        d[i] = (rhs[i] - m.lower[i] * d[i - 1]) / pivot;
    }
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
    return x;
}

} // namespace impulse_qvi
