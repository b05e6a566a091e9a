#pragma once

#include "impulse_qvi/core.hpp"
#include "impulse_qvi/model.hpp"

#include <cmath>
#include <vector>

namespace impulse_qvi {

/// Uniform discretization of [0,T] x [x_min, x_max] and of the impulse set A.
struct Grid {
    double x_min = 0.1;
    double x_max = 3.0;
    std::size_t n_x = 101;
    std::size_t n_t = 100;
    std::size_t n_k = 50;

    void check() const {
        if (!(x_min < x_max)) throw SpecError("grid: x_min must be below x_max");
        if (n_x < 3) throw SpecError("grid: need at least 3 space nodes");
        if (n_t < 1) throw SpecError("grid: need at least one time step");
        if (n_k < 1) throw SpecError("grid: need at least one impulse sample");
    }

    [[nodiscard]] double h() const noexcept { return (x_max - x_min) / static_cast<double>(n_x - 1); }
    [[nodiscard]] double x(std::size_t i) const noexcept {
        return i + 1 == n_x ? x_max : x_min + h() * static_cast<double>(i);
    }
    [[nodiscard]] double dt(double horizon) const noexcept { return horizon / static_cast<double>(n_t); }
    [[nodiscard]] double t(std::size_t j, double horizon) const noexcept {
        return j == n_t ? horizon : dt(horizon) * static_cast<double>(j);
    }

    [[nodiscard]] std::vector<double> nodes() const {
        std::vector<double> xs(n_x);
        for (std::size_t i = 0; i < n_x; ++i) xs[i] = x(i);
        return xs;
    }

    /// Nearest node index, clamped to the grid.
    [[nodiscard]] std::size_t nearest_node(double y) const noexcept {
        const double r = std::round((y - x_min) / h());
        if (!(r > 0.0)) return 0;
        return std::min(static_cast<std::size_t>(r), n_x - 1);
    }
    [[nodiscard]] std::size_t nearest_row(double s, double horizon) const noexcept {
        const double r = std::round(s / dt(horizon));
        if (!(r > 0.0)) return 0;
        return std::min(static_cast<std::size_t>(r), n_t);
    }

    bool operator==(const Grid&) const = default;
};

/// Evaluates a slice of nodal values at an arbitrary state: linear interpolation
/// inside the grid, flat above x_max, linear continuation of the lowest cell below x_min.
inline double interpolate_slice(std::span<const double> v, const Grid& g, double y) {
    const std::size_t n = v.size();
    if (y >= g.x_max) return v[n - 1];
    const double h = g.h();
    if (y <= g.x_min) return v[0] + (y - g.x_min) * (v[1] - v[0]) / h;
    const double r = (y - g.x_min) / h;
    std::size_t i = static_cast<std::size_t>(r);
    if (i >= n - 1) i = n - 2;
    const double w = r - static_cast<double>(i);
    return v[i] + w * (v[i + 1] - v[i]);
}

} // namespace impulse_qvi
