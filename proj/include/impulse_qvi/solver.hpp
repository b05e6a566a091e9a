#pragma once

#include "impulse_qvi/core.hpp"
#include "impulse_qvi/grid.hpp"
#include "impulse_qvi/model.hpp"
#include "impulse_qvi/tridiagonal.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace impulse_qvi {

/// Candidates within this (relative) distance of the maximum count as maximizers.
inline constexpr double kTieTolerance = 1e-12;

/// How the impulse constraint V >= IV enters each backward step.
enum class ImpulseScheme {
    /// Unconstrained implicit step, then v <- max(v, IV v) until stationary.
    projection,
    /// Implicit obstacle problem min(A v - b, v - IV v) = 0 each step: policy
    /// iteration for the local obstacle, fixed point in the nonlocal IV.
    implicit_obstacle,
};

struct SolverOptions {
    double inner_tol = 1e-9;
    ImpulseScheme scheme = ImpulseScheme::implicit_obstacle;
    /// Threshold on V - IV for the action label; negative means 10 * inner_tol.
    double eps_region = -1.0;

    [[nodiscard]] double region_threshold() const { return eps_region < 0.0 ? 10.0 * inner_tol : eps_region; }
};

/// V on the (n_t+1) x n_x grid, the impulse operator IV evaluated on it, and
/// per-layer bookkeeping of the projection iteration.
struct ValueSurface {
    Grid grid;
    double horizon = 1.0;
    Matrix values;
    Matrix impulse_values;
    std::vector<int> inner_iterations;
    std::vector<double> residuals;  ///< max(IV - V, 0) per layer after projection
    double inner_tol = 1e-9;
};

enum class Region : std::uint8_t { continuation = 0, action = 1 };

struct RegionMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Region> labels;
    double epsilon_region = 1e-8;

    [[nodiscard]] Region at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
    [[nodiscard]] bool is_action(std::size_t r, std::size_t c) const { return at(r, c) == Region::action; }
    [[nodiscard]] std::size_t action_count() const {
        return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Region::action));
    }
};

/// Optimal injection per node; NaN on continuation nodes.
struct PolicyMap {
    Matrix xi0;
};

struct Solution {
    ValueSurface surface;
    RegionMap regions;
    PolicyMap policy;
};

struct ImpulseResult {
    std::vector<double> values;
    std::vector<double> argmax;
};

namespace detail {

struct BestImpulse {
    double value;
    double size;
};

inline BestImpulse best_impulse(std::span<const double> v, const Grid& g, double x, std::span<const double> ks,
                                double kappa) {
    double best = -std::numeric_limits<double>::infinity();
    for (double k : ks) best = std::max(best, interpolate_slice(v, g, x + k) - (k + kappa));
    const double tie = kTieTolerance * (1.0 + std::abs(best));
    for (double k : ks)
        if (interpolate_slice(v, g, x + k) - (k + kappa) >= best - tie) return {best, k};
    return {best, ks.front()};
}

} // namespace detail

/// Discrete impulse operator: IV(x_i) = max_K V~(x_i + K) - (K + kappa) over the
/// impulse samples, with the smallest maximizing K as argmax.
inline ImpulseResult impulse_max(std::span<const double> v, const Grid& g, std::span<const double> ks,
                                 const CostParams& costs) {
    ImpulseResult out{std::vector<double>(v.size()), std::vector<double>(v.size())};
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto b = detail::best_impulse(v, g, g.x(i), ks, costs.kappa);
        out.values[i] = b.value;
        out.argmax[i] = b.size;
    }
    return out;
}

inline ImpulseResult impulse_max(std::span<const double> v, const Grid& g, const CostParams& costs) {
    const auto ks = impulse_samples(costs, g.n_k);
    return impulse_max(v, g, ks, costs);
}

struct StepSystem {
    Tridiagonal matrix;
    std::vector<double> rhs;
};

/// Backward-Euler system for the continuation PDE
///   -V_t - mu V_x - 1/2 sigma^2 V_xx - f + beta (V + g2) = 0
/// from layer t + dt to layer t, upwinded drift and central diffusion.
/// Closure: linear extrapolation at x_min, flat (Neumann) at x_max.
inline StepSystem assemble_step(std::span<const double> v_next, double t, double dt, const Grid& g,
                                const ModelSpec& spec) {
    const std::size_t n = g.n_x;
    if (v_next.size() != n) throw SolverError("pde_step: slice size does not match grid");
    const double h = g.h();
    const double beta = spec.beta(t);
    const auto& u = spec.utilities;

    StepSystem sys{Tridiagonal(n), std::vector<double>(n)};
    auto& m = sys.matrix;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = g.x(i);
        const double mu = drift(t, x, spec);
        const double sig = diffusion(t, x, spec);
        const double diff = 0.5 * sig * sig / (h * h);
        const double up = std::max(mu, 0.0) / h;
        const double down = std::max(-mu, 0.0) / h;
        sys.rhs[i] = v_next[i] + dt * (u.f(x) - beta * u.g2(x));
        if (i == 0) {
            // V_xx = 0; both one-sided differences coincide under linear extrapolation.
            m.diag[i] = 1.0 + beta * dt + dt * mu / h;
            m.upper[i] = -dt * mu / h;
        } else if (i + 1 == n) {
            m.lower[i] = -dt * (diff + down);
            m.diag[i] = 1.0 + beta * dt + dt * (diff + down);
        } else {
            m.lower[i] = -dt * (diff + down);
            m.upper[i] = -dt * (diff + up);
            m.diag[i] = 1.0 + beta * dt + dt * (2.0 * diff + up + down);
        }
    }
    return sys;
}

/// One implicit step of the continuation PDE; returns the continuation value at t.
inline std::vector<double> pde_step(std::span<const double> v_next, double t, double dt, const Grid& g,
                                    const ModelSpec& spec) {
    const auto sys = assemble_step(v_next, t, dt, g, spec);
    return solve_tridiagonal(sys.matrix, sys.rhs);
}

/// Solves min(A v - b, v - psi) = 0 by policy iteration; every iterate is a
/// tridiagonal M-matrix solve. `v` holds the initial guess and the result.
/// Returns the number of policy updates.
inline int solve_obstacle_step(const StepSystem& sys, std::span<const double> psi, std::vector<double>& v) {
    const std::size_t n = sys.rhs.size();
    std::vector<char> pinned(n, 0);
    for (std::size_t i = 0; i < n; ++i) pinned[i] = v[i] <= psi[i] ? 1 : 0;
    Tridiagonal m(n);
    std::vector<double> rhs(n);
    for (int it = 1;; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            if (pinned[i]) {
                m.lower[i] = 0.0;
                m.diag[i] = 1.0;
                m.upper[i] = 0.0;
                rhs[i] = psi[i];
            } else {
                m.lower[i] = sys.matrix.lower[i];
                m.diag[i] = sys.matrix.diag[i];
                m.upper[i] = sys.matrix.upper[i];
                rhs[i] = sys.rhs[i];
            }
        }
        v = solve_tridiagonal(m, rhs);
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            double av = sys.matrix.diag[i] * v[i] - sys.rhs[i];
            if (i > 0) av += sys.matrix.lower[i] * v[i - 1];
            if (i + 1 < n) av += sys.matrix.upper[i] * v[i + 1];
            const char want = (v[i] - psi[i] < av) ? 1 : 0;
            if (want != pinned[i]) {
                pinned[i] = want;
                changed = true;
            }
        }
        if (!changed) return it;
        if (it > static_cast<int>(2 * n + 2)) throw SolverError("obstacle policy iteration did not converge");
    }
}

/// Upper bound C1 = C_f T + C_g1 (plus the largest default reward -g2, if any)
/// with bounds taken from the spec or sampled on the grid.
inline double value_upper_bound(const ModelSpec& spec, const Grid& g) {
    const auto& u = spec.utilities;
    double sup_f = -std::numeric_limits<double>::infinity();
    double sup_g1 = sup_f;
    double inf_g2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.n_x; ++i) {
        const double x = g.x(i);
        sup_f = std::max(sup_f, u.f(x));
        sup_g1 = std::max(sup_g1, u.g1(x));
        inf_g2 = std::min(inf_g2, u.g2(x));
    }
    const double cf = u.bound_f.value_or(sup_f);
    const double cg1 = u.bound_g1.value_or(sup_g1);
    return std::max(cf, 0.0) * spec.horizon + std::max(cg1, 0.0) + std::max(-inf_g2, 0.0);
}

/// Projects a continuation slice onto {V >= IV} by the fixed point v <- max(v, IV v).
/// Returns the number of sweeps. Every profitable sweep gains at least kappa somewhere,
/// so (upper - min v) / kappa + 1 sweeps certify termination.
inline int project_impulses(std::vector<double>& v, const Grid& g, std::span<const double> ks,
                            const CostParams& costs, double upper, double tol) {
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = std::max(upper, *std::max_element(v.begin(), v.end()));
    const int cap = static_cast<int>(std::ceil((hi - lo) / costs.kappa)) + 1;
    for (int sweep = 1;; ++sweep) {
        const auto iv = impulse_max(v, g, ks, costs);
        double update = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (iv.values[i] > v[i]) {
                update = std::max(update, iv.values[i] - v[i]);
                v[i] = iv.values[i];
            }
        }
        if (update <= tol) return sweep;
        if (sweep > cap)
            throw SolverError("impulse projection did not converge within " + std::to_string(cap) +
                              " sweeps (last update " + std::to_string(update) + ")");
    }
}

/// Fixed point v <- solution of min(A v - b, v - IV v_prev) = 0, started from the
/// unconstrained solution; iterates increase monotonically. Same termination cap
/// as project_impulses.
inline int implicit_impulses(const StepSystem& sys, std::vector<double>& v, const Grid& g, std::span<const double> ks,
                             const CostParams& costs, double upper, double tol) {
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = std::max(upper, *std::max_element(v.begin(), v.end()));
    const int cap = static_cast<int>(std::ceil((hi - lo) / costs.kappa)) + 1;
    for (int sweep = 1;; ++sweep) {
        const auto iv = impulse_max(v, g, ks, costs);
        bool binding = false;
        for (std::size_t i = 0; i < v.size() && !binding; ++i) binding = iv.values[i] > v[i];
        if (!binding) return sweep;
        std::vector<double> next = v;
        solve_obstacle_step(sys, iv.values, next);
        const double update = sup_norm_diff(next, v);
        v = std::move(next);
        if (update <= tol) return sweep;
        if (sweep > cap)
            throw SolverError("implicit impulse iteration did not converge within " + std::to_string(cap) +
                              " sweeps (last update " + std::to_string(update) + ")");
    }
}

/// Labels and injections from a solved surface.
inline void classify(const ValueSurface& s, double eps_region, RegionMap& regions, PolicyMap& policy,
                     const CostParams& costs) {
    const std::size_t rows = s.values.rows();
    const std::size_t cols = s.values.cols();
    const auto ks = impulse_samples(costs, s.grid.n_k);
    regions = RegionMap{rows, cols, std::vector<Region>(rows * cols, Region::continuation), eps_region};
    policy.xi0 = Matrix(rows, cols, kNaN);
    // The action region lives on [0, T); the terminal layer stays continuation.
    for (std::size_t r = 0; r + 1 < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (s.values(r, c) - s.impulse_values(r, c) <= eps_region) {
                regions.labels[r * cols + c] = Region::action;
                policy.xi0(r, c) = detail::best_impulse(s.values.row(r), s.grid, s.grid.x(c), ks, costs.kappa).size;
            }
        }
    }
}

/// Backward induction for the QVI: terminal layer g1, then per step an implicit
/// continuation solve followed by the impulse projection.
inline Solution solve(const ModelSpec& spec, const Grid& g, const SolverOptions& opt = {}) {
    spec.check();
    g.check();
    const std::size_t nt = g.n_t;
    const std::size_t nx = g.n_x;
    const double dt = g.dt(spec.horizon);
    const auto ks = impulse_samples(spec.costs, g.n_k);
    const double upper = value_upper_bound(spec, g);

    Solution sol;
    ValueSurface& s = sol.surface;
    s.grid = g;
    s.horizon = spec.horizon;
    s.inner_tol = opt.inner_tol;
    s.values = Matrix(nt + 1, nx);
    s.impulse_values = Matrix(nt + 1, nx);
    s.inner_iterations.assign(nt + 1, 0);
    s.residuals.assign(nt + 1, 0.0);

    for (std::size_t i = 0; i < nx; ++i) s.values(nt, i) = spec.utilities.g1(g.x(i));
    auto record_layer = [&](std::size_t r) {
        const auto iv = impulse_max(s.values.row(r), g, ks, spec.costs);
        double res = 0.0;
        for (std::size_t i = 0; i < nx; ++i) {
            s.impulse_values(r, i) = iv.values[i];
            res = std::max(res, iv.values[i] - s.values(r, i));
        }
        s.residuals[r] = res;
    };
    record_layer(nt);

    for (std::size_t r = nt; r-- > 0;) {
        const auto sys = assemble_step(s.values.row(r + 1), g.t(r, spec.horizon), dt, g, spec);
        auto v = solve_tridiagonal(sys.matrix, sys.rhs);
        if (opt.scheme == ImpulseScheme::projection)
            s.inner_iterations[r] = project_impulses(v, g, ks, spec.costs, upper, opt.inner_tol);
        else
            s.inner_iterations[r] = implicit_impulses(sys, v, g, ks, spec.costs, upper, opt.inner_tol);
        std::copy(v.begin(), v.end(), s.values.row(r).begin());
        record_layer(r);
    }

    classify(s, opt.region_threshold(), sol.regions, sol.policy, spec.costs);
    return sol;
}

/// Smallest maximizer of K -> V~(t, x + K) - (K + kappa) at the nearest layer.
/// Requires (t, x) to be an action node; checks that the landing point is
/// continuation within one grid cell.
inline double extract_injection(double t, double x, const Solution& sol, const CostParams& costs) {
    const auto& s = sol.surface;
    const auto& g = s.grid;
    const std::size_t r = g.nearest_row(t, s.horizon);
    const std::size_t c = g.nearest_node(x);
    if (!sol.regions.is_action(r, c)) throw SpecError("extract_injection: (t, x) is in the continuation region");
    const auto ks = impulse_samples(costs, g.n_k);
    const double xi = detail::best_impulse(s.values.row(r), g, x, ks, costs.kappa).size;
    const double landing = x + xi;
    if (landing >= g.x_max) return xi;
    const std::size_t j = g.nearest_node(landing);
    const bool ok = !sol.regions.is_action(r, j) || (j + 1 < g.n_x && !sol.regions.is_action(r, j + 1)) ||
                    (j > 0 && !sol.regions.is_action(r, j - 1));
    if (!ok) throw SolverError("extract_injection: post-injection state is not in the continuation region");
    return xi;
}

/// Value of the never-intervene strategy when every coefficient entering it is constant;
/// then V is state-independent and no injection can be profitable.
inline std::optional<double> no_intervention_value(const ModelSpec& spec, double t) {
    const auto& u = spec.utilities;
    if (!u.f.is_constant() || !u.g1.is_constant() || !u.g2.is_constant() || !spec.beta.is_constant())
        return std::nullopt;
    const double f0 = u.f(0.0);
    const double g10 = u.g1(0.0);
    const double g20 = u.g2(0.0);
    const double b0 = spec.beta(0.0);
    const double tau = spec.horizon - t;
    if (b0 == 0.0) return f0 * tau + g10;
    return (f0 - b0 * g20) * (-std::expm1(-b0 * tau)) / b0 + std::exp(-b0 * tau) * g10;
}

} // namespace impulse_qvi
