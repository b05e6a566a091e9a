#pragma once

#include "impulse_qvi/dynamics.hpp"
#include "impulse_qvi/solver.hpp"

#include <cmath>

namespace impulse_qvi {

/// V(t, x) from a solved surface: linear in t between layers, interpolate_slice in x.
inline double surface_value(const ValueSurface& s, double t, double x) {
    const auto& g = s.grid;
    const double pos = std::clamp(t / g.dt(s.horizon), 0.0, static_cast<double>(g.n_t));
    const auto lo = std::min(static_cast<std::size_t>(pos), g.n_t);
    const double w = pos - static_cast<double>(lo);
    const double v_lo = interpolate_slice(s.values.row(lo), g, x);
    if (w == 0.0 || lo == g.n_t) return v_lo;
    return (1.0 - w) * v_lo + w * interpolate_slice(s.values.row(lo + 1), g, x);
}

struct DppResidual {
    double residual = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

/// E[ int_t^theta rho_t (f - beta g2) ds - sum rho_t(tau_n) (K_n + kappa) + rho_t(theta) V(theta, X_theta) ] - V(t, x)
/// under `control` (normally the feedback policy of `sol`).
inline DppResidual dpp_residual(const ModelSpec& spec, const Solution& sol, const Control& control, double t, double x,
                                double theta, double dt, std::size_t n_paths, std::uint64_t seed) {
    if (theta == t) return {0.0, 0.0, n_paths};
    if (!(t < theta && theta <= spec.horizon)) throw SpecError("dpp_residual: need t < theta <= T");
    if (n_paths < 2) throw SpecError("dpp_residual: need at least two paths");
    detail::check_control(spec, t, control);
    const auto times = time_grid(t, theta, dt, control);
    const detail::Discounting disc(spec, times);
    const auto& u = spec.utilities;
    const auto& surface = sol.surface;
    std::vector<double> samples(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
        PathRecord rec;
        auto bm = path_engine(seed, i, Stream::brownian);
        detail::euler_path(spec, x, control, times, bm, rec);
        const std::size_t n = times.size();
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            acc += u.f(rec.states[k]) * disc.discounted_step[k];
            acc -= u.g2(rec.states[k]) * (disc.rho[k] - disc.rho[k + 1]);
        }
        for (const auto& imp : rec.impulses_applied) acc -= disc.rho[imp.step] * spec.costs.injection_cost(imp.size);
        acc += disc.rho[n - 1] * surface_value(surface, theta, rec.states[n - 1]);
        samples[i] = acc;
    });
    const auto m = mean_and_error(samples);
    return {m.mean - surface_value(surface, t, x), m.std_error, n_paths};
}

inline DppResidual dpp_residual(const ModelSpec& spec, const Solution& sol, double t, double x, double theta, double dt,
                                std::size_t n_paths, std::uint64_t seed) {
    return dpp_residual(spec, sol, Control{FeedbackPolicy(sol)}, t, x, theta, dt, n_paths, seed);
}

} // namespace impulse_qvi
