#pragma once

#include "impulse_qvi/dpp.hpp"
#include "impulse_qvi/dynamics.hpp"
#include "impulse_qvi/solver.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace impulse_qvi {

/// Outcome of one verification check over solved artifacts.
struct CheckReport {
    std::string name;
    std::string operation;  ///< what was measured and how
    bool passed = false;
    bool vacuous = false;   ///< nothing to check (e.g. empty action region)
    double measured = 0.0;
    double threshold = 0.0;
    double worst_t = kNaN;
    double worst_x = kNaN;
    double runtime_seconds = 0.0;
    std::vector<std::string> notes;
};

namespace detail {

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline CheckReport report(std::string name, std::string operation, bool passed, bool vacuous, double measured = 0.0,
                          double threshold = 0.0) {
    CheckReport r;
    r.name = std::move(name);
    r.operation = std::move(operation);
    r.passed = passed;
    r.vacuous = vacuous;
    r.measured = measured;
    r.threshold = threshold;
    return r;
}

inline std::string domain_note(const Grid& g) {
    std::string s = "domain x in [" + std::to_string(g.x_min) + ", " + std::to_string(g.x_max) + "]";
    if (g.x_min <= 0.0) s += "; x_min <= 0 so diffusion degenerates inside the domain";
    return s;
}

/// max |V_{i+1} - 2 V_i + V_{i-1}| / 8 on one layer: the linear-interpolation error scale.
inline double interpolation_error(std::span<const double> v) {
    double m = 0.0;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) m = std::max(m, std::abs(v[i + 1] - 2.0 * v[i] + v[i - 1]));
    return m / 8.0;
}

inline bool lands_in_continuation(const Solution& sol, std::size_t r, double y) {
    const auto& g = sol.surface.grid;
    if (y >= g.x_max) return true;
    const std::size_t j = g.nearest_node(y);
    return !sol.regions.is_action(r, j) || (j + 1 < g.n_x && !sol.regions.is_action(r, j + 1)) ||
           (j > 0 && !sol.regions.is_action(r, j - 1));
}

} // namespace detail

/// Rebuilds IV, regions and injections from the stored values only; used for
/// surfaces read back from disk or edited by hand.
inline Solution rebuild_solution(ValueSurface surface, const CostParams& costs, double eps_region) {
    const auto ks = impulse_samples(costs, surface.grid.n_k);
    surface.impulse_values = Matrix(surface.values.rows(), surface.values.cols());
    surface.residuals.assign(surface.values.rows(), 0.0);
    if (surface.inner_iterations.size() != surface.values.rows()) surface.inner_iterations.assign(surface.values.rows(), 0);
    for (std::size_t r = 0; r < surface.values.rows(); ++r) {
        const auto iv = impulse_max(surface.values.row(r), surface.grid, ks, costs);
        double res = 0.0;
        for (std::size_t c = 0; c < surface.values.cols(); ++c) {
            surface.impulse_values(r, c) = iv.values[c];
            res = std::max(res, iv.values[c] - surface.values(r, c));
        }
        surface.residuals[r] = res;
    }
    Solution sol;
    sol.surface = std::move(surface);
    classify(sol.surface, eps_region, sol.regions, sol.policy, costs);
    return sol;
}

/// V(T, .) = g1 exactly; also reports the first interior layer against g1.
inline CheckReport check_terminal(const ValueSurface& s, const ModelSpec& spec) {
    detail::Stopwatch sw;
    auto r = detail::report("terminal", "max |V(T,x) - g1(x)| over the grid", true, false, 0.0, 0.0);
    const std::size_t nt = s.grid.n_t;
    double prev_gap = 0.0;
    for (std::size_t c = 0; c < s.grid.n_x; ++c) {
        const double g1 = spec.utilities.g1(s.grid.x(c));
        const double gap = std::abs(s.values(nt, c) - g1);
        if (gap > r.measured) {
            r.measured = gap;
            r.worst_t = s.horizon;
            r.worst_x = s.grid.x(c);
        }
        if (nt > 0) prev_gap = std::max(prev_gap, std::abs(s.values(nt - 1, c) - g1));
    }
    r.passed = r.measured == 0.0;
    r.notes.push_back("max |V(T-dt,x) - g1(x)| = " + std::to_string(prev_gap));
    r.runtime_seconds = sw.seconds();
    return r;
}

/// min over all nodes of V - IV must be >= -tol (IV recomputed from V).
inline CheckReport check_obstacle(const ValueSurface& s, const CostParams& costs, double tol) {
    detail::Stopwatch sw;
    auto r = detail::report("obstacle", "min over nodes of V - IV, IV recomputed by impulse_max", false, false, 0.0, -tol);
    const auto ks = impulse_samples(costs, s.grid.n_k);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t row = 0; row < s.values.rows(); ++row) {
        const auto iv = impulse_max(s.values.row(row), s.grid, ks, costs);
        for (std::size_t c = 0; c < s.values.cols(); ++c) {
            const double gap = s.values(row, c) - iv.values[c];
            if (gap < worst) {
                worst = gap;
                r.worst_t = s.grid.t(row, s.horizon);
                r.worst_x = s.grid.x(c);
            }
        }
    }
    r.measured = worst;
    r.passed = worst >= -tol;
    r.runtime_seconds = sw.seconds();
    return r;
}

struct MonteCarloSettings {
    std::size_t n_paths = 2000;
    double dt = 0.01;
    std::uint64_t seed = 1;
};

/// Upper bound V <= C1 = C_f T + C_g1 and lower bound V >= -C0 (1 + |x|), with C0
/// the smallest constant that covers the trivial-control Monte Carlo values (3 SE).
/// With n_paths == 0 the trivial-control lower estimate is skipped.
inline CheckReport check_bounds(const ValueSurface& s, const ModelSpec& spec, const MonteCarloSettings& mc,
                                double tol = 1e-8) {
    detail::Stopwatch sw;
    const auto& g = s.grid;
    auto r = detail::report("bounds", "C1 >= V >= -C0(1+|x|); C0 fitted to trivial-control MC minus 3 SE", false, false);
    const double c1 = value_upper_bound(spec, g);
    double vmax = -std::numeric_limits<double>::infinity();
    for (std::size_t row = 0; row < s.values.rows(); ++row)
        for (std::size_t c = 0; c < s.values.cols(); ++c)
            if (s.values(row, c) > vmax) {
                vmax = s.values(row, c);
                r.worst_t = g.t(row, s.horizon);
                r.worst_x = g.x(c);
            }
    const double upper_margin = c1 - vmax;

    double c0 = 0.0;
    bool trivial_ok = true;
    double worst_trivial_gap = std::numeric_limits<double>::infinity();
    const double scheme_budget = g.dt(s.horizon) + g.h();
    if (mc.n_paths >= 2) {
        const ImpulseSchedule none;
        for (std::size_t tr : {std::size_t{0}, g.n_t / 4, g.n_t / 2, (3 * g.n_t) / 4}) {
            if (tr >= g.n_t) continue;
            for (std::size_t k = 0; k < 5; ++k) {
                const std::size_t c = (k * (g.n_x - 1)) / 4;
                const double t = g.t(tr, s.horizon);
                const double x = g.x(c);
                const auto est = mc_cost_f(spec, none, {t, x, mc.dt, mc.n_paths, mc.seed + 7919 * tr + c});
                const double lower = est.estimate - 3.0 * est.std_error;
                c0 = std::max(c0, -lower / (1.0 + std::abs(x)));
                const double gap = s.values(tr, c) - (lower - scheme_budget);
                worst_trivial_gap = std::min(worst_trivial_gap, gap);
                if (gap < -tol) trivial_ok = false;
            }
        }
        r.notes.push_back("V - (J_trivial - 3SE - (dt+h)) minimum over samples: " + std::to_string(worst_trivial_gap));
    } else {
        r.notes.push_back("no Monte Carlo paths requested; C0 fitted to the surface itself");
    }
    double lower_margin = std::numeric_limits<double>::infinity();
    for (std::size_t row = 0; row < s.values.rows(); ++row)
        for (std::size_t c = 0; c < s.values.cols(); ++c) {
            const double x = g.x(c);
            if (mc.n_paths < 2) c0 = std::max(c0, -s.values(row, c) / (1.0 + std::abs(x)));
        }
    for (std::size_t row = 0; row < s.values.rows(); ++row)
        for (std::size_t c = 0; c < s.values.cols(); ++c)
            lower_margin = std::min(lower_margin, s.values(row, c) + c0 * (1.0 + std::abs(g.x(c))));

    r.measured = std::min(upper_margin, lower_margin);
    r.threshold = -tol;
    r.passed = upper_margin >= -tol && lower_margin >= -tol && trivial_ok;
    r.notes.push_back("C1 = " + std::to_string(c1) + ", upper margin C1 - max V = " + std::to_string(upper_margin));
    r.notes.push_back("C0 = " + std::to_string(c0) + ", lower margin = " + std::to_string(lower_margin));
    r.runtime_seconds = sw.seconds();
    return r;
}

struct RegularityProxies {
    double lipschitz_x = 0.0;
    double holder_t = 0.0;
};

/// Lipschitz-in-x proxy (max difference quotient) and 1/2-Hoelder-in-t proxy
/// max |V(t+d,x) - V(t,x)| / ((1+|x|) sqrt(d)) over fixed lags d in {T/2, T/4, T/8}.
inline RegularityProxies regularity_proxies(const ValueSurface& s) {
    const auto& g = s.grid;
    RegularityProxies p;
    const double h = g.h();
    for (std::size_t row = 0; row < s.values.rows(); ++row)
        for (std::size_t c = 0; c + 1 < g.n_x; ++c)
            p.lipschitz_x = std::max(p.lipschitz_x, std::abs(s.values(row, c + 1) - s.values(row, c)) / h);
    for (std::size_t div : {2u, 4u, 8u}) {
        if (g.n_t % div != 0) continue;
        const std::size_t lag = g.n_t / div;
        const double d = s.horizon / static_cast<double>(div);
        for (std::size_t row = 0; row + lag <= g.n_t; row += lag)
            for (std::size_t c = 0; c < g.n_x; ++c) {
                const double q = std::abs(s.values(row + lag, c) - s.values(row, c)) /
                                 ((1.0 + std::abs(g.x(c))) * std::sqrt(d));
                p.holder_t = std::max(p.holder_t, q);
            }
    }
    return p;
}

/// Both proxies finite and within 10% between two resolutions.
inline CheckReport check_regularity(const ValueSurface& coarse, const ValueSurface& fine) {
    detail::Stopwatch sw;
    auto r = detail::report("regularity", "relative change of Lipschitz-x and Hoelder-t proxies between two resolutions",
                  false, false, 0.0, 0.10);
    const auto a = regularity_proxies(coarse);
    const auto b = regularity_proxies(fine);
    auto rel = [](double x, double y) {
        const double scale = std::max(std::abs(x), std::abs(y));
        return scale < 1e-12 ? 0.0 : std::abs(x - y) / scale;
    };
    const double dl = rel(a.lipschitz_x, b.lipschitz_x);
    const double dh = rel(a.holder_t, b.holder_t);
    r.measured = std::max(dl, dh);
    const bool finite = std::isfinite(a.lipschitz_x) && std::isfinite(b.lipschitz_x) && std::isfinite(a.holder_t) &&
                        std::isfinite(b.holder_t);
    r.passed = finite && r.measured < r.threshold;
    r.notes.push_back("lipschitz_x: " + std::to_string(a.lipschitz_x) + " -> " + std::to_string(b.lipschitz_x));
    r.notes.push_back("holder_t: " + std::to_string(a.holder_t) + " -> " + std::to_string(b.holder_t));
    r.runtime_seconds = sw.seconds();
    return r;
}

/// Default smooth-fit tolerance 5h + c/h with c = 10 * inner tolerance.
inline double smooth_fit_tolerance(double h, double inverse_coefficient) { return 5.0 * h + inverse_coefficient / h; }

struct SmoothFitOptions {
    /// Coefficient c of the c/h term; negative means 10 * inner tolerance.
    double inverse_coefficient = -1.0;
};

/// |V_x - 1| at action nodes x0 and at their landing points x0 + xi0 (central
/// differences). Nodes where x0 or x0 + xi0 is not interior, or where xi0 sits
/// on an end of the impulse set, are excluded and counted.
inline CheckReport check_smooth_fit(const Solution& sol, const CostParams& costs, const SmoothFitOptions& opt = {}) {
    detail::Stopwatch sw;
    const auto& s = sol.surface;
    const auto& g = s.grid;
    const double h = g.h();
    const double coef = opt.inverse_coefficient < 0.0 ? 10.0 * s.inner_tol : opt.inverse_coefficient;
    auto r = detail::report("smooth_fit", "max |V_x - 1| at interior action nodes and landing points (central differences)",
                  false, false, 0.0, smooth_fit_tolerance(h, coef));
    r.notes.push_back(detail::domain_note(g));
    std::size_t sampled = 0;
    std::size_t excluded_boundary = 0;
    std::size_t excluded_constraint = 0;
    const double k_eps = 1e-12 * std::max(1.0, costs.k_max);
    for (std::size_t row = 0; row < g.n_t; ++row) {
        for (std::size_t c = 0; c < g.n_x; ++c) {
            if (!sol.regions.is_action(row, c)) continue;
            const double xi = sol.policy.xi0(row, c);
            const double x0 = g.x(c);
            const double y = x0 + xi;
            if (c == 0 || c + 1 >= g.n_x || y < g.x(1) || y > g.x(g.n_x - 2)) {
                ++excluded_boundary;
                continue;
            }
            if (std::abs(xi - costs.k_min) <= k_eps || std::abs(xi - costs.k_max) <= k_eps) {
                ++excluded_constraint;
                continue;
            }
            ++sampled;
            const auto v = s.values.row(row);
            const double dx0 = (v[c + 1] - v[c - 1]) / (2.0 * h);
            const double dy = (interpolate_slice(v, g, y + h) - interpolate_slice(v, g, y - h)) / (2.0 * h);
            for (const auto& [err, where] : {std::pair{std::abs(dx0 - 1.0), x0}, std::pair{std::abs(dy - 1.0), y}}) {
                if (err > r.measured) {
                    r.measured = err;
                    r.worst_t = g.t(row, s.horizon);
                    r.worst_x = where;
                }
            }
        }
    }
    r.notes.push_back("sampled action nodes: " + std::to_string(sampled));
    r.notes.push_back("excluded (x0 or x0+xi0 not interior): " + std::to_string(excluded_boundary));
    r.notes.push_back("excluded (xi0 at an end of the impulse set): " + std::to_string(excluded_constraint));
    if (sampled == 0) {
        r.vacuous = true;
        r.passed = true;
        r.notes.push_back(sol.regions.action_count() == 0 ? "action region is empty" : "no eligible action nodes");
    } else {
        r.passed = r.measured <= r.threshold;
    }
    r.runtime_seconds = sw.seconds();
    return r;
}

/// Discrete set Theta(t, x) of maximizing impulse sizes (ties within kTieTolerance).
inline std::vector<double> theta_set(std::span<const double> v, const Grid& g, double x, const CostParams& costs) {
    const auto ks = impulse_samples(costs, g.n_k);
    const auto best = detail::best_impulse(v, g, x, ks, costs.kappa);
    const double tie = kTieTolerance * (1.0 + std::abs(best.value));
    std::vector<double> out;
    for (double k : ks)
        if (interpolate_slice(v, g, x + k) - (k + costs.kappa) >= best.value - tie) out.push_back(k);
    return out;
}

/// Every action node: Theta nonempty, xi0 = min Theta, x0 + xi0 lands in the
/// continuation region, and IV(x0) >= IV(x0 + xi0) - B(xi0) + kappa within
/// twice the interpolation error.
inline CheckReport check_theta_structure(const Solution& sol, const CostParams& costs) {
    detail::Stopwatch sw;
    const auto& s = sol.surface;
    const auto& g = s.grid;
    auto r = detail::report("theta_structure", "Theta nonempty, landing in continuation, chain inequality via subadditivity",
                  true, false, 0.0, 0.0);
    const auto ks = impulse_samples(costs, g.n_k);
    std::size_t checked = 0;
    std::size_t bad_landing = 0;
    std::size_t bad_theta = 0;
    double worst_chain = 0.0;
    for (std::size_t row = 0; row < g.n_t; ++row) {
        const auto v = s.values.row(row);
        const double interp = detail::interpolation_error(v);
        for (std::size_t c = 0; c < g.n_x; ++c) {
            if (!sol.regions.is_action(row, c)) continue;
            ++checked;
            const double x0 = g.x(c);
            const auto theta = theta_set(v, g, x0, costs);
            const double xi = sol.policy.xi0(row, c);
            if (theta.empty() || theta.front() != xi) ++bad_theta;
            if (!detail::lands_in_continuation(sol, row, x0 + xi)) ++bad_landing;
            const double iv_here = detail::best_impulse(v, g, x0, ks, costs.kappa).value;
            const double iv_there = detail::best_impulse(v, g, x0 + xi, ks, costs.kappa).value;
            const double violation = (iv_there - costs.injection_cost(xi) + costs.kappa) - iv_here;
            const double allowed = 2.0 * interp + s.inner_tol;
            if (violation - allowed > worst_chain) {
                worst_chain = violation - allowed;
                r.worst_t = g.t(row, s.horizon);
                r.worst_x = x0;
            }
        }
    }
    r.measured = worst_chain;
    r.passed = bad_theta == 0 && bad_landing == 0 && worst_chain <= 0.0;
    r.vacuous = checked == 0;
    r.notes.push_back("action nodes checked: " + std::to_string(checked));
    r.notes.push_back("Theta mismatches: " + std::to_string(bad_theta) + ", landings in action: " + std::to_string(bad_landing));
    r.runtime_seconds = sw.seconds();
    return r;
}

/// f and g1 nondecreasing and g2 nonincreasing on the grid nodes.
inline bool has_monotone_data(const ModelSpec& spec, const Grid& g) {
    const auto& u = spec.utilities;
    for (std::size_t c = 1; c < g.n_x; ++c) {
        const double a = g.x(c - 1);
        const double b = g.x(c);
        if (u.f(b) < u.f(a) || u.g1(b) < u.g1(a) || u.g2(b) > u.g2(a)) return false;
    }
    return true;
}

/// Under monotone data: V(t, .) nondecreasing within tol and no action labels on the
/// top 10% of the x-grid. Vacuous for non-monotone data.
inline CheckReport check_monotone_structure(const Solution& sol, const ModelSpec& spec, double tol = 1e-8) {
    detail::Stopwatch sw;
    const auto& s = sol.surface;
    const auto& g = s.grid;
    auto r = detail::report("monotone_structure", "min over layers of V(x_{i+1}) - V(x_i); action labels in the top 10% of x",
                  true, false, 0.0, -tol);
    if (!has_monotone_data(spec, g)) {
        r.vacuous = true;
        r.notes.push_back("data not monotone; check skipped");
        r.runtime_seconds = sw.seconds();
        return r;
    }
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t row = 0; row < s.values.rows(); ++row)
        for (std::size_t c = 0; c + 1 < g.n_x; ++c) {
            const double d = s.values(row, c + 1) - s.values(row, c);
            if (d < worst) {
                worst = d;
                r.worst_t = g.t(row, s.horizon);
                r.worst_x = g.x(c);
            }
        }
    const auto tail_start = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(g.n_x)));
    std::size_t tail_actions = 0;
    for (std::size_t row = 0; row < g.n_t; ++row)
        for (std::size_t c = tail_start; c < g.n_x; ++c)
            if (sol.regions.is_action(row, c)) ++tail_actions;
    r.measured = worst;
    r.passed = worst >= -tol && tail_actions == 0;
    r.notes.push_back("action labels in the continuation tail: " + std::to_string(tail_actions));
    r.runtime_seconds = sw.seconds();
    return r;
}

struct DppCheckSettings {
    std::size_t n_points = 20;
    std::size_t n_paths = 4000;
    double dt = 0.0;  ///< 0 means the solver time step
    std::uint64_t seed = 11;
    /// Sampling window in x; interior nodes inside [x_lo, x_hi] are eligible.
    double x_lo = -std::numeric_limits<double>::infinity();
    double x_hi = std::numeric_limits<double>::infinity();
};

/// DPP residual at interior nodes with theta = t + (T - t)/2; each must satisfy
/// |residual| <= 3 SE + (dt + h).
inline CheckReport check_dpp(const ModelSpec& spec, const Solution& sol, const DppCheckSettings& set) {
    detail::Stopwatch sw;
    const auto& g = sol.surface.grid;
    const double step = g.dt(spec.horizon);
    const double budget = step + g.h();
    auto r = detail::report("dpp", "max over points of |residual| - 3 SE, theta = t + (T-t)/2", true, false, 0.0, budget);
    const double mc_dt = set.dt > 0.0 ? set.dt : step;
    std::mt19937_64 pick(set.seed);
    // Even remaining step counts keep theta on a solver layer.
    std::vector<std::size_t> rows;
    for (std::size_t row = 0; row + 2 <= g.n_t; row += 2)
        if ((g.n_t - row) % 2 == 0) rows.push_back(row);
    std::vector<std::size_t> cols;
    for (std::size_t c = 1; c + 1 < g.n_x; ++c)
        if (g.x(c) >= set.x_lo && g.x(c) <= set.x_hi) cols.push_back(c);
    if (rows.empty() || cols.empty()) {
        r.vacuous = true;
        return r;
    }
    const FeedbackPolicy policy(sol);
    for (std::size_t p = 0; p < set.n_points; ++p) {
        const std::size_t row = rows[pick() % rows.size()];
        const std::size_t c = cols[pick() % cols.size()];
        const double t = g.t(row, spec.horizon);
        const double x = g.x(c);
        const double theta = t + 0.5 * (spec.horizon - t);
        const auto res = dpp_residual(spec, sol, policy, t, x, theta, mc_dt, set.n_paths, set.seed + 101 * p);
        const double excess = std::abs(res.residual) - 3.0 * res.std_error;
        if (excess > r.measured || p == 0) {
            r.measured = excess;
            r.worst_t = t;
            r.worst_x = x;
        }
    }
    r.passed = r.measured <= budget;
    r.notes.push_back("points: " + std::to_string(set.n_points) + ", paths per point: " + std::to_string(set.n_paths));
    r.runtime_seconds = sw.seconds();
    return r;
}

// ---------------------------------------------------------------------------
// Convergence

struct ConvergenceRow {
    Grid grid;
    double max_abs_error = kNaN;       ///< against the closed form, when available
    double max_rel_error = kNaN;
    double cauchy_difference = kNaN;   ///< sup-norm vs previous level on shared nodes
    double observed_ratio = kNaN;      ///< previous difference / this difference
    double seconds = 0.0;
};

enum class Refinement { time_only, space_and_time };

/// Next grid of a nested ladder: dt halves; in space_and_time mode h and the
/// impulse-sample spacing halve too, keeping every coarse node in the fine grid.
inline Grid refine(const Grid& g, Refinement mode) {
    Grid f = g;
    f.n_t = 2 * g.n_t;
    if (mode == Refinement::space_and_time) {
        f.n_x = 2 * (g.n_x - 1) + 1;
        f.n_k = g.n_k > 1 ? 2 * (g.n_k - 1) + 1 : 1;
    }
    return f;
}

/// Closed-form error against no_intervention_value: max abs and max relative over
/// nodes where the exact value is nonzero.
inline std::pair<double, double> closed_form_error(const ModelSpec& spec, const ValueSurface& s) {
    double abs_err = 0.0;
    double rel_err = 0.0;
    for (std::size_t row = 0; row < s.values.rows(); ++row) {
        const double exact = *no_intervention_value(spec, s.grid.t(row, s.horizon));
        for (std::size_t c = 0; c < s.values.cols(); ++c) {
            const double e = std::abs(s.values(row, c) - exact);
            abs_err = std::max(abs_err, e);
            if (exact != 0.0) rel_err = std::max(rel_err, e / std::abs(exact));
            else if (e != 0.0) rel_err = std::numeric_limits<double>::infinity();
        }
    }
    return {abs_err, rel_err};
}

/// Solves on `levels` nested grids starting at `base`; reports errors against the
/// closed form (constant data) and Cauchy differences on the shared coarse nodes.
inline std::vector<ConvergenceRow> convergence_study(const ModelSpec& spec, const Grid& base, std::size_t levels,
                                                     Refinement mode, const SolverOptions& opt = {}) {
    if (levels < 3) throw SpecError("convergence_study: need at least 3 levels");
    std::vector<ConvergenceRow> rows;
    std::optional<ValueSurface> prev;
    Grid g = base;
    for (std::size_t l = 0; l < levels; ++l, g = refine(g, mode)) {
        detail::Stopwatch sw;
        auto sol = solve(spec, g, opt);
        ConvergenceRow row;
        row.grid = g;
        row.seconds = sw.seconds();
        if (no_intervention_value(spec, 0.0)) std::tie(row.max_abs_error, row.max_rel_error) = closed_form_error(spec, sol.surface);
        if (prev) {
            const std::size_t sx = mode == Refinement::space_and_time ? 2 : 1;
            double d = 0.0;
            for (std::size_t r = 0; r < prev->values.rows(); ++r)
                for (std::size_t c = 0; c < prev->values.cols(); ++c)
                    d = std::max(d, std::abs(prev->values(r, c) - sol.surface.values(2 * r, sx * c)));
            row.cauchy_difference = d;
            if (rows.size() >= 2 && std::isfinite(rows.back().cauchy_difference))
                row.observed_ratio = d == 0.0 ? kNaN : rows.back().cauchy_difference / d;
        }
        rows.push_back(row);
        prev = std::move(sol.surface);
    }
    return rows;
}

} // namespace impulse_qvi
