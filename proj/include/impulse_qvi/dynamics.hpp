#pragma once

#include "impulse_qvi/core.hpp"
#include "impulse_qvi/model.hpp"
#include "impulse_qvi/parallel.hpp"
#include "impulse_qvi/solver.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

namespace impulse_qvi {

struct Impulse {
    double time = 0.0;
    double size = 0.0;
};

/// Deterministic intervention plan (tau_i, K_i).
struct ImpulseSchedule {
    std::vector<Impulse> events;

    /// Times strictly increasing in [t0, T); sizes in [k_min, k_max].
    /// An impulse exactly at t0 is admitted.
    void check(const ModelSpec& spec, double t0) const {
        for (std::size_t i = 0; i < events.size(); ++i) {
            const auto& e = events[i];
            if (!(e.time >= t0 && e.time < spec.horizon))
                throw SpecError("schedule: impulse time " + std::to_string(e.time) + " outside [t0, T)");
            if (i > 0 && !(e.time > events[i - 1].time)) throw SpecError("schedule: impulse times must be strictly increasing");
            if (!(e.size >= spec.costs.k_min && e.size <= spec.costs.k_max))
                throw SpecError("schedule: impulse size " + std::to_string(e.size) + " outside [k_min, k_max]");
        }
    }
};

/// Feedback control read off a solved QVI: inject xi0 at action nodes, else continue.
class FeedbackPolicy {
public:
    explicit FeedbackPolicy(const Solution& sol) : sol_(&sol) {}

    /// Injection prescribed at (t, x), if any. Uses the nearest layer and node.
    [[nodiscard]] std::optional<double> decide(double t, double x) const {
        const auto& g = sol_->surface.grid;
        if (x > g.x_max) return std::nullopt;
        const std::size_t r = g.nearest_row(t, sol_->surface.horizon);
        const std::size_t c = g.nearest_node(x);
        if (!sol_->regions.is_action(r, c)) return std::nullopt;
        return sol_->policy.xi0(r, c);
    }

    [[nodiscard]] const Solution& solution() const { return *sol_; }

private:
    const Solution* sol_;
};

using Control = std::variant<ImpulseSchedule, FeedbackPolicy>;

struct AppliedImpulse {
    double time = 0.0;
    double size = 0.0;
    double state_before = 0.0;
    std::size_t step = 0;  ///< index into PathRecord::times
};

struct PathRecord {
    std::vector<double> times;
    std::vector<double> states;  ///< post-impulse state at each time
    std::vector<AppliedImpulse> impulses_applied;
    std::optional<double> default_time;  ///< nullopt: beyond the horizon
    double realized_cost = 0.0;

    bool operator==(const PathRecord& o) const {
        if (times != o.times || states != o.states || default_time != o.default_time ||
            realized_cost != o.realized_cost || impulses_applied.size() != o.impulses_applied.size())
            return false;
        for (std::size_t i = 0; i < impulses_applied.size(); ++i) {
            const auto& a = impulses_applied[i];
            const auto& b = o.impulses_applied[i];
            if (a.time != b.time || a.size != b.size || a.state_before != b.state_before || a.step != b.step)
                return false;
        }
        return true;
    }
};

struct SimulationOptions {
    double dt = 0.01;
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    /// End of the simulation window; defaults to the horizon T.
    std::optional<double> t_end;
};

// ---------------------------------------------------------------------------
// Default time

/// tau = inf{s >= t0 : int_{t0}^s beta >= E}, E ~ Exp(1); nullopt when tau > T.
/// Exact inversion on piecewise-linear hazards.
inline std::optional<double> invert_hazard(const ModelSpec& spec, double t0, double level) {
    const double horizon = spec.horizon;
    std::vector<double> cuts{t0};
    for (double bp : spec.beta.breakpoints_within(t0, horizon)) cuts.push_back(bp);
    cuts.push_back(horizon);
    double remaining = level;
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        const double s0 = cuts[i - 1];
        const double len = cuts[i] - s0;
        if (len <= 0.0) continue;
        const double b0 = spec.beta(s0);
        const double slope = (spec.beta(cuts[i]) - b0) / len;
        const double seg = b0 * len + 0.5 * slope * len * len;
        if (seg < remaining) {
            remaining -= seg;
            continue;
        }
        double u;
        if (slope == 0.0) {
            u = remaining / b0;
        } else {
            const double disc = std::max(b0 * b0 + 2.0 * slope * remaining, 0.0);
            u = 2.0 * remaining / (b0 + std::sqrt(disc));
        }
        return std::min(s0 + u, cuts[i]);
    }
    return std::nullopt;
}

template <typename Engine>
std::optional<double> sample_default(const ModelSpec& spec, double t0, Engine& rng) {
    std::exponential_distribution<double> unit(1.0);
    return invert_hazard(spec, t0, unit(rng));
}

inline std::optional<double> sample_default(const ModelSpec& spec, double t0, std::uint64_t seed,
                                            std::uint64_t path_index = 0) {
    auto rng = path_engine(seed, path_index, Stream::default_time);
    return sample_default(spec, t0, rng);
}

// ---------------------------------------------------------------------------
// Path simulation

/// Uniform steps from t0 to t_end with the schedule times inserted (not rounded).
inline std::vector<double> time_grid(double t0, double t_end, double dt, const Control& control) {
    if (!(dt > 0.0)) throw SpecError("time step must be positive");
    std::vector<double> ts;
    const auto n = static_cast<std::size_t>(std::ceil((t_end - t0) / dt - 1e-9));
    for (std::size_t k = 0; k < n; ++k) ts.push_back(t0 + dt * static_cast<double>(k));
    ts.push_back(t_end);
    if (const auto* s = std::get_if<ImpulseSchedule>(&control))
        for (const auto& e : s->events)
            if (e.time >= t0 && e.time < t_end) ts.push_back(e.time);
    std::sort(ts.begin(), ts.end());
    const double merge = 1e-12 * std::max(1.0, std::abs(t_end));
    std::vector<double> out;
    for (double t : ts) {
        if (!out.empty() && t - out.back() <= merge) {
            // Keep inserted schedule times exact when they collide with grid points.
            if (const auto* s = std::get_if<ImpulseSchedule>(&control))
                for (const auto& e : s->events)
                    if (e.time == t) out.back() = t;
            continue;
        }
        out.push_back(t);
    }
    return out;
}

namespace detail {

inline void check_control(const ModelSpec& spec, double t0, const Control& control) {
    if (const auto* s = std::get_if<ImpulseSchedule>(&control)) s->check(spec, t0);
}

/// Euler-Maruyama with impulses; states are post-impulse. Impulses at t_end are not applied.
template <typename Engine>
void euler_path(const ModelSpec& spec, double x0, const Control& control, std::span<const double> times,
                Engine& rng, PathRecord& out) {
    out.times.assign(times.begin(), times.end());
    out.states.assign(times.size(), 0.0);
    out.impulses_applied.clear();
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto* schedule = std::get_if<ImpulseSchedule>(&control);
    const auto* feedback = std::get_if<FeedbackPolicy>(&control);
    std::size_t next_event = 0;

    double x = x0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        if (k > 0) {
            const double prev = times[k - 1];
            const double h = t - prev;
            x += drift(prev, x, spec) * h + diffusion(prev, x, spec) * std::sqrt(h) * normal(rng);
        }
        if (k + 1 < times.size()) {
            if (schedule != nullptr) {
                while (next_event < schedule->events.size() && schedule->events[next_event].time < t) ++next_event;
                if (next_event < schedule->events.size() && schedule->events[next_event].time == t) {
                    const double size = schedule->events[next_event].size;
                    out.impulses_applied.push_back({t, size, x, k});
                    x = x + size;
                    ++next_event;
                }
            } else if (feedback != nullptr) {
                if (const auto size = feedback->decide(t, x)) {
                    out.impulses_applied.push_back({t, *size, x, k});
                    x = x + *size;
                }
            }
        }
        out.states[k] = x;
    }
}

/// Deterministic survival weights along a path grid, shared by all paths.
struct Discounting {
    std::vector<double> rho;              ///< rho_{t0}(t_k)
    std::vector<double> discounted_step;  ///< int_{t_k}^{t_{k+1}} rho_{t0}(s) ds

    Discounting(const ModelSpec& spec, std::span<const double> times) {
        const double t0 = times.front();
        rho.resize(times.size());
        discounted_step.resize(times.size() > 0 ? times.size() - 1 : 0);
        for (std::size_t k = 0; k < times.size(); ++k) rho[k] = times[k] == t0 ? 1.0 : survival(t0, times[k], spec);
        for (std::size_t k = 0; k + 1 < times.size(); ++k)
            discounted_step[k] = discounted_time(t0, times[k], times[k + 1], spec);
    }
};

} // namespace detail

/// Cost along one path with the default time drawn (G-filtration form): state
/// piecewise constant on the path grid, impulses counted while tau_n <= tau ^ T.
inline double realized_cost_g(const ModelSpec& spec, const PathRecord& p) {
    const auto& u = spec.utilities;
    const auto& ts = p.times;
    const std::size_t n = ts.size();
    const double stop = p.default_time.value_or(std::numeric_limits<double>::infinity());
    double acc = 0.0;
    std::size_t k = 0;
    for (; k + 1 < n; ++k) {
        if (stop < ts[k + 1]) break;
        acc += u.f(p.states[k]) * (ts[k + 1] - ts[k]);
    }
    if (k + 1 < n) {
        acc += u.f(p.states[k]) * (stop - ts[k]);
        acc -= u.g2(p.states[k]);
    } else {
        acc += u.g1(p.states[n - 1]);
    }
    for (const auto& imp : p.impulses_applied)
        if (imp.time <= stop) acc -= spec.costs.injection_cost(imp.size);
    return acc;
}

/// Default-free cost with survival weights (F-filtration form). Weights are exact
/// in time so that, path by path, it is the conditional mean of realized_cost_g.
inline double realized_cost_f(const ModelSpec& spec, const PathRecord& p, const detail::Discounting& d) {
    const auto& u = spec.utilities;
    const std::size_t n = p.times.size();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        acc += u.f(p.states[k]) * d.discounted_step[k];
        acc -= u.g2(p.states[k]) * (d.rho[k] - d.rho[k + 1]);
    }
    acc += d.rho[n - 1] * u.g1(p.states[n - 1]);
    for (const auto& imp : p.impulses_applied) acc -= d.rho[imp.step] * spec.costs.injection_cost(imp.size);
    return acc;
}

/// One controlled path from (t0, x0) with its default time and realized cost.
inline PathRecord simulate(const ModelSpec& spec, double t0, double x0, const Control& control,
                           const SimulationOptions& opt) {
    spec.check();
    const double t_end = opt.t_end.value_or(spec.horizon);
    if (!(t0 >= 0.0 && t0 < t_end && t_end <= spec.horizon)) throw SpecError("simulate: need 0 <= t0 < t_end <= T");
    detail::check_control(spec, t0, control);
    const auto times = time_grid(t0, t_end, opt.dt, control);
    PathRecord rec;
    auto bm = path_engine(opt.seed, opt.path_index, Stream::brownian);
    detail::euler_path(spec, x0, control, times, bm, rec);
    auto dr = path_engine(opt.seed, opt.path_index, Stream::default_time);
    rec.default_time = sample_default(spec, t0, dr);
    rec.realized_cost = realized_cost_g(spec, rec);
    return rec;
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

struct McRequest {
    double t0 = 0.0;
    double x0 = 1.0;
    double dt = 0.01;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;
};

struct PathCosts {
    std::vector<double> cost_g;
    std::vector<double> cost_f;
};

/// Both cost representations on common Brownian paths; default draws come from
/// an independent stream per path.
inline PathCosts path_costs(const ModelSpec& spec, const Control& control, const McRequest& req) {
    spec.check();
    if (req.n_paths < 2) throw SpecError("Monte Carlo needs at least two paths");
    if (!(req.t0 >= 0.0 && req.t0 < spec.horizon)) throw SpecError("t0 must lie in [0, T)");
    detail::check_control(spec, req.t0, control);
    const auto times = time_grid(req.t0, spec.horizon, req.dt, control);
    const detail::Discounting disc(spec, times);
    PathCosts out{std::vector<double>(req.n_paths), std::vector<double>(req.n_paths)};
    parallel_for(req.n_paths, [&](std::size_t i) {
        PathRecord rec;
        auto bm = path_engine(req.seed, i, Stream::brownian);
        detail::euler_path(spec, req.x0, control, times, bm, rec);
        auto dr = path_engine(req.seed, i, Stream::default_time);
        rec.default_time = sample_default(spec, req.t0, dr);
        out.cost_g[i] = realized_cost_g(spec, rec);
        out.cost_f[i] = realized_cost_f(spec, rec, disc);
    });
    return out;
}

inline McEstimate mc_cost_g(const ModelSpec& spec, const Control& control, const McRequest& req) {
    const auto c = path_costs(spec, control, req);
    const auto m = mean_and_error(c.cost_g);
    return {m.mean, m.std_error, req.n_paths, req.seed};
}

inline McEstimate mc_cost_f(const ModelSpec& spec, const Control& control, const McRequest& req) {
    const auto c = path_costs(spec, control, req);
    const auto m = mean_and_error(c.cost_f);
    return {m.mean, m.std_error, req.n_paths, req.seed};
}

struct FiltrationReport {
    McEstimate with_default;     ///< G-filtration estimate, tau sampled
    McEstimate survival_weighted;  ///< F-filtration estimate
    double difference = 0.0;
    double combined_std_error = 0.0;
    bool passed = false;
};

/// Compares the two cost representations; passes when they agree within 3 combined SE.
inline FiltrationReport filtration_reduction_check(const ModelSpec& spec, const Control& control, const McRequest& req) {
    const auto c = path_costs(spec, control, req);
    const auto g = mean_and_error(c.cost_g);
    const auto f = mean_and_error(c.cost_f);
    FiltrationReport r;
    r.with_default = {g.mean, g.std_error, req.n_paths, req.seed};
    r.survival_weighted = {f.mean, f.std_error, req.n_paths, req.seed};
    r.difference = g.mean - f.mean;
    r.combined_std_error = std::hypot(g.std_error, f.std_error);
    r.passed = std::abs(r.difference) <= 3.0 * r.combined_std_error;
    return r;
}

} // namespace impulse_qvi
