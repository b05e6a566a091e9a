#pragma once

#include "impulse_qvi/core.hpp"
#include "impulse_qvi/curve.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace impulse_qvi {

/// Intervention cost B(K) = K + kappa over the impulse set A = [k_min, k_max].
struct CostParams {
    double kappa = 0.1;
    double k_min = 0.1;
    double k_max = 1.0;

    [[nodiscard]] double injection_cost(double k) const noexcept { return k + kappa; }
};

/// Running gain f, terminal gain g1 and default penalty g2, with optional
/// configured upper bounds. Missing bounds are estimated by sampling.
struct UtilitySpec {
    UtilityFunction f;
    UtilityFunction g1;
    UtilityFunction g2;
    std::optional<double> bound_f;
    std::optional<double> bound_g1;
    std::optional<double> bound_g2;
};

/// All coefficients of the controlled ratio dynamics
///   dX = ((c1 - X) lambda(X) + mu~(t) X) dt + sigma~(t) X dW + sum K_n
/// together with costs, Cox hazard beta(t) and horizon T.
struct ModelSpec {
    double c1 = 1.0;
    Curve lambda = Curve::constant(0.0);
    Curve mu_tilde = Curve::constant(0.0);
    Curve sigma_tilde = Curve::constant(0.0);
    Curve beta = Curve::constant(0.0);
    UtilitySpec utilities;
    CostParams costs;
    double horizon = 1.0;

    /// Structural invariants; throws SpecError. Hypothesis checks live in validate().
    void check() const {
        if (!(c1 >= 0.0 && c1 <= 1.0)) throw SpecError("c1 must lie in [0,1]");
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw SpecError("horizon T must be positive");
        if (!(costs.kappa > 0.0)) throw SpecError("kappa must be positive");
        if (!(costs.k_min > 0.0 && costs.k_min <= costs.k_max))
            throw SpecError("impulse set must satisfy 0 < k_min <= k_max");
        if (beta.min_value() < 0.0) throw SpecError("hazard beta must be nonnegative");
    }
};

inline double drift(double t, double x, const ModelSpec& spec) {
    return (spec.c1 - x) * spec.lambda(x) + spec.mu_tilde(t) * x;
}

inline double diffusion(double t, double x, const ModelSpec& spec) {
    return spec.sigma_tilde(t) * x;
}

/// Integral of beta over [t, s]; trapezoid on the breakpoint-refined partition,
/// which is exact for piecewise-linear hazards.
inline double hazard_integral(double t, double s, const ModelSpec& spec) {
    if (s < t) throw SpecError("hazard_integral: s < t");
    const Curve& b = spec.beta;
    if (b.is_constant()) return b(t) * (s - t);
    double acc = 0.0;
    double prev = t;
    double prev_v = b(t);
    for (double bp : b.breakpoints_within(t, s)) {
        const double v = b(bp);
        acc += 0.5 * (prev_v + v) * (bp - prev);
        prev = bp;
        prev_v = v;
    }
    acc += 0.5 * (prev_v + b(s)) * (s - prev);
    return acc;
}

/// rho_t(s) = exp(-int_t^s beta).
inline double survival(double t, double s, const ModelSpec& spec) {
    return std::exp(-hazard_integral(t, s, spec));
}

namespace detail {

// 8-point Gauss-Legendre on [-1, 1].
inline constexpr std::array<double, 8> kGlNodes{
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGlWeights{
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

} // namespace detail

/// int_a^b rho_t(s) ds for t <= a <= b. Closed form on constant-hazard pieces,
/// Gauss-Legendre on linear-hazard pieces.
inline double discounted_time(double t, double a, double b, const ModelSpec& spec) {
    if (a < t || b < a) throw SpecError("discounted_time: need t <= a <= b");
    if (b == a) return 0.0;
    std::vector<double> cuts{a};
    for (double bp : spec.beta.breakpoints_within(a, b)) cuts.push_back(bp);
    cuts.push_back(b);

    double acc = 0.0;
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        const double s0 = cuts[i - 1];
        const double s1 = cuts[i];
        const double len = s1 - s0;
        const double h0 = hazard_integral(t, s0, spec);
        const double b0 = spec.beta(s0);
        const double slope = (spec.beta(s1) - b0) / len;
        if (slope == 0.0) {
            acc += (b0 == 0.0) ? len * std::exp(-h0) : std::exp(-h0) * (-std::expm1(-b0 * len)) / b0;
            continue;
        }
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / 0.1)));
        const double step = len / pieces;
        for (int p = 0; p < pieces; ++p) {
            const double lo = p * step;
            const double mid = lo + 0.5 * step;
            for (std::size_t q = 0; q < detail::kGlNodes.size(); ++q) {
                const double u = mid + 0.5 * step * detail::kGlNodes[q];
                acc += 0.5 * step * detail::kGlWeights[q] * std::exp(-h0 - b0 * u - 0.5 * slope * u * u);
            }
        }
    }
    return acc;
}

/// c(t,s,x) = rho_t(s) (f(x) - beta(s) g2(x)).
inline double running_cost(double t, double s, double x, const ModelSpec& spec) {
    const auto& u = spec.utilities;
    return survival(t, s, spec) * (u.f(x) - spec.beta(s) * u.g2(x));
}

/// g(t,x) = rho_t(T) g1(x).
inline double terminal_value(double t, double x, const ModelSpec& spec) {
    if (t > spec.horizon) throw SpecError("terminal_value: t > T");
    return survival(t, spec.horizon, spec) * spec.utilities.g1(x);
}

/// Uniform samples of the impulse set A.
inline std::vector<double> impulse_samples(const CostParams& c, std::size_t n) {
    if (n == 0) throw SpecError("impulse set needs at least one sample");
    if (n == 1 || c.k_max == c.k_min) return {c.k_min};
    std::vector<double> ks(n);
    const double step = (c.k_max - c.k_min) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) ks[i] = c.k_min + step * static_cast<double>(i);
    ks.back() = c.k_max;
    return ks;
}

// ---------------------------------------------------------------------------
// Validation of the standing hypotheses on a finite probe set

struct ConditionResult {
    std::string name;
    bool passed = true;
    bool warning_only = false;
    double measured = 0.0;
    double worst_x = kNaN;
    std::string message;
};

struct ValidationReport {
    double lipschitz_lambda = 0.0;
    double lipschitz_f = 0.0;
    double lipschitz_g1 = 0.0;
    double lipschitz_g2 = 0.0;
    double bound_f = 0.0;
    double bound_g1 = 0.0;
    double bound_g2 = 0.0;
    double no_terminal_impulse_margin = 0.0;
    double min_abs_diffusion = 0.0;
    std::vector<ConditionResult> conditions;

    /// True when every hard condition passes; warnings do not count.
    [[nodiscard]] bool ok() const {
        return std::all_of(conditions.begin(), conditions.end(),
                           [](const ConditionResult& c) { return c.passed || c.warning_only; });
    }
    [[nodiscard]] const ConditionResult* find(const std::string& name) const {
        for (const auto& c : conditions)
            if (c.name == name) return &c;
        return nullptr;
    }
};

namespace detail {

template <typename F>
std::pair<double, double> sampled_lipschitz(const F& fn, std::span<const double> xs) {
    double best = 0.0;
    double where = xs.empty() ? kNaN : xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double q = std::abs(fn(xs[i]) - fn(xs[i - 1])) / (xs[i] - xs[i - 1]);
        if (q > best) {
            best = q;
            where = xs[i - 1];
        }
    }
    return {best, where};
}

inline double min_abs_on_horizon(const Curve& c, double horizon) {
    std::vector<double> ts{0.0};
    for (double bp : c.breakpoints_within(0.0, horizon)) ts.push_back(bp);
    ts.push_back(horizon);
    double m = std::abs(c(ts.front()));
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const double a = c(ts[i - 1]);
        const double b = c(ts[i]);
        if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) return 0.0;
        m = std::min(m, std::abs(b));
    }
    return m;
}

} // namespace detail

/// Checks the standing hypotheses on a probe grid and a finite sample of A.
/// Never throws for hypothesis failures; they are reported per condition.
inline ValidationReport validate(const ModelSpec& spec, std::span<const double> probe_grid,
                                 std::size_t n_k_samples = 101) {
    ValidationReport rep;
    auto fail = [&](ConditionResult c) { rep.conditions.push_back(std::move(c)); };

    try {
        spec.check();
    } catch (const SpecError& e) {
        fail({"structure", false, false, 0.0, kNaN, e.what()});
        return rep;
    }
    if (probe_grid.empty()) {
        fail({"probe_grid", false, false, 0.0, kNaN, "probe grid is empty"});
        return rep;
    }
    std::vector<double> xs(probe_grid.begin(), probe_grid.end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    const auto& u = spec.utilities;
    auto [l_lam, w_lam] = detail::sampled_lipschitz(spec.lambda, xs);
    auto [l_f, w_f] = detail::sampled_lipschitz(u.f, xs);
    auto [l_g1, w_g1] = detail::sampled_lipschitz(u.g1, xs);
    auto [l_g2, w_g2] = detail::sampled_lipschitz(u.g2, xs);
    rep.lipschitz_lambda = l_lam;
    rep.lipschitz_f = l_f;
    rep.lipschitz_g1 = l_g1;
    rep.lipschitz_g2 = l_g2;
    const std::array<std::pair<const char*, double>, 4> lips{
        {{"lipschitz_lambda", l_lam}, {"lipschitz_f", l_f}, {"lipschitz_g1", l_g1}, {"lipschitz_g2", l_g2}}};
    const std::array<double, 4> lip_where{w_lam, w_f, w_g1, w_g2};
    for (std::size_t i = 0; i < lips.size(); ++i)
        fail({lips[i].first, std::isfinite(lips[i].second), false, lips[i].second, lip_where[i],
              std::isfinite(lips[i].second) ? "" : "non-finite difference quotient"});

    // Upper bounds: configured constants are checked, missing ones estimated.
    auto bound_check = [&](const char* name, const UtilityFunction& fn, const std::optional<double>& configured,
                           double& out) {
        double sup = -std::numeric_limits<double>::infinity();
        double where = kNaN;
        for (double x : xs) {
            const double v = fn(x);
            if (v > sup) {
                sup = v;
                where = x;
            }
        }
        if (configured) {
            out = *configured;
            const bool okb = sup <= *configured;
            fail({name, okb, false, sup, where, okb ? "" : "function exceeds configured bound"});
        } else {
            out = sup;
            fail({name, true, false, sup, where, "bound estimated from probes"});
        }
    };
    bound_check("bound_f", u.f, u.bound_f, rep.bound_f);
    bound_check("bound_g1", u.g1, u.bound_g1, rep.bound_g1);
    bound_check("bound_g2", u.g2, u.bound_g2, rep.bound_g2);

    // No terminal impulse: g1(x) >= max_K g1(x+K) - K - kappa.
    const auto ks = impulse_samples(spec.costs, n_k_samples);
    double worst_margin = std::numeric_limits<double>::infinity();
    double worst_x = kNaN;
    for (double x : xs) {
        double best = -std::numeric_limits<double>::infinity();
        for (double k : ks) best = std::max(best, u.g1(x + k) - spec.costs.injection_cost(k));
        const double margin = u.g1(x) - best;
        if (margin < worst_margin) {
            worst_margin = margin;
            worst_x = x;
        }
    }
    rep.no_terminal_impulse_margin = worst_margin;
    fail({"no_terminal_impulse", worst_margin >= 0.0, false, worst_margin, worst_x,
          worst_margin >= 0.0 ? "" : "an injection at T would be profitable"});

    // Ellipticity proxy.
    const double sig_min = detail::min_abs_on_horizon(spec.sigma_tilde, spec.horizon);
    double x_abs_min = std::abs(xs.front());
    for (double x : xs) x_abs_min = std::min(x_abs_min, std::abs(x));
    rep.min_abs_diffusion = sig_min * x_abs_min;
    const bool elliptic = rep.min_abs_diffusion > 0.0;
    fail({"ellipticity", elliptic, true, rep.min_abs_diffusion, xs.front(),
          elliptic ? "" : "diffusion degenerates on the domain (x_min <= 0 or sigma~ vanishes)"});

    // Lower boundary drift direction; the upwind closure at x_min is monotone when it is >= 0.
    double worst_drift = std::numeric_limits<double>::infinity();
    for (double t : {0.0, 0.5 * spec.horizon, spec.horizon})
        worst_drift = std::min(worst_drift, drift(t, xs.front(), spec));
    fail({"lower_boundary_drift", worst_drift >= 0.0, true, worst_drift, xs.front(),
          worst_drift >= 0.0 ? "" : "drift points out of the domain at x_min"});

    // Unbounded user tables (e.g. power utilities) are not detectable from samples;
    // a table that is still increasing at its last sample is flagged.
    auto growth_warning = [&](const char* name, const UtilityFunction& fn) {
        if (const Curve* c = fn.curve(); c != nullptr && !c->is_constant()) {
            const auto& ys = c->ordinates();
            const bool flat_tail = ys.size() < 2 || ys[ys.size() - 1] <= ys[ys.size() - 2] + 1e-12;
            fail({name, flat_tail, true, ys.back(), c->abscissae().back(),
                  flat_tail ? "" : "table still increasing at its last sample; boundedness relies on flat extension"});
        }
    };
    growth_warning("saturation_f", u.f);
    growth_warning("saturation_g1", u.g1);
    return rep;
}

} // namespace impulse_qvi
