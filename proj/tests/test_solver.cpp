#include "impulse_qvi/dpp.hpp"
#include "impulse_qvi/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace impulse_qvi;

namespace {

ModelSpec constant_spec(double f0, double g10, double g20, double b0) {
    ModelSpec s;
    s.c1 = 1.0;
    s.sigma_tilde = Curve::constant(0.2);
    s.beta = Curve::constant(b0);
    s.utilities.f = Curve::constant(f0);
    s.utilities.g1 = Curve::constant(g10);
    s.utilities.g2 = Curve::constant(g20);
    s.costs = {10.0, 0.1, 1.0};
    return s;
}

// A reward jump above x = 1 that makes injections from below worthwhile.
ModelSpec toy_spec() {
    ModelSpec s;
    s.c1 = 1.0;
    s.sigma_tilde = Curve::constant(0.3);
    s.beta = Curve::constant(0.2);
    s.utilities.f = Curve::table({0.0, 1.0, 1.3, 5.0}, {0.0, 0.0, 3.0, 3.0});
    s.utilities.g1 = Curve::constant(0.0);
    s.utilities.g2 = Saturating{0.0, -1.0, 1.0};
    s.costs = {0.05, 0.05, 1.5};
    return s;
}

// Independent interpolation: linear inside, lowest-cell slope below, flat above.
double oracle_interp(const std::vector<double>& v, const Grid& g, double y) {
    const double h = (g.x_max - g.x_min) / static_cast<double>(g.n_x - 1);
    if (y >= g.x_max) return v.back();
    if (y <= g.x_min) return v[0] + (y - g.x_min) * (v[1] - v[0]) / h;
    std::size_t i = static_cast<std::size_t>((y - g.x_min) / h);
    if (i >= g.n_x - 1) i = g.n_x - 2;
    const double xl = g.x(i);
    const double xr = g.x(i + 1);
    return v[i] + (v[i + 1] - v[i]) * (y - xl) / (xr - xl);
}

std::vector<double> row_copy(const Matrix& m, std::size_t r) {
    const auto s = m.row(r);
    return {s.begin(), s.end()};
}

} // namespace

TEST(ImpulseMax, ConstantSlice) {
    const Grid g{0.1, 3.0, 59, 10, 10};
    const CostParams c{0.05, 0.1, 1.0};
    const std::vector<double> v(g.n_x, 2.0);
    const auto r = impulse_max(v, g, c);
    for (std::size_t i = 0; i < g.n_x; ++i) {
        EXPECT_NEAR(r.values[i], 2.0 - 0.15, 1e-15);
        EXPECT_EQ(r.argmax[i], 0.1);
    }
}

TEST(ImpulseMax, SlopeOneTieBreak) {
    const Grid g{0.1, 3.0, 30, 10, 12};
    const CostParams c{0.05, 0.2, 0.9};
    std::vector<double> v(g.n_x);
    for (std::size_t i = 0; i < g.n_x; ++i) v[i] = g.x(i) + 0.3;
    const auto r = impulse_max(v, g, c);
    for (std::size_t i = 0; i < g.n_x; ++i) {
        if (g.x(i) + c.k_max > g.x_max) continue;  // flat extension breaks the slope there
        EXPECT_NEAR(r.values[i], v[i] - c.kappa, 1e-12);
        EXPECT_EQ(r.argmax[i], c.k_min);
    }
}

TEST(ImpulseMax, MatchesBruteForceOnRandomSlices) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Grid g{0.1, 2.0 + 0.5 * (trial % 4), 40 + static_cast<std::size_t>(trial), 10, 5 + static_cast<std::size_t>(trial % 7)};
        const CostParams c{0.02 + 0.01 * (trial % 3), 0.05, 0.8 + 0.1 * (trial % 5)};
        std::vector<double> v(g.n_x);
        const double peak = g.x_min + (g.x_max - g.x_min) * (0.5 + 0.4 * u(rng));
        for (std::size_t i = 0; i < g.n_x; ++i) v[i] = -std::pow(g.x(i) - peak, 2) + 0.05 * u(rng);
        const auto r = impulse_max(v, g, c);
        const double step = (c.k_max - c.k_min) / static_cast<double>(g.n_k - 1);
        for (std::size_t i = 0; i < g.n_x; ++i) {
            double best = -1e300;
            for (std::size_t j = 0; j < g.n_k; ++j) {
                const double k = j + 1 == g.n_k ? c.k_max : c.k_min + step * static_cast<double>(j);
                best = std::max(best, oracle_interp(v, g, g.x(i) + k) - (k + c.kappa));
            }
            EXPECT_NEAR(r.values[i], best, 1e-12);
            EXPECT_NEAR(oracle_interp(v, g, g.x(i) + r.argmax[i]) - (r.argmax[i] + c.kappa), best, 1e-12);
        }
    }
}

TEST(ImpulseMax, CostSubadditivity) {
    const CostParams c{0.07, 0.1, 2.0};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(c.k_min, c.k_max);
    for (int i = 0; i < 1000; ++i) {
        const double k1 = u(rng), k2 = u(rng);
        const double lhs = c.injection_cost(k1 + k2) + c.kappa;
        const double rhs = c.injection_cost(k1) + c.injection_cost(k2);
        EXPECT_LE(std::abs(lhs - rhs), 4.0 * std::numeric_limits<double>::epsilon() * rhs);
    }
}

TEST(PdeStep, PureSource) {
    auto s = constant_spec(1.5, 0.0, 0.0, 0.0);
    s.sigma_tilde = Curve::constant(0.0);
    const Grid g{0.1, 3.0, 30, 10, 5};
    std::vector<double> v(g.n_x);
    for (std::size_t i = 0; i < g.n_x; ++i) v[i] = std::sin(g.x(i));
    const auto out = pde_step(v, 0.3, 0.01, g, s);
    for (std::size_t i = 0; i < g.n_x; ++i) EXPECT_EQ(out[i], v[i] + 0.01 * 1.5);
}

TEST(PdeStep, PureDiscount) {
    auto s = constant_spec(0.0, 0.0, 0.0, 0.8);
    s.sigma_tilde = Curve::constant(0.0);
    const Grid g{0.1, 3.0, 30, 10, 5};
    std::vector<double> v(g.n_x);
    for (std::size_t i = 0; i < g.n_x; ++i) v[i] = 1.0 + g.x(i);
    const auto out = pde_step(v, 0.3, 0.02, g, s);
    for (std::size_t i = 0; i < g.n_x; ++i) EXPECT_NEAR(out[i], v[i] / (1.0 + 0.8 * 0.02), 1e-15);
}

TEST(PdeStep, ManyStepsMatchClosedForm) {
    const auto s = constant_spec(1.0, 0.4, 0.3, 0.6);
    for (std::size_t nt : {100, 200}) {
        const Grid g{0.1, 3.0, 50, nt, 5};
        std::vector<double> v(g.n_x, 0.4);
        const double dt = g.dt(s.horizon);
        for (std::size_t r = nt; r-- > 0;) v = pde_step(v, g.t(r, s.horizon), dt, g, s);
        const double tau = 1.0;
        const double exact = (1.0 - 0.6 * 0.3) * (1.0 - std::exp(-0.6 * tau)) / 0.6 + std::exp(-0.6 * tau) * 0.4;
        for (double x : v) EXPECT_NEAR(x, exact, 0.5 * dt);
    }
}

TEST(PdeStep, MonotoneMatrix) {
    auto s = toy_spec();
    s.lambda = Curve::constant(0.7);
    s.mu_tilde = Curve::constant(-0.2);
    const Grid g{0.1, 3.0, 60, 10, 5};
    const std::vector<double> v(g.n_x, 1.0);
    const auto sys = assemble_step(v, 0.0, 0.1, g, s);
    for (std::size_t i = 0; i < g.n_x; ++i) {
        EXPECT_GT(sys.matrix.diag[i], 0.0);
        if (i > 0) EXPECT_LE(sys.matrix.lower[i], 0.0);
        if (i + 1 < g.n_x) EXPECT_LE(sys.matrix.upper[i], 0.0);
    }
}

TEST(Solve, ClosedFormNoIntervention) {
    const auto s = constant_spec(1.0, 0.0, 0.0, 0.5);
    const Grid g{0.1, 3.0, 400, 400, 50};
    const auto sol = solve(s, g);
    double worst = 0.0;
    for (std::size_t r = 0; r <= g.n_t; ++r) {
        const double t = g.t(r, s.horizon);
        const double exact = 2.0 * (1.0 - std::exp(-0.5 * (1.0 - t)));
        for (std::size_t c = 0; c < g.n_x; ++c)
            if (exact > 0.0) worst = std::max(worst, std::abs(sol.surface.values(r, c) - exact) / exact);
    }
    EXPECT_LE(worst, 1e-3);
    EXPECT_EQ(sol.regions.action_count(), 0u);
}

TEST(Solve, ZeroData) {
    const auto s = constant_spec(0.0, 0.0, 0.0, 0.3);
    const Grid g{0.1, 3.0, 40, 20, 10};
    const auto sol = solve(s, g);
    for (double v : sol.surface.values.flat()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(sol.regions.action_count(), 0u);
}

TEST(Solve, TerminalAndObstacleBothSchemes) {
    const auto s = toy_spec();
    const Grid g{0.1, 4.0, 196, 100, 60};
    for (auto scheme : {ImpulseScheme::implicit_obstacle, ImpulseScheme::projection}) {
        SolverOptions opt;
        opt.scheme = scheme;
        const auto sol = solve(s, g, opt);
        for (std::size_t c = 0; c < g.n_x; ++c) EXPECT_EQ(sol.surface.values(g.n_t, c), s.utilities.g1(g.x(c)));
        EXPECT_GT(sol.regions.action_count(), 0u);
        for (std::size_t r = 0; r <= g.n_t; ++r) {
            const auto iv = impulse_max(sol.surface.values.row(r), g, s.costs);
            for (std::size_t c = 0; c < g.n_x; ++c) EXPECT_GE(sol.surface.values(r, c) - iv.values[c], -opt.inner_tol);
        }
    }
}

TEST(Solve, SchemesAgreeUnderRefinement) {
    const auto s = toy_spec();
    double prev = 0.0;
    for (std::size_t lv = 0; lv < 3; ++lv) {
        const std::size_t m = std::size_t{1} << lv;
        const Grid g{0.1, 4.0, 78 * m + 1, 40 * m, 30 * m + 1};
        SolverOptions proj;
        proj.scheme = ImpulseScheme::projection;
        const auto a = solve(s, g);
        const auto b = solve(s, g, proj);
        const double d = sup_norm_diff(a.surface.values.flat(), b.surface.values.flat());
        if (lv > 0) EXPECT_LT(d, prev);
        prev = d;
    }
}

TEST(Solve, RegionLabelsFollowThreshold) {
    const auto s = toy_spec();
    const Grid g{0.1, 4.0, 196, 60, 60};
    const auto sol = solve(s, g);
    const double eps = sol.regions.epsilon_region;
    EXPECT_DOUBLE_EQ(eps, 10.0 * 1e-9);
    for (std::size_t r = 0; r < g.n_t; ++r)
        for (std::size_t c = 0; c < g.n_x; ++c) {
            const bool act = sol.surface.values(r, c) - sol.surface.impulse_values(r, c) <= eps;
            EXPECT_EQ(sol.regions.is_action(r, c), act);
            if (act) {
                EXPECT_GE(sol.policy.xi0(r, c), s.costs.k_min);
                EXPECT_LE(sol.policy.xi0(r, c), s.costs.k_max);
            } else {
                EXPECT_TRUE(std::isnan(sol.policy.xi0(r, c)));
            }
        }
}

TEST(Solve, DiscreteComparison) {
    auto lo = toy_spec();
    auto hi = toy_spec();
    hi.utilities.f = Curve::table({0.0, 1.0, 1.3, 5.0}, {0.1, 0.2, 3.0, 3.5});
    const Grid g{0.1, 4.0, 118, 60, 40};
    const auto a = solve(lo, g);
    const auto b = solve(hi, g);
    for (std::size_t i = 0; i < a.surface.values.flat().size(); ++i)
        EXPECT_LE(a.surface.values.flat()[i], b.surface.values.flat()[i] + 1e-12);
}

TEST(Solve, UpperBound) {
    const auto s = toy_spec();
    const Grid g{0.1, 4.0, 118, 60, 40};
    const auto sol = solve(s, g);
    const double c1 = value_upper_bound(s, g);
    for (double v : sol.surface.values.flat()) EXPECT_LE(v, c1 + 1e-9);
}

TEST(Solve, Deterministic) {
    const auto s = toy_spec();
    const Grid g{0.1, 4.0, 118, 60, 40};
    EXPECT_EQ(solve(s, g).surface.values, solve(s, g).surface.values);
}

TEST(ExtractInjection, MatchesBruteForceAndLandsInContinuation) {
    const auto s = toy_spec();
    const Grid g{0.1, 4.0, 196, 100, 60};
    const auto sol = solve(s, g);
    const auto ks = impulse_samples(s.costs, g.n_k);
    std::size_t checked = 0;
    for (std::size_t r = 0; r < g.n_t; r += 3)
        for (std::size_t c = 0; c < g.n_x; ++c) {
            if (!sol.regions.is_action(r, c)) continue;
            const auto v = row_copy(sol.surface.values, r);
            const double t = g.t(r, s.horizon);
            const double xi = extract_injection(t, g.x(c), sol, s.costs);
            double best = -1e300, arg = 0.0;
            for (double k : ks) {
                const double val = oracle_interp(v, g, g.x(c) + k) - (k + s.costs.kappa);
                if (val > best + 1e-12 * (1.0 + std::abs(best))) {
                    best = val;
                    arg = k;
                }
            }
            EXPECT_EQ(xi, arg);
            EXPECT_EQ(xi, sol.policy.xi0(r, c));
            ++checked;
        }
    EXPECT_GT(checked, 0u);
    EXPECT_THROW(extract_injection(0.0, g.x_max, sol, s.costs), SpecError);
}

TEST(ExtractInjection, NoActionsWhereFlatExtensionApplies) {
    const auto s = toy_spec();
    const Grid g{0.1, 4.0, 196, 100, 60};
    const auto sol = solve(s, g);
    for (std::size_t r = 0; r <= g.n_t; ++r)
        for (std::size_t c = 0; c < g.n_x; ++c)
            if (g.x(c) + s.costs.k_min >= g.x_max) EXPECT_FALSE(sol.regions.is_action(r, c));
    // On the flat part the gain is -(K + kappa), maximized at k_min.
    const auto iv = impulse_max(sol.surface.values.row(0), g, s.costs);
    EXPECT_EQ(iv.argmax.back(), s.costs.k_min);
}

TEST(Dpp, ThetaEqualsTIsZero) {
    const auto s = toy_spec();
    const Grid g{0.1, 4.0, 118, 60, 40};
    const auto sol = solve(s, g);
    const auto r = dpp_residual(s, sol, 0.2, 1.0, 0.2, 0.01, 100, 1);
    EXPECT_EQ(r.residual, 0.0);
}

TEST(Dpp, ClosedFormCaseWithinBudget) {
    const auto s = constant_spec(1.0, 0.3, 0.2, 0.5);
    const Grid g{0.1, 3.0, 146, 100, 20};
    const auto sol = solve(s, g);
    const double budget = g.dt(s.horizon) + g.h();
    for (double x : {0.5, 1.5, 2.5}) {
        const auto r = dpp_residual(s, sol, 0.1, x, 0.55, g.dt(s.horizon), 2000, 4);
        EXPECT_LE(std::abs(r.residual), 3.0 * r.std_error + budget) << x;
    }
}

TEST(Dpp, ToyProblemWithinBudget) {
    const auto s = toy_spec();
    const Grid g{0.1, 6.0, 591, 200, 146};
    const auto sol = solve(s, g);
    const double budget = g.dt(s.horizon) + g.h();
    for (double x : {0.6, 0.9, 1.2, 2.0}) {
        const auto r = dpp_residual(s, sol, 0.2, x, 0.6, g.dt(s.horizon), 4000, 9);
        EXPECT_LE(std::abs(r.residual), 3.0 * r.std_error + budget) << x;
    }
}
