#include "impulse_qvi/diagnostics.hpp"
#include "impulse_qvi/model_json.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace impulse_qvi;

namespace {

ModelSpec fixture(const char* name) { return load_model(std::string(FIXTURE_DIR) + "/" + name + ".json"); }

const Solution& intervention_solution() {
    static const Solution sol = solve(fixture("intervention"), Grid{0.1, 6.1, 601, 200, 300});
    return sol;
}

double oracle_interp(std::span<const double> v, const Grid& g, double y) {
    const double h = (g.x_max - g.x_min) / static_cast<double>(g.n_x - 1);
    if (y >= g.x_max) return v.back();
    if (y <= g.x_min) return v[0] + (y - g.x_min) * (v[1] - v[0]) / h;
    std::size_t i = std::min(static_cast<std::size_t>((y - g.x_min) / h), g.n_x - 2);
    return v[i] + (v[i + 1] - v[i]) * (y - g.x(i)) / (g.x(i + 1) - g.x(i));
}

} // namespace

TEST(CheckTerminal, PassesAndDetectsCorruption) {
    const auto spec = fixture("closed_form");
    auto sol = solve(spec, Grid{0.1, 3.0, 60, 40, 10});
    EXPECT_TRUE(check_terminal(sol.surface, spec).passed);
    sol.surface.values(40, 7) += 1e-6;
    EXPECT_FALSE(check_terminal(sol.surface, spec).passed);
}

TEST(CheckObstacle, InjectedFault) {
    const auto spec = fixture("intervention");
    const auto& sol = intervention_solution();
    const auto ok = check_obstacle(sol.surface, spec.costs, 1e-8);
    EXPECT_TRUE(ok.passed);
    EXPECT_GE(ok.measured, -1e-8);
    auto bad = sol.surface;
    bad.values(50, 120) = bad.impulse_values(50, 120) - 1e-3;
    const auto rep = check_obstacle(bad, spec.costs, 1e-8);
    EXPECT_FALSE(rep.passed);
    EXPECT_NEAR(rep.worst_x, bad.grid.x(120), 1e-12);
}

TEST(CheckBounds, ZeroData) {
    const auto spec = fixture("zero");
    const auto sol = solve(spec, Grid{0.1, 3.0, 40, 20, 10});
    const auto rep = check_bounds(sol.surface, spec, {200, 0.05, 3});
    EXPECT_TRUE(rep.passed);
    EXPECT_EQ(rep.measured, 0.0);
}

TEST(CheckBounds, ClosedFormMargins) {
    const auto spec = fixture("closed_form");
    const auto sol = solve(spec, Grid{0.1, 3.0, 100, 100, 10});
    const auto rep = check_bounds(sol.surface, spec, {500, 0.01, 3});
    EXPECT_TRUE(rep.passed);
    // C1 = C_f T + C_g1 = 1; the largest value is at t = 0.
    const double vmax = *std::max_element(sol.surface.values.flat().begin(), sol.surface.values.flat().end());
    EXPECT_NEAR(vmax, 2.0 * (1.0 - std::exp(-0.5)), 1e-2);
    EXPECT_NEAR(value_upper_bound(spec, sol.surface.grid) - vmax, 1.0 - vmax, 1e-15);
}

TEST(CheckBounds, UpperMarginOnSolvedSpec) {
    const auto spec = fixture("intervention");
    const auto rep = check_bounds(intervention_solution().surface, spec, {0, 0.01, 1});
    EXPECT_TRUE(rep.passed);
    EXPECT_GE(rep.measured, -1e-8);
}

TEST(CheckRegularity, ConstantDataLipschitzZero) {
    const auto spec = fixture("closed_form");
    const auto coarse = solve(spec, Grid{0.1, 3.0, 59, 40, 10});
    const auto p = regularity_proxies(coarse.surface);
    EXPECT_LT(p.lipschitz_x, 1e-12);
}

TEST(CheckRegularity, ClosedFormHolderProxy) {
    const auto spec = fixture("closed_form");
    const Grid g{0.1, 3.0, 59, 400, 10};
    const auto sol = solve(spec, g);
    auto exact = [](double t) { return 2.0 * (1.0 - std::exp(-0.5 * (1.0 - t))); };
    double oracle = 0.0;
    for (double d : {0.5, 0.25, 0.125})
        for (double t = 0.0; t + d <= 1.0 + 1e-12; t += d)
            oracle = std::max(oracle, std::abs(exact(t + d) - exact(t)) / ((1.0 + g.x_min) * std::sqrt(d)));
    EXPECT_NEAR(regularity_proxies(sol.surface).holder_t, oracle, 5.0 * g.dt(1.0));
}

TEST(CheckRegularity, GenericStable) {
    const auto spec = fixture("generic");
    const Grid g{0.1, 4.0, 157, 80, 40};
    const auto a = solve(spec, g);
    const auto b = solve(spec, refine(g, Refinement::space_and_time));
    const auto rep = check_regularity(a.surface, b.surface);
    EXPECT_TRUE(rep.passed) << rep.measured;
}

TEST(CheckSmoothFit, VacuousWhenNoActions) {
    const auto spec = fixture("closed_form");
    const auto sol = solve(spec, Grid{0.1, 3.0, 60, 40, 10});
    const auto rep = check_smooth_fit(sol, spec.costs);
    EXPECT_TRUE(rep.vacuous);
    EXPECT_TRUE(rep.passed);
}

TEST(CheckSmoothFit, SlopeOneSyntheticSurface) {
    const Grid g{0.1, 3.0, 59, 10, 11};
    const CostParams costs{0.05, 0.1, 1.1};
    Solution sol;
    sol.surface.grid = g;
    sol.surface.values = Matrix(g.n_t + 1, g.n_x);
    sol.surface.impulse_values = Matrix(g.n_t + 1, g.n_x);
    sol.regions = {g.n_t + 1, g.n_x, std::vector<Region>((g.n_t + 1) * g.n_x, Region::continuation), 1e-8};
    sol.policy.xi0 = Matrix(g.n_t + 1, g.n_x);
    for (std::size_t r = 0; r <= g.n_t; ++r)
        for (std::size_t c = 0; c < g.n_x; ++c) {
            sol.surface.values(r, c) = g.x(c) + 0.1 * static_cast<double>(r);
            sol.policy.xi0(r, c) = kNaN;
        }
    for (std::size_t r = 0; r < g.n_t; ++r)
        for (std::size_t c = 2; c < 12; ++c) {
            sol.regions.labels[r * g.n_x + c] = Region::action;
            sol.policy.xi0(r, c) = 0.5;
        }
    const auto rep = check_smooth_fit(sol, costs);
    EXPECT_FALSE(rep.vacuous);
    EXPECT_TRUE(rep.passed);
    EXPECT_LT(rep.measured, 1e-12);
}

TEST(CheckSmoothFit, InterventionFixture) {
    const auto spec = fixture("intervention");
    const auto& sol = intervention_solution();
    ASSERT_GT(sol.regions.action_count(), 0u);
    const auto rep = check_smooth_fit(sol, spec.costs, {1e-6});
    EXPECT_FALSE(rep.vacuous);
    EXPECT_TRUE(rep.passed) << rep.measured << " > " << rep.threshold;
    EXPECT_NEAR(rep.threshold, 5.0 * 0.01 + 1e-6 / 0.01, 1e-12);
}

TEST(CheckTheta, VacuousWhenNoActions) {
    const auto spec = fixture("closed_form");
    const auto sol = solve(spec, Grid{0.1, 3.0, 60, 40, 10});
    const auto rep = check_theta_structure(sol, spec.costs);
    EXPECT_TRUE(rep.vacuous);
    EXPECT_TRUE(rep.passed);
}

TEST(CheckTheta, BruteForceThetaSets) {
    const auto spec = fixture("intervention");
    const auto& sol = intervention_solution();
    const auto& g = sol.surface.grid;
    std::vector<std::pair<std::size_t, std::size_t>> nodes;
    for (std::size_t r = 0; r < g.n_t; ++r)
        for (std::size_t c = 0; c < g.n_x; ++c)
            if (sol.regions.is_action(r, c)) nodes.emplace_back(r, c);
    ASSERT_GE(nodes.size(), 100u);
    std::mt19937_64 rng(8);
    const double step = (spec.costs.k_max - spec.costs.k_min) / static_cast<double>(g.n_k - 1);
    for (int i = 0; i < 100; ++i) {
        const auto [r, c] = nodes[rng() % nodes.size()];
        const auto v = sol.surface.values.row(r);
        std::vector<double> vals(g.n_k), ks(g.n_k);
        double best = -1e300;
        for (std::size_t j = 0; j < g.n_k; ++j) {
            ks[j] = j + 1 == g.n_k ? spec.costs.k_max : spec.costs.k_min + step * static_cast<double>(j);
            vals[j] = oracle_interp(v, g, g.x(c) + ks[j]) - (ks[j] + spec.costs.kappa);
            best = std::max(best, vals[j]);
        }
        std::vector<double> expected;
        for (std::size_t j = 0; j < g.n_k; ++j)
            if (vals[j] >= best - 1e-12 * (1.0 + std::abs(best))) expected.push_back(ks[j]);
        EXPECT_EQ(theta_set(v, g, g.x(c), spec.costs), expected);
    }
    const auto rep = check_theta_structure(sol, spec.costs);
    EXPECT_TRUE(rep.passed);
    EXPECT_FALSE(rep.vacuous);
}

TEST(CheckMonotone, MonotoneFixture) {
    const auto spec = fixture("intervention");
    ASSERT_TRUE(has_monotone_data(spec, intervention_solution().surface.grid));
    const auto rep = check_monotone_structure(intervention_solution(), spec);
    EXPECT_FALSE(rep.vacuous);
    EXPECT_TRUE(rep.passed) << rep.measured;
}

TEST(CheckMonotone, VacuousOnNonMonotoneData) {
    auto spec = fixture("closed_form");
    spec.utilities.f = Curve::table({0.0, 1.0, 2.0}, {0.0, 1.0, 0.5});
    const auto sol = solve(spec, Grid{0.1, 3.0, 60, 20, 10});
    EXPECT_TRUE(check_monotone_structure(sol, spec).vacuous);
}

TEST(CheckDpp, ClosedFormFixture) {
    const auto spec = fixture("closed_form");
    const auto sol = solve(spec, Grid{0.1, 3.0, 117, 100, 10});
    const auto rep = check_dpp(spec, sol, {10, 1000, 0.0, 5});
    EXPECT_TRUE(rep.passed) << rep.measured;
}

TEST(RebuildSolution, ReproducesLabels) {
    const auto spec = fixture("intervention");
    const auto& sol = intervention_solution();
    const auto again = rebuild_solution(sol.surface, spec.costs, sol.regions.epsilon_region);
    EXPECT_EQ(again.regions.labels, sol.regions.labels);
    EXPECT_EQ(again.surface.impulse_values, sol.surface.impulse_values);
}

TEST(Convergence, ClosedFormFirstOrderInTime) {
    const auto spec = fixture("closed_form");
    const auto rows = convergence_study(spec, Grid{0.1, 3.0, 51, 25, 5}, 4, Refinement::time_only);
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double ratio = rows[i - 1].max_abs_error / rows[i].max_abs_error;
        EXPECT_GE(ratio, 1.6);
        EXPECT_LE(ratio, 2.4);
    }
}

TEST(Convergence, GenericCauchyDecreasing) {
    const auto spec = fixture("generic");
    const auto rows = convergence_study(spec, Grid{0.1, 4.0, 79, 20, 20}, 4, Refinement::space_and_time);
    for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_LT(rows[i].cauchy_difference, rows[i - 1].cauchy_difference);
}

TEST(Convergence, ZeroDataDifferencesExactlyZero) {
    const auto spec = fixture("zero");
    const auto rows = convergence_study(spec, Grid{0.1, 3.0, 21, 10, 5}, 3, Refinement::space_and_time);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].cauchy_difference, 0.0);
    EXPECT_THROW(convergence_study(spec, Grid{0.1, 3.0, 21, 10, 5}, 2, Refinement::time_only), SpecError);
}
