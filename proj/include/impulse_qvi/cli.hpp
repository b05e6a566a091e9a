#pragma once

// Batch front-end: impulse_qvi solve | simulate | validate | check | converge.
// Exit codes: 0 success, 1 check failure, 2 usage or spec error.

#include "impulse_qvi/diagnostics.hpp"
#include "impulse_qvi/dynamics.hpp"
#include "impulse_qvi/io.hpp"
#include "impulse_qvi/model_json.hpp"
#include "impulse_qvi/solver.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace impulse_qvi {

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_usage = 2 };

struct RunConfig {
    std::string spec_path;
    std::string out_dir = ".";
    Grid grid{0.1, 3.0, 201, 200, 100};
    std::size_t n_paths = 2000;
    double dt = 0.0;  ///< Monte Carlo step; 0 means the solver time step
    std::optional<std::uint64_t> seed;
    double tol_inner = 1e-9;
    double eps_region = -1.0;
    std::string scheme = "implicit";

    std::string surface_path;
    std::string control = "none";
    std::string schedule;
    double t0 = 0.0;
    double x0 = 1.0;
    std::size_t record_paths = 5;
    std::size_t levels = 3;
    std::string refine = "time";
};

namespace detail {

inline SolverOptions solver_options(const RunConfig& c) {
    SolverOptions o;
    o.inner_tol = c.tol_inner;
    o.eps_region = c.eps_region;
    o.scheme = c.scheme == "projection" ? ImpulseScheme::projection : ImpulseScheme::implicit_obstacle;
    return o;
}

/// Hash over everything that determines the artifacts (spec contents, not its path).
inline std::string config_hash(const std::string& command, const ModelSpec& spec, const RunConfig& c) {
    std::ostringstream s;
    s << command << '|' << to_json(spec).dump() << '|' << fmt(c.grid.x_min) << ',' << fmt(c.grid.x_max) << ','
      << c.grid.n_x << ',' << c.grid.n_t << ',' << c.grid.n_k << '|' << c.n_paths << ',' << fmt(c.dt) << ','
      << (c.seed ? std::to_string(*c.seed) : "-") << '|' << fmt(c.tol_inner) << ',' << fmt(c.eps_region) << ','
      << c.scheme << '|' << c.control << ',' << c.schedule << ',' << fmt(c.t0) << ',' << fmt(c.x0) << ','
      << c.record_paths << ',' << c.levels << ',' << c.refine;
    if (!c.surface_path.empty()) {
        std::ifstream in(c.surface_path, std::ios::binary);
        s << '|' << in.rdbuf();
    }
    return hex64(fnv1a(s.str()));
}

/// "t:K,t:K,..."
inline ImpulseSchedule parse_schedule(const std::string& text) {
    ImpulseSchedule s;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw SpecError("schedule entry '" + item + "' is not of the form t:K");
        try {
            s.events.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
        } catch (const std::logic_error&) {
            throw SpecError("schedule entry '" + item + "' is not numeric");
        }
    }
    return s;
}

inline std::string out_path(const RunConfig& c, const std::string& file) {
    return (std::filesystem::path(c.out_dir) / file).string();
}

inline void prepare_out(const RunConfig& c) {
    std::error_code ec;
    std::filesystem::create_directories(c.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + c.out_dir);
}

inline Solution load_or_solve(const ModelSpec& spec, const RunConfig& c) {
    if (c.surface_path.empty()) return solve(spec, c.grid, solver_options(c));
    std::ifstream in(c.surface_path, std::ios::binary);
    if (!in) throw SpecError("cannot open surface file: " + c.surface_path);
    auto surface = read_surface_csv(in, c.surface_path);
    if (std::abs(surface.horizon - spec.horizon) > 1e-12) throw SpecError("surface horizon does not match the spec");
    const double eps = c.eps_region > 0.0 ? c.eps_region : 10.0 * surface.inner_tol;
    return rebuild_solution(std::move(surface), spec.costs, eps);
}

inline std::uint64_t require_seed(const RunConfig& c, const char* command) {
    if (!c.seed) throw SpecError(std::string(command) + " needs --seed");
    return *c.seed;
}

inline double mc_step(const RunConfig& c, const ModelSpec& spec) {
    return c.dt > 0.0 ? c.dt : c.grid.dt(spec.horizon);
}

inline int cmd_solve(const RunConfig& c, std::ostream& out) {
    const auto spec = load_model(c.spec_path);
    c.grid.check();
    const Provenance p{"solve", config_hash("solve", spec, c), c.seed.value_or(0)};
    const auto sol = solve(spec, c.grid, solver_options(c));
    prepare_out(c);
    std::ostringstream surface, boundary, policy;
    write_surface_csv(surface, p, sol);
    write_boundary_csv(boundary, p, sol);
    write_policy_csv(policy, p, sol);
    write_text(out_path(c, "surface.csv"), surface.str());
    write_text(out_path(c, "boundary.csv"), boundary.str());
    write_text(out_path(c, "policy.csv"), policy.str());
    const auto summary = solve_summary(p, spec, sol);
    write_text(out_path(c, "summary.json"), dump(summary));
    out << "solved " << c.grid.n_x << "x" << c.grid.n_t << " grid, " << sol.regions.action_count()
        << " action nodes";
    if (!summary["closed_form"].is_null()) out << ", closed-form max abs error " << fmt(summary["closed_form"]["max_abs_error"].get<double>());
    out << "\n";
    return exit_ok;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
    const auto spec = load_model(c.spec_path);
    const std::uint64_t seed = require_seed(c, "simulate");
    if (c.n_paths < 2) throw SpecError("simulate needs --paths >= 2");
    const Provenance p{"simulate", config_hash("simulate", spec, c), seed};
    std::optional<Solution> sol;
    Control control = ImpulseSchedule{};
    if (c.control == "schedule") {
        control = parse_schedule(c.schedule);
    } else if (c.control == "feedback") {
        c.grid.check();
        sol = load_or_solve(spec, c);
        control = FeedbackPolicy(*sol);
    } else if (c.control != "none") {
        throw SpecError("unknown control '" + c.control + "'");
    }
    const double dt = mc_step(c, spec);
    const McRequest req{c.t0, c.x0, dt, c.n_paths, seed};
    const auto rep = filtration_reduction_check(spec, control, req);

    std::vector<PathRecord> paths;
    for (std::size_t i = 0; i < std::min(c.record_paths, c.n_paths); ++i)
        paths.push_back(simulate(spec, c.t0, c.x0, control, {dt, seed, i, std::nullopt}));

    Json j;
    j["provenance"] = to_json(p);
    j["t0"] = c.t0;
    j["x0"] = c.x0;
    j["dt"] = dt;
    j["control"] = c.control;
    j["report"] = to_json(rep);
    const auto exact = c.control == "none" ? no_intervention_value(spec, c.t0) : std::nullopt;
    if (exact) {
        const double z = rep.survival_weighted.std_error > 0.0
                             ? (rep.survival_weighted.estimate - *exact) / rep.survival_weighted.std_error
                             : (rep.survival_weighted.estimate == *exact ? 0.0 : kNaN);
        j["closed_form"] = Json{{"value", *exact},
                                {"with_default_error", rep.with_default.estimate - *exact},
                                {"survival_weighted_error", rep.survival_weighted.estimate - *exact},
                                {"survival_weighted_z", number(z)}};
    } else {
        j["closed_form"] = nullptr;
    }
    prepare_out(c);
    std::ostringstream csv;
    write_paths_csv(csv, p, paths);
    write_text(out_path(c, "paths.csv"), csv.str());
    write_text(out_path(c, "mc_report.json"), dump(j));
    out << "with default " << fmt(rep.with_default.estimate) << " +- " << fmt(rep.with_default.std_error)
        << ", survival weighted " << fmt(rep.survival_weighted.estimate) << " +- "
        << fmt(rep.survival_weighted.std_error) << "\n";
    return exit_ok;
}

inline int cmd_validate(const RunConfig& c, std::ostream& out) {
    const auto spec = load_model(c.spec_path);
    c.grid.check();
    const Provenance p{"validate", config_hash("validate", spec, c), c.seed.value_or(0)};
    const auto rep = validate(spec, c.grid.nodes(), std::max<std::size_t>(c.grid.n_k, 2));
    Json j;
    j["provenance"] = to_json(p);
    j["validation"] = to_json(rep);
    prepare_out(c);
    write_text(out_path(c, "validation.json"), dump(j));
    for (const auto& cond : rep.conditions) {
        const char* status = cond.passed ? "ok  " : (cond.warning_only ? "warn" : "FAIL");
        out << status << "  " << cond.name;
        if (!cond.message.empty()) out << "  " << cond.message;
        out << "\n";
    }
    return rep.ok() ? exit_ok : exit_check_failed;
}

inline int cmd_check(const RunConfig& c, std::ostream& out) {
    const auto spec = load_model(c.spec_path);
    const std::uint64_t seed = require_seed(c, "check");
    c.grid.check();
    const Provenance p{"check", config_hash("check", spec, c), seed};
    const auto sol = load_or_solve(spec, c);
    const auto& s = sol.surface;
    const double step = s.grid.dt(spec.horizon);
    const double mc_dt = c.dt > 0.0 ? c.dt : step;

    std::vector<CheckReport> reports;
    reports.push_back(check_terminal(s, spec));
    reports.push_back(check_obstacle(s, spec.costs, 1e-8));
    reports.push_back(check_bounds(s, spec, {c.n_paths, mc_dt, seed}));
    {
        const auto fine = solve(spec, refine(s.grid, Refinement::space_and_time), solver_options(c));
        reports.push_back(check_regularity(s, fine.surface));
    }
    reports.push_back(check_smooth_fit(sol, spec.costs));
    reports.push_back(check_theta_structure(sol, spec.costs));
    reports.push_back(check_monotone_structure(sol, spec));
    reports.push_back(check_dpp(spec, sol, {20, c.n_paths, c.dt, seed}));

    Json j;
    j["provenance"] = to_json(p);
    j["grid"] = to_json(s.grid);
    j["domain_restriction"] = "checks are restricted to x >= x_min > 0, where the diffusion is nondegenerate";
    Json arr = Json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    j["checks"] = arr;
    j["all_passed"] = all_passed(reports);
    prepare_out(c);
    const auto text = check_summary_text(p, reports);
    write_text(out_path(c, "checks.json"), dump(j));
    write_text(out_path(c, "checks.txt"), text);
    out << text;
    return all_passed(reports) ? exit_ok : exit_check_failed;
}

inline int cmd_converge(const RunConfig& c, std::ostream& out) {
    const auto spec = load_model(c.spec_path);
    c.grid.check();
    const Refinement mode = c.refine == "space-time" ? Refinement::space_and_time : Refinement::time_only;
    const Provenance p{"converge", config_hash("converge", spec, c), c.seed.value_or(0)};
    const auto rows = convergence_study(spec, c.grid, c.levels, mode, solver_options(c));
    Json j;
    j["provenance"] = to_json(p);
    j["refine"] = c.refine;
    Json arr = Json::array();
    for (const auto& r : rows)
        arr.push_back(Json{{"grid", to_json(r.grid)},
                           {"max_abs_error", number(r.max_abs_error)},
                           {"max_rel_error", number(r.max_rel_error)},
                           {"cauchy_difference", number(r.cauchy_difference)},
                           {"observed_ratio", number(r.observed_ratio)}});
    j["levels"] = arr;
    prepare_out(c);
    std::ostringstream csv;
    write_convergence_csv(csv, p, rows, spec.horizon);
    write_text(out_path(c, "convergence.csv"), csv.str());
    write_text(out_path(c, "convergence.json"), dump(j));
    out << csv.str();
    return exit_ok;
}

} // namespace detail

/// Parses argv and runs one subcommand. Never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Finite-difference solver and diagnostics for impulse-control QVIs", "impulse_qvi"};
    app.require_subcommand(1);
    RunConfig c;
    std::uint64_t seed = 0;

    auto add_spec = [&](CLI::App* sub) {
        sub->add_option("--spec", c.spec_path, "model spec JSON")->required();
        sub->add_option("--out", c.out_dir, "output directory");
    };
    auto add_grid = [&](CLI::App* sub) {
        sub->add_option("--nx", c.grid.n_x, "space nodes")->check(CLI::PositiveNumber);
        sub->add_option("--nt", c.grid.n_t, "time steps")->check(CLI::PositiveNumber);
        sub->add_option("--nk", c.grid.n_k, "impulse samples")->check(CLI::PositiveNumber);
        sub->add_option("--xmin", c.grid.x_min, "lower end of the space grid");
        sub->add_option("--xmax", c.grid.x_max, "upper end of the space grid");
        sub->add_option("--tol-inner", c.tol_inner, "inner fixed-point tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--eps-region", c.eps_region, "action-region threshold on V - IV");
        sub->add_option("--scheme", c.scheme, "impulse constraint treatment")
            ->check(CLI::IsMember({"implicit", "projection"}));
    };
    auto add_mc = [&](CLI::App* sub) {
        sub->add_option("--paths", c.n_paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
        sub->add_option("--dt", c.dt, "Monte Carlo time step (default: solver step)")->check(CLI::NonNegativeNumber);
        sub->add_option("--seed", seed, "master seed");
    };

    auto* solve_cmd = app.add_subcommand("solve", "solve the QVI and write surface, boundary, policy and summary");
    add_spec(solve_cmd);
    add_grid(solve_cmd);

    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo costs under a control, both representations");
    add_spec(sim_cmd);
    add_grid(sim_cmd);
    add_mc(sim_cmd);
    sim_cmd->add_option("--control", c.control, "none | schedule | feedback")
        ->check(CLI::IsMember({"none", "schedule", "feedback"}));
    sim_cmd->add_option("--schedule", c.schedule, "impulses as t:K,t:K,...");
    sim_cmd->add_option("--surface", c.surface_path, "surface.csv from solve (feedback control)");
    sim_cmd->add_option("--t0", c.t0, "start time");
    sim_cmd->add_option("--x0", c.x0, "start state");
    sim_cmd->add_option("--record", c.record_paths, "number of paths written to paths.csv");

    auto* val_cmd = app.add_subcommand("validate", "check the model hypotheses on the grid");
    add_spec(val_cmd);
    add_grid(val_cmd);

    auto* check_cmd = app.add_subcommand("check", "run all diagnostics on a solved surface");
    add_spec(check_cmd);
    add_grid(check_cmd);
    add_mc(check_cmd);
    check_cmd->add_option("--surface", c.surface_path, "surface.csv from solve (default: solve now)");

    auto* conv_cmd = app.add_subcommand("converge", "refinement study");
    add_spec(conv_cmd);
    add_grid(conv_cmd);
    conv_cmd->add_option("--levels", c.levels, "number of grids (>= 3)");
    conv_cmd->add_option("--refine", c.refine, "time | space-time")->check(CLI::IsMember({"time", "space-time"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "impulse_qvi: " << e.what() << "\n";
        return exit_usage;
    }
    for (auto* sub : {sim_cmd, check_cmd})
        if (sub->parsed() && sub->count("--seed") > 0) c.seed = seed;

    try {
        if (solve_cmd->parsed()) return detail::cmd_solve(c, out);
        if (sim_cmd->parsed()) return detail::cmd_simulate(c, out);
        if (val_cmd->parsed()) return detail::cmd_validate(c, out);
        if (check_cmd->parsed()) return detail::cmd_check(c, out);
        if (conv_cmd->parsed()) return detail::cmd_converge(c, out);
    } catch (const SpecError& e) {
        err << "impulse_qvi: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "impulse_qvi: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}

} // namespace impulse_qvi
