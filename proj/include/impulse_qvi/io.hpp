#pragma once

// CSV and JSON artifacts.
//
// Every file starts with a provenance line (CSV: "# impulse_qvi key=value ...",
// JSON: a "provenance" object) carrying the config hash and seed.
//
// surface.csv   t,x,V,IV,label,xi0          label 0 = continuation, 1 = action; xi0 empty off the action region
// boundary.csv  t,component,lower,upper     one row per maximal run of action nodes in a layer
// policy.csv    t,x,xi0,landing             action nodes only
// paths.csv     path,step,time,state,impulse_flag,impulse_size
// convergence.csv level,n_x,n_t,n_k,h,dt,max_abs_error,max_rel_error,cauchy_difference,observed_ratio
//
// Numbers are written with 17 significant digits so that files round-trip.

#include "impulse_qvi/diagnostics.hpp"
#include "impulse_qvi/dynamics.hpp"
#include "impulse_qvi/model.hpp"
#include "impulse_qvi/model_json.hpp"
#include "impulse_qvi/solver.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace impulse_qvi {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Provenance {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
};

inline Json to_json(const Provenance& p) {
    return Json{{"command", p.command}, {"config_hash", p.config_hash}, {"seed", p.seed}};
}

inline Json to_json(const Grid& g) {
    return Json{{"x_min", g.x_min}, {"x_max", g.x_max}, {"n_x", g.n_x}, {"n_t", g.n_t}, {"n_k", g.n_k}};
}

/// NaN and infinities become null.
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Surface

inline std::string surface_header_line(const Provenance& p, const ValueSurface& s) {
    const auto& g = s.grid;
    return "# impulse_qvi surface config_hash=" + p.config_hash + " seed=" + std::to_string(p.seed) +
           " x_min=" + fmt(g.x_min) + " x_max=" + fmt(g.x_max) + " n_x=" + std::to_string(g.n_x) +
           " n_t=" + std::to_string(g.n_t) + " n_k=" + std::to_string(g.n_k) + " horizon=" + fmt(s.horizon) +
           " inner_tol=" + fmt(s.inner_tol) + "\n";
}

inline void write_surface_csv(std::ostream& out, const Provenance& p, const Solution& sol) {
    const auto& s = sol.surface;
    out << surface_header_line(p, s) << "t,x,V,IV,label,xi0\n";
    for (std::size_t r = 0; r < s.values.rows(); ++r) {
        const std::string t = fmt(s.grid.t(r, s.horizon));
        for (std::size_t c = 0; c < s.values.cols(); ++c) {
            const bool act = sol.regions.is_action(r, c);
            out << t << ',' << fmt(s.grid.x(c)) << ',' << fmt(s.values(r, c)) << ',' << fmt(s.impulse_values(r, c))
                << ',' << (act ? 1 : 0) << ',' << (act ? fmt(sol.policy.xi0(r, c)) : std::string()) << '\n';
        }
    }
}

inline std::map<std::string, std::string> parse_provenance_line(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

/// Reads surface.csv back. Only t, x and V are used; IV and labels are recomputed.
inline ValueSurface read_surface_csv(std::istream& in, const std::string& name = "surface") {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# impulse_qvi surface", 0) != 0)
        throw SpecError(name + ": missing surface provenance line");
    const auto kv = parse_provenance_line(line);
    auto need = [&](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw SpecError(name + ": provenance line lacks " + key);
        return it->second;
    };
    ValueSurface s;
    try {
        s.grid = Grid{std::stod(need("x_min")), std::stod(need("x_max")), std::stoul(need("n_x")),
                      std::stoul(need("n_t")), std::stoul(need("n_k"))};
        s.horizon = std::stod(need("horizon"));
        s.inner_tol = std::stod(need("inner_tol"));
    } catch (const std::logic_error&) {
        throw SpecError(name + ": malformed provenance line");
    }
    s.grid.check();
    if (!std::getline(in, line) || line != "t,x,V,IV,label,xi0") throw SpecError(name + ": unexpected header");
    s.values = Matrix(s.grid.n_t + 1, s.grid.n_x);
    const std::size_t expected = s.values.rows() * s.values.cols();
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (n >= expected) throw SpecError(name + ": too many rows");
        std::istringstream row(line);
        std::string t, x, v;
        std::getline(row, t, ',');
        std::getline(row, x, ',');
        std::getline(row, v, ',');
        try {
            s.values(n / s.values.cols(), n % s.values.cols()) = std::stod(v);
        } catch (const std::logic_error&) {
            throw SpecError(name + ": bad value on data row " + std::to_string(n + 1));
        }
        ++n;
    }
    if (n != expected) throw SpecError(name + ": expected " + std::to_string(expected) + " rows, got " + std::to_string(n));
    s.inner_iterations.assign(s.values.rows(), 0);
    s.residuals.assign(s.values.rows(), 0.0);
    return s;
}

inline void write_boundary_csv(std::ostream& out, const Provenance& p, const Solution& sol) {
    const auto& s = sol.surface;
    out << "# impulse_qvi boundary config_hash=" << p.config_hash << " seed=" << p.seed << "\n";
    out << "t,component,lower,upper\n";
    for (std::size_t r = 0; r < s.values.rows(); ++r) {
        std::size_t comp = 0;
        std::size_t c = 0;
        while (c < s.values.cols()) {
            if (!sol.regions.is_action(r, c)) {
                ++c;
                continue;
            }
            const std::size_t lo = c;
            while (c + 1 < s.values.cols() && sol.regions.is_action(r, c + 1)) ++c;
            out << fmt(s.grid.t(r, s.horizon)) << ',' << comp++ << ',' << fmt(s.grid.x(lo)) << ',' << fmt(s.grid.x(c))
                << '\n';
            ++c;
        }
    }
}

inline void write_policy_csv(std::ostream& out, const Provenance& p, const Solution& sol) {
    const auto& s = sol.surface;
    out << "# impulse_qvi policy config_hash=" << p.config_hash << " seed=" << p.seed << "\n";
    out << "t,x,xi0,landing\n";
    for (std::size_t r = 0; r < s.values.rows(); ++r)
        for (std::size_t c = 0; c < s.values.cols(); ++c)
            if (sol.regions.is_action(r, c)) {
                const double xi = sol.policy.xi0(r, c);
                out << fmt(s.grid.t(r, s.horizon)) << ',' << fmt(s.grid.x(c)) << ',' << fmt(xi) << ','
                    << fmt(s.grid.x(c) + xi) << '\n';
            }
}

inline Json solve_summary(const Provenance& p, const ModelSpec& spec, const Solution& sol) {
    const auto& s = sol.surface;
    Json j;
    j["provenance"] = to_json(p);
    j["grid"] = to_json(s.grid);
    j["horizon"] = s.horizon;
    j["inner_tol"] = s.inner_tol;
    j["epsilon_region"] = sol.regions.epsilon_region;
    double max_res = 0.0;
    for (double r : s.residuals) max_res = std::max(max_res, r);
    int max_it = 0;
    long total_it = 0;
    for (int it : s.inner_iterations) {
        max_it = std::max(max_it, it);
        total_it += it;
    }
    j["max_obstacle_residual"] = max_res;
    j["max_inner_iterations"] = max_it;
    j["total_inner_iterations"] = total_it;
    j["action_nodes"] = sol.regions.action_count();
    if (no_intervention_value(spec, 0.0)) {
        const auto [abs_err, rel_err] = closed_form_error(spec, s);
        j["closed_form"] = Json{{"max_abs_error", abs_err}, {"max_rel_error", number(rel_err)}};
    } else {
        j["closed_form"] = nullptr;
    }
    j["inner_iterations"] = s.inner_iterations;
    Json res = Json::array();
    for (double r : s.residuals) res.push_back(r);
    j["residuals"] = res;
    return j;
}

// ---------------------------------------------------------------------------
// Simulation

inline void write_paths_csv(std::ostream& out, const Provenance& p, const std::vector<PathRecord>& paths) {
    out << "# impulse_qvi paths config_hash=" << p.config_hash << " seed=" << p.seed << "\n";
    out << "path,step,time,state,impulse_flag,impulse_size\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& rec = paths[i];
        std::size_t next = 0;
        for (std::size_t k = 0; k < rec.times.size(); ++k) {
            double size = 0.0;
            bool hit = false;
            while (next < rec.impulses_applied.size() && rec.impulses_applied[next].step == k) {
                size += rec.impulses_applied[next].size;
                hit = true;
                ++next;
            }
            out << i << ',' << k << ',' << fmt(rec.times[k]) << ',' << fmt(rec.states[k]) << ',' << (hit ? 1 : 0)
                << ',' << fmt(size) << '\n';
        }
    }
}

inline Json to_json(const McEstimate& e) {
    return Json{{"estimate", e.estimate}, {"std_error", e.std_error}, {"n_paths", e.n_paths}, {"seed", e.seed}};
}

inline Json to_json(const FiltrationReport& r) {
    return Json{{"with_default", to_json(r.with_default)},
                {"survival_weighted", to_json(r.survival_weighted)},
                {"difference", r.difference},
                {"combined_std_error", r.combined_std_error},
                {"within_3_se", r.passed}};
}

// ---------------------------------------------------------------------------
// Checks

/// Runtimes are left out so that reports are reproducible byte for byte.
inline Json to_json(const CheckReport& r) {
    return Json{{"name", r.name},           {"operation", r.operation}, {"passed", r.passed},
                {"vacuous", r.vacuous},     {"measured", number(r.measured)}, {"threshold", number(r.threshold)},
                {"worst_t", number(r.worst_t)}, {"worst_x", number(r.worst_x)}, {"notes", r.notes}};
}

inline bool all_passed(const std::vector<CheckReport>& reports) {
    for (const auto& r : reports)
        if (!r.vacuous && !r.passed) return false;
    return true;
}

inline std::string check_summary_text(const Provenance& p, const std::vector<CheckReport>& reports) {
    std::ostringstream out;
    out << "impulse_qvi check  config_hash=" << p.config_hash << "  seed=" << p.seed << "\n";
    for (const auto& r : reports) {
        const char* status = r.vacuous ? "VACUOUS" : (r.passed ? "PASS" : "FAIL");
        out << status << "  " << r.name << "  measured=" << fmt(r.measured) << "  threshold=" << fmt(r.threshold);
        if (std::isfinite(r.worst_t)) out << "  at t=" << fmt(r.worst_t) << " x=" << fmt(r.worst_x);
        out << "\n";
        for (const auto& n : r.notes) out << "      " << n << "\n";
    }
    out << (all_passed(reports) ? "all checks passed\n" : "some checks failed\n");
    return out.str();
}

inline Json to_json(const ValidationReport& rep) {
    Json conds = Json::array();
    for (const auto& c : rep.conditions)
        conds.push_back(Json{{"name", c.name},
                             {"passed", c.passed},
                             {"warning_only", c.warning_only},
                             {"measured", number(c.measured)},
                             {"worst_x", number(c.worst_x)},
                             {"message", c.message}});
    return Json{{"ok", rep.ok()},
                {"lipschitz_lambda", rep.lipschitz_lambda},
                {"lipschitz_f", rep.lipschitz_f},
                {"lipschitz_g1", rep.lipschitz_g1},
                {"lipschitz_g2", rep.lipschitz_g2},
                {"bound_f", rep.bound_f},
                {"bound_g1", rep.bound_g1},
                {"bound_g2", rep.bound_g2},
                {"no_terminal_impulse_margin", number(rep.no_terminal_impulse_margin)},
                {"min_abs_diffusion", number(rep.min_abs_diffusion)},
                {"conditions", conds}};
}

inline void write_convergence_csv(std::ostream& out, const Provenance& p, const std::vector<ConvergenceRow>& rows,
                                  double horizon) {
    out << "# impulse_qvi convergence config_hash=" << p.config_hash << " seed=" << p.seed << "\n";
    out << "level,n_x,n_t,n_k,h,dt,max_abs_error,max_rel_error,cauchy_difference,observed_ratio\n";
    for (std::size_t l = 0; l < rows.size(); ++l) {
        const auto& r = rows[l];
        out << l << ',' << r.grid.n_x << ',' << r.grid.n_t << ',' << r.grid.n_k << ',' << fmt(r.grid.h()) << ','
            << fmt(r.grid.dt(horizon)) << ',' << fmt(r.max_abs_error) << ',' << fmt(r.max_rel_error) << ','
            << fmt(r.cauchy_difference) << ',' << fmt(r.observed_ratio) << '\n';
    }
}

} // namespace impulse_qvi
