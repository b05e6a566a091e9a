#pragma once

// JSON schema for ModelSpec (all numbers are doubles):
//
//   {
//     "c1": 1.0, "T": 1.0,
//     "lambda":      <curve>,     state-dependent
//     "mu_tilde":    <curve>,     time-dependent
//     "sigma_tilde": <curve>,     time-dependent
//     "beta":        <curve>,     time-dependent hazard, >= 0
//     "utilities": { "f": <utility>, "g1": <utility>, "g2": <utility>,
//                    "C_f": num?, "C_g1": num?, "C_g2": num? },
//     "costs": { "kappa": num, "k_min": num, "k_max": num }
//   }
//
//   <curve>   := number
//              | {"kind": "constant", "value": num}
//              | {"kind": "table", "x": [num...], "y": [num...]}
//   <utility> := <curve>
//              | {"kind": "saturating", "level": U, "scale": a, "rate": b}   U - a*exp(-b*x)

#include "impulse_qvi/model.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace impulse_qvi {

using Json = nlohmann::json;

inline Json curve_to_json(const Curve& c) {
    if (c.kind() == Curve::Kind::constant) return Json{{"kind", "constant"}, {"value", c.ordinates().front()}};
    return Json{{"kind", "table"}, {"x", c.abscissae()}, {"y", c.ordinates()}};
}

inline Curve curve_from_json(const Json& j, const std::string& where) {
    if (j.is_number()) return Curve::constant(j.get<double>());
    if (!j.is_object() || !j.contains("kind")) throw SpecError(where + ": expected a number or an object with \"kind\"");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "constant") return Curve::constant(j.at("value").get<double>());
    if (kind == "table") return Curve::table(j.at("x").get<std::vector<double>>(), j.at("y").get<std::vector<double>>());
    throw SpecError(where + ": unknown curve kind '" + kind + "'");
}

inline Json utility_to_json(const UtilityFunction& u) {
    if (const auto* s = u.saturating())
        return Json{{"kind", "saturating"}, {"level", s->level}, {"scale", s->scale}, {"rate", s->rate}};
    return curve_to_json(*u.curve());
}

inline UtilityFunction utility_from_json(const Json& j, const std::string& where) {
    if (j.is_object() && j.value("kind", "") == "saturating")
        return Saturating{j.value("level", 1.0), j.value("scale", 1.0), j.value("rate", 1.0)};
    return curve_from_json(j, where);
}

inline Json to_json(const ModelSpec& s) {
    Json util{{"f", utility_to_json(s.utilities.f)},
              {"g1", utility_to_json(s.utilities.g1)},
              {"g2", utility_to_json(s.utilities.g2)}};
    if (s.utilities.bound_f) util["C_f"] = *s.utilities.bound_f;
    if (s.utilities.bound_g1) util["C_g1"] = *s.utilities.bound_g1;
    if (s.utilities.bound_g2) util["C_g2"] = *s.utilities.bound_g2;
    return Json{{"c1", s.c1},
                {"T", s.horizon},
                {"lambda", curve_to_json(s.lambda)},
                {"mu_tilde", curve_to_json(s.mu_tilde)},
                {"sigma_tilde", curve_to_json(s.sigma_tilde)},
                {"beta", curve_to_json(s.beta)},
                {"utilities", util},
                {"costs", {{"kappa", s.costs.kappa}, {"k_min", s.costs.k_min}, {"k_max", s.costs.k_max}}}};
}

/// Parses and structurally checks a ModelSpec; throws SpecError with the offending key.
inline ModelSpec model_from_json(const Json& j) {
    ModelSpec s;
    try {
        s.c1 = j.value("c1", 1.0);
        s.horizon = j.at("T").get<double>();
        if (j.contains("lambda")) s.lambda = curve_from_json(j.at("lambda"), "lambda");
        if (j.contains("mu_tilde")) s.mu_tilde = curve_from_json(j.at("mu_tilde"), "mu_tilde");
        if (j.contains("sigma_tilde")) s.sigma_tilde = curve_from_json(j.at("sigma_tilde"), "sigma_tilde");
        if (j.contains("beta")) s.beta = curve_from_json(j.at("beta"), "beta");
        const Json& u = j.at("utilities");
        s.utilities.f = utility_from_json(u.at("f"), "utilities.f");
        s.utilities.g1 = utility_from_json(u.at("g1"), "utilities.g1");
        s.utilities.g2 = utility_from_json(u.at("g2"), "utilities.g2");
        if (u.contains("C_f")) s.utilities.bound_f = u.at("C_f").get<double>();
        if (u.contains("C_g1")) s.utilities.bound_g1 = u.at("C_g1").get<double>();
        if (u.contains("C_g2")) s.utilities.bound_g2 = u.at("C_g2").get<double>();
        const Json& c = j.at("costs");
        s.costs.kappa = c.at("kappa").get<double>();
        s.costs.k_min = c.at("k_min").get<double>();
        s.costs.k_max = c.at("k_max").get<double>();
    } catch (const Json::exception& e) {
        throw SpecError(std::string("model spec: ") + e.what());
    }
    s.check();
    return s;
}

inline ModelSpec load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open spec file: " + path);
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw SpecError("spec file " + path + ": " + e.what());
    }
    return model_from_json(j);
}

} // namespace impulse_qvi
