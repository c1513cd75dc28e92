#pragma once

// JSON lattice configuration:
//
//   {
//     "modes": [{"label": "a", "nu_GHz": 4.1589, "kappa_MHz": 1.0147, "eta": 0.68}, ...],
//     "couplings": [{"from": "a", "to": "c", "beta": 0.8452, "phase_rad": 0.0,
//                    "pump_nu_GHz": 3.3136, "carries_loop_phase": true}, ...],
//     "phi_off_rad": 0.0,                                     (optional)
//     "scale_factors": [{"out": "a", "in": "b", "C": 19.1}, ...]  (optional)
//   }
//
// Unknown keys are rejected so typos do not silently fall back to defaults.

#include <fstream>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "synthlat/errors.hpp"
#include "synthlat/format.hpp"
#include "synthlat/lattice.hpp"
#include "synthlat/model.hpp"

namespace synthlat {

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ParseError(0, where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ParseError(0, where + ": unknown field '" + key + "'");
    }
}

inline double number(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ParseError(0, where + ": missing field '" + key + "'");
    if (!j.at(key).is_number()) throw ParseError(0, where + ": field '" + key + "' must be a number");
    return j.at(key).get<double>();
}

inline std::string text(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ParseError(0, where + ": missing field '" + key + "'");
    if (!j.at(key).is_string()) throw ParseError(0, where + ": field '" + key + "' must be a string");
    return j.at(key).get<std::string>();
}

}  // namespace detail

/// Parses and validates a full configuration (lattice, phase offset, scale
/// factors). Missing scale factors default to 1.
inline FitParams fit_params_from_json(const nlohmann::json& j) {
    detail::check_keys(j, {"modes", "couplings", "phi_off_rad", "scale_factors"}, "config");
    if (!j.contains("modes") || !j.at("modes").is_array()) throw ParseError(0, "config: 'modes' must be an array");
    LatticeSpec spec;
    for (const auto& m : j.at("modes")) {
        detail::check_keys(m, {"label", "nu_GHz", "kappa_MHz", "eta"}, "mode");
        spec.modes.push_back({detail::text(m, "label", "mode"), detail::number(m, "nu_GHz", "mode"),
                              detail::number(m, "kappa_MHz", "mode"), detail::number(m, "eta", "mode")});
    }
    if (j.contains("couplings")) {
        if (!j.at("couplings").is_array()) throw ParseError(0, "config: 'couplings' must be an array");
        for (const auto& c : j.at("couplings")) {
            detail::check_keys(c, {"from", "to", "beta", "phase_rad", "pump_nu_GHz", "carries_loop_phase"}, "coupling");
            CouplingSpec link;
            link.from = detail::text(c, "from", "coupling");
            link.to = detail::text(c, "to", "coupling");
            link.beta = detail::number(c, "beta", "coupling");
            if (c.contains("phase_rad")) link.phase_rad = detail::number(c, "phase_rad", "coupling");
            if (c.contains("pump_nu_GHz")) link.pump_nu_GHz = detail::number(c, "pump_nu_GHz", "coupling");
            if (c.contains("carries_loop_phase")) {
                if (!c.at("carries_loop_phase").is_boolean())
                    throw ParseError(0, "coupling: field 'carries_loop_phase' must be a boolean");
                link.carries_loop_phase = c.at("carries_loop_phase").get<bool>();
            }
            spec.couplings.push_back(std::move(link));
        }
    }
    try {
        spec.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(0, std::string("config: ") + e.what());
    }
    FitParams fp = FitParams::from_lattice(std::move(spec));
    if (j.contains("phi_off_rad")) fp.phi_off = detail::number(j, "phi_off_rad", "config");
    if (j.contains("scale_factors")) {
        if (!j.at("scale_factors").is_array()) throw ParseError(0, "config: 'scale_factors' must be an array");
        for (const auto& s : j.at("scale_factors")) {
            detail::check_keys(s, {"out", "in", "C"}, "scale factor");
            try {
                const auto out = fp.lattice.index_of(detail::text(s, "out", "scale factor"));
                const auto in = fp.lattice.index_of(detail::text(s, "in", "scale factor"));
                if (out == in) throw InvalidArgument("reflection elements have no scale factor");
                fp.C(out, in) = detail::number(s, "C", "scale factor");
            } catch (const InvalidArgument& e) {
                throw ParseError(0, std::string("scale factor: ") + e.what());
            }
        }
    }
    try {
        fp.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(0, std::string("config: ") + e.what());
    }
    return fp;
}

inline LatticeSpec lattice_from_json(const nlohmann::json& j) { return fit_params_from_json(j).lattice; }

inline nlohmann::json to_json(const FitParams& fp) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : fp.lattice.modes)
        modes.push_back({{"label", m.label}, {"nu_GHz", m.nu_GHz}, {"kappa_MHz", m.kappa_MHz}, {"eta", m.eta}});
    nlohmann::json links = nlohmann::json::array();
    for (const auto& c : fp.lattice.couplings) {
        nlohmann::json l{{"from", c.from},
                         {"to", c.to},
                         {"beta", c.beta},
                         {"phase_rad", c.phase_rad},
                         {"carries_loop_phase", c.carries_loop_phase}};
        if (c.pump_nu_GHz) l["pump_nu_GHz"] = *c.pump_nu_GHz;
        links.push_back(std::move(l));
    }
    nlohmann::json scales = nlohmann::json::array();
    for (std::size_t i = 0; i < fp.modes(); ++i)
        for (std::size_t k = 0; k < fp.modes(); ++k)
            if (i != k)
                scales.push_back({{"out", fp.lattice.modes[i].label}, {"in", fp.lattice.modes[k].label}, {"C", fp.C(i, k)}});
    return {{"modes", modes}, {"couplings", links}, {"phi_off_rad", fp.phi_off}, {"scale_factors", scales}};
}

inline FitParams read_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, "'" + path + "': " + e.what());
    }
    return fit_params_from_json(j);
}

}  // namespace synthlat
