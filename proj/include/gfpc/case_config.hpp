#pragma once

// Case files: flat `key = value` text, `#` starts a comment. Keys are the
// snake_case field names below; unset keys take the documented defaults.

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "gfpc/error.hpp"
#include "gfpc/plant.hpp"
#include "gfpc/simulate.hpp"
#include "gfpc/text.hpp"

namespace gfpc {

struct OperatingRequest {
    double p_ref = 0.0;
    double v_g = 1.0;

    friend bool operator==(const OperatingRequest&, const OperatingRequest&) = default;
};

struct AnalysisGrid {
    double omega_grid_min = 1e-6;
    double omega_grid_max = 1e2;
    std::size_t points = 400;

    friend bool operator==(const AnalysisGrid&, const AnalysisGrid&) = default;
};

struct CaseConfig {
    ConverterParams converter;
    ControlParams control;  ///< control.omega_v is the analysis-mode cut-off (default 0)
    OperatingRequest operating;
    SimConfig sim;
    double sim_omega_v = 0.1;  ///< high-pass cut-off used by simulations (default 0.1 * omega_1)
    AnalysisGrid analysis;

    /// Control parameters with the simulation cut-off substituted.
    [[nodiscard]] ControlParams sim_control() const {
        ControlParams c = control;
        c.omega_v = sim_omega_v;
        return c;
    }

    friend bool operator==(const CaseConfig&, const CaseConfig&) = default;
};

inline void validate(const CaseConfig& cfg) {
    validate(cfg.converter);
    validate(cfg.control);
    validate(cfg.sim);
    if (!(cfg.sim_omega_v >= 0.0)) throw Error(Errc::invalid_argument, "sim_omega_v must be >= 0");
    if (!(cfg.operating.v_g > 0.0)) throw Error(Errc::invalid_argument, "v_g must be > 0");
    if (!(cfg.analysis.omega_grid_min > 0.0 && cfg.analysis.omega_grid_max > cfg.analysis.omega_grid_min))
        throw Error(Errc::invalid_argument, "analysis grid needs 0 < omega_grid_min < omega_grid_max");
    if (cfg.analysis.points < 2) throw Error(Errc::invalid_argument, "analysis points must be >= 2");
}

namespace detail {

struct ConfigField {
    std::function<void(CaseConfig&, std::string_view)> set;  // throws std::invalid_argument on type mismatch
    std::function<std::string(const CaseConfig&)> get;
};

enum class Bound { none, positive, nonnegative };

template <typename Access>
ConfigField double_field(Access access, Bound bound = Bound::none) {
    return {[access, bound](CaseConfig& c, std::string_view v) {
                double d = 0.0;
                if (!parse_double(v, d) || !std::isfinite(d))
                    throw std::invalid_argument("expected a finite number, got '" + std::string(v) + "'");
                if (bound == Bound::positive && !(d > 0.0)) throw std::invalid_argument("must be > 0");
                if (bound == Bound::nonnegative && !(d >= 0.0)) throw std::invalid_argument("must be >= 0");
                access(c) = d;
            },
            [access](const CaseConfig& c) {
                CaseConfig copy = c;
                return format_double(access(copy));
            }};
}

inline const std::map<std::string, ConfigField, std::less<>>& config_fields() {
    static const std::map<std::string, ConfigField, std::less<>> fields = [] {
        std::map<std::string, ConfigField, std::less<>> m;
        m["l_c"] = double_field([](CaseConfig& c) -> double& { return c.converter.l_c; }, Bound::positive);
        m["r_c"] = double_field([](CaseConfig& c) -> double& { return c.converter.r_c; }, Bound::nonnegative);
        m["v_set"] = double_field([](CaseConfig& c) -> double& { return c.converter.v_set; }, Bound::positive);
        m["omega_1"] = double_field([](CaseConfig& c) -> double& { return c.converter.omega_1; }, Bound::positive);
        m["omega_b"] = double_field([](CaseConfig& c) -> double& { return c.converter.omega_b; }, Bound::positive);
        m["k_p"] = double_field([](CaseConfig& c) -> double& { return c.control.k_p; }, Bound::nonnegative);
        m["k_v"] = double_field([](CaseConfig& c) -> double& { return c.control.k_v; }, Bound::nonnegative);
        m["omega_v"] = double_field([](CaseConfig& c) -> double& { return c.control.omega_v; }, Bound::nonnegative);
        m["p_ref"] = double_field([](CaseConfig& c) -> double& { return c.operating.p_ref; });
        m["v_g"] = double_field([](CaseConfig& c) -> double& { return c.operating.v_g; }, Bound::positive);
        m["t_end"] = double_field([](CaseConfig& c) -> double& { return c.sim.t_end; }, Bound::positive);
        m["dt"] = double_field([](CaseConfig& c) -> double& { return c.sim.dt; }, Bound::positive);
        m["step_time"] = double_field([](CaseConfig& c) -> double& { return c.sim.step_time; }, Bound::nonnegative);
        m["step_size"] = double_field([](CaseConfig& c) -> double& { return c.sim.step_size; });
        m["sim_omega_v"] = double_field([](CaseConfig& c) -> double& { return c.sim_omega_v; }, Bound::nonnegative);
        m["omega_grid_min"] = double_field([](CaseConfig& c) -> double& { return c.analysis.omega_grid_min; }, Bound::positive);
        m["omega_grid_max"] = double_field([](CaseConfig& c) -> double& { return c.analysis.omega_grid_max; }, Bound::positive);
        m["model"] = {[](CaseConfig& c, std::string_view v) {
                          if (v != "emt" && v != "rms")
                              throw std::invalid_argument("model must be emt or rms, got '" + std::string(v) + "'");
                          c.sim.model = parse_model_kind(v);
                      },
                      [](const CaseConfig& c) { return std::string(to_string(c.sim.model)); }};
        auto count_field = [](std::size_t& (*access)(CaseConfig&), std::size_t min) {
            return ConfigField{[access, min](CaseConfig& c, std::string_view v) {
                                   std::size_t n = 0;
                                   const auto res = std::from_chars(v.data(), v.data() + v.size(), n);
                                   if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
                                       throw std::invalid_argument("expected a positive integer, got '" +
                                                                   std::string(v) + "'");
                                   if (n < min) throw std::invalid_argument("must be >= " + std::to_string(min));
                                   access(c) = n;
                               },
                               [access](const CaseConfig& c) {
                                   CaseConfig copy = c;
                                   return std::to_string(access(copy));
                               }};
        };
        m["record_decimation"] = count_field([](CaseConfig& c) -> std::size_t& { return c.sim.record_decimation; }, 1);
        m["points"] = count_field([](CaseConfig& c) -> std::size_t& { return c.analysis.points; }, 2);
        return m;
    }();
    return fields;
}

inline std::string_view canonical_key(std::string_view key) {
    if (key == "kp") return "k_p";
    if (key == "kv") return "k_v";
    return key;
}

}  // namespace detail

/// Parses a case file. `source` names the input in diagnostics.
/// Errors carry `source:line:`.
inline CaseConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    CaseConfig cfg;
    bool omega_v_sim_set = false;
    std::string line;
    int lineno = 0;
    const auto& fields = detail::config_fields();
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = detail::trim(body);
        if (body.empty()) continue;
        const auto where = source + ":" + std::to_string(lineno) + ": ";
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw Error(Errc::config, where + "expected 'key = value'");
        const std::string_view key = detail::canonical_key(detail::trim(body.substr(0, eq)));
        const std::string_view value = detail::trim(body.substr(eq + 1));
        const auto it = fields.find(key);
        if (it == fields.end()) throw Error(Errc::config, where + "unknown key '" + std::string(key) + "'");
        try {
            it->second.set(cfg, value);
        } catch (const std::invalid_argument& e) {
            throw Error(Errc::config, where + "'" + std::string(key) + "': " + e.what());
        }
        if (key == "sim_omega_v") omega_v_sim_set = true;
    }
    if (!omega_v_sim_set) cfg.sim_omega_v = 0.1 * cfg.converter.omega_1;
    try {
        validate(cfg);
    } catch (const Error& e) {
        throw Error(Errc::config, source + ": " + e.what());
    }
    return cfg;
}

inline CaseConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::config, path + ": cannot open file");
    return parse_config(in, path);
}

/// Writes every field, so parse_config(serialize(c)) == c.
inline std::string serialize(const CaseConfig& cfg) {
    static constexpr std::string_view order[] = {
        "l_c",       "r_c",       "v_set",       "omega_1",           "omega_b",        "k_p",
        "k_v",       "omega_v",   "p_ref",       "v_g",               "model",          "t_end",
        "dt",        "step_time", "step_size",   "record_decimation", "sim_omega_v",    "omega_grid_min",
        "omega_grid_max", "points"};
    const auto& fields = detail::config_fields();
    std::ostringstream out;
    for (std::string_view key : order) out << key << " = " << fields.find(key)->second.get(cfg) << '\n';
    return out.str();
}

}  // namespace gfpc
