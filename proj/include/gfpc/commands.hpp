#pragma once

// Command layer behind the CLI: each command takes a CaseConfig, optionally
// writes CSV files, and returns a Report (text block plus JSON machine section).

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfpc/case_config.hpp"
#include "gfpc/csv.hpp"
#include "gfpc/margins.hpp"
#include "gfpc/plant.hpp"
#include "gfpc/simulate.hpp"
#include "gfpc/stability.hpp"

namespace gfpc {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kMachineMarker = "--- machine ---";

struct Report {
    std::string text;
    Json machine;

    [[nodiscard]] std::string render() const {
        return text + std::string(kMachineMarker) + "\n" + machine.dump(2) + "\n";
    }
};

/// Extracts the JSON machine section from rendered report text.
inline Json machine_section(const std::string& rendered) {
    const auto at = rendered.find(kMachineMarker);
    if (at == std::string::npos) throw Error(Errc::invalid_argument, "report has no machine section");
    return Json::parse(rendered.substr(at + kMachineMarker.size()));
}

/// `min:max:n` sweep range.
struct GridSpec {
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
};

inline GridSpec parse_range(std::string_view text) {
    const auto c1 = text.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
    GridSpec g;
    bool ok = c2 != std::string_view::npos && parse_double(text.substr(0, c1), g.min) &&
              parse_double(text.substr(c1 + 1, c2 - c1 - 1), g.max);
    if (ok) {
        const auto tail = text.substr(c2 + 1);
        const auto res = std::from_chars(tail.data(), tail.data() + tail.size(), g.n);
        ok = res.ec == std::errc{} && res.ptr == tail.data() + tail.size();
    }
    if (!ok || !std::isfinite(g.min) || !std::isfinite(g.max))
        throw Error(Errc::invalid_argument, "range '" + std::string(text) + "' is not min:max:n");
    if (g.n < 2 || !(g.max > g.min)) throw Error(Errc::invalid_argument, "range needs max > min and n >= 2");
    return g;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = k + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    return out;
}

namespace detail {

// JSON has no infinity; null stands for it in the machine section.
inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

template <typename T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

inline std::string fmt_num(double v, int digits = 6) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

inline std::string fmt_cplx(cplx z) {
    return fmt_num(z.real()) + (z.imag() < 0.0 ? " - j" : " + j") + fmt_num(std::abs(z.imag()));
}

inline Json operating_point_json(const OperatingPoint& op) {
    return Json{{"p_0", op.p_0}, {"i_d0", op.i_d0}, {"i_q0", op.i_q0}, {"theta_0", op.theta_0}, {"v_g", op.v_g}};
}

inline Json control_json(const ControlParams& c) {
    return Json{{"k_p", c.k_p}, {"k_v", c.k_v}, {"omega_v", c.omega_v}};
}

inline ScanOptions scan_from(const AnalysisGrid& g) { return {g.omega_grid_min, g.omega_grid_max, g.points}; }

inline OperatingPoint operating_point_of(const CaseConfig& cfg) {
    return solve_operating_point(cfg.converter, cfg.operating.p_ref, cfg.operating.v_g);
}

inline std::vector<ModelKind> models_or_both(std::optional<ModelKind> model) {
    if (model) return {*model};
    return {ModelKind::emt, ModelKind::rms};
}

inline Json verdict_json(const StabilityVerdict& v) {
    return Json{{"status", to_string(v.status)}, {"margin", v.margin}, {"binding_condition", v.binding_condition}};
}

}  // namespace detail

/// Stability verdicts, closed-loop poles and margins of both models at the
/// configured operating point, plus the closed-form conditions when omega_v = 0.
/// `poles_csv` receives `model,re,im` rows.
inline Report cmd_analyze(const CaseConfig& cfg, const std::optional<std::filesystem::path>& poles_csv = {}) {
    const ConverterParams& p = cfg.converter;
    const ControlParams& c = cfg.control;
    const OperatingPoint op = detail::operating_point_of(cfg);
    const ScanOptions scan = detail::scan_from(cfg.analysis);

    std::ostringstream text;
    Json machine{{"command", "analyze"},
                 {"operating_point", detail::operating_point_json(op)},
                 {"control", detail::control_json(c)}};
    text << "operating point: P0 = " << detail::fmt_num(op.p_0) << " p.u., i0 = " << detail::fmt_cplx(op.current())
         << " p.u., theta0 = " << detail::fmt_num(op.theta_0) << " rad\n"
         << "control: K_p = " << detail::fmt_num(c.k_p) << ", k_v = " << detail::fmt_num(c.k_v)
         << ", omega_v = " << detail::fmt_num(c.omega_v) << "\n";

    CsvTable poles_table;
    poles_table.header = {"model", "re", "im"};
    Json models = Json::object();
    for (ModelKind kind : {ModelKind::emt, ModelKind::rms}) {
        const std::string name(to_string(kind));
        const StabilityVerdict verdict = closed_loop_verdict(p, c, op, kind);
        const std::vector<cplx> poles = closed_loop_poles(p, c, op, kind);
        double max_re = -std::numeric_limits<double>::infinity();
        Json pole_list = Json::array();
        for (cplx z : poles) {
            max_re = std::max(max_re, z.real());
            pole_list.push_back({z.real(), z.imag()});
            poles_table.add_row({name, format_double(z.real()), format_double(z.imag())});
        }
        Json entry{{"verdict", detail::verdict_json(verdict)}, {"poles", pole_list}, {"max_real_part", max_re}};

        text << (kind == ModelKind::emt ? "EMT" : "RMS") << ": " << to_string(verdict.status) << "\n  poles:";
        for (cplx z : poles) text << "  " << detail::fmt_cplx(z);
        text << "\n";

        if (c.k_p > 0.0) {
            const MarginReport m = margin_report(loop_tf(p, c, op, kind), kind, scan);
            entry["margins"] = Json{{"gain_margin", detail::finite_or_null(m.gain_margin)},
                                    {"phase_margin_deg", detail::optional_json(m.phase_margin_deg)},
                                    {"omega_180", detail::optional_json(m.omega_180)},
                                    {"omega_c", detail::optional_json(m.omega_c)}};
            text << "  gain margin " << detail::fmt_num(m.gain_margin);
            if (m.omega_180) text << " at omega " << detail::fmt_num(*m.omega_180);
            if (m.phase_margin_deg)
                text << ", phase margin " << detail::fmt_num(*m.phase_margin_deg) << " deg at omega "
                     << detail::fmt_num(*m.omega_c);
            text << "\n";
        } else {
            entry["margins"] = nullptr;
            text << "  droop loop open (K_p = 0): no margins\n";
        }
        models[name] = std::move(entry);
    }
    machine["models"] = std::move(models);

    Json conditions = nullptr;
    if (c.omega_v == 0.0) {
        conditions = Json::object();
        if (c.k_v == 0.0) {
            const StabilityVerdict v = condition_no_virtual_impedance(p, c);
            conditions["no_virtual_impedance"] = detail::verdict_json(v);
            text << "closed-form EMT condition (k_v = 0): " << to_string(v.status) << "\n";
        } else {
            const VirtualImpedanceVerdict v = condition_with_virtual_impedance(p, c, op);
            Json entry = detail::verdict_json(v.verdict);
            entry["kp_bound"] = detail::optional_json(v.kp_bound);
            conditions["virtual_impedance"] = std::move(entry);
            text << "closed-form EMT condition: " << to_string(v.verdict.status) << " (margin "
                 << detail::fmt_num(v.verdict.margin) << ")";
            if (v.kp_bound) text << ", K_p bound " << detail::fmt_num(*v.kp_bound);
            text << "\n";
        }
        const double rms_pole = rms_closed_loop_pole(p, c, op);
        conditions["rms_pole"] = rms_pole;
        text << "closed-form RMS pole: " << detail::fmt_num(rms_pole) << "\n";
    }
    machine["conditions"] = std::move(conditions);

    if (poles_csv) {
        write_csv(*poles_csv, poles_table);
        machine["poles_csv"] = poles_csv->string();
    }
    return {text.str(), std::move(machine)};
}

/// Virtual resistance and droop gain for a target gain margin and phase floor.
inline Report cmd_tune(const CaseConfig& cfg, double target_gm, PhaseFloor floor) {
    const OperatingPoint op = detail::operating_point_of(cfg);
    const TuningResult r = tune(cfg.converter, op, target_gm, floor, detail::scan_from(cfg.analysis));
    Json machine{{"command", "tune"},
                 {"target_gm", target_gm},
                 {"phase_floor_deg", degrees(floor)},
                 {"feasible", r.feasible}};
    std::ostringstream text;
    if (!r.feasible) {
        machine["diagnostic"] = r.diagnostic;
        text << "infeasible: " << r.diagnostic << "\n";
        return {text.str(), std::move(machine)};
    }
    machine["k_v"] = r.k_v;
    machine["k_p"] = r.k_p;
    machine["measured_gm"] = r.measured_gm;
    machine["measured_pm_deg"] = r.measured_pm_deg;
    text << "k_v = " << detail::fmt_num(r.k_v) << ", K_p = " << detail::fmt_num(r.k_p) << "\n"
         << "measured on the EMT loop: gain margin " << detail::fmt_num(r.measured_gm) << ", phase margin "
         << detail::fmt_num(r.measured_pm_deg) << " deg\n";
    return {text.str(), std::move(machine)};
}

namespace detail {

struct RunSummary {
    TimeSeries series;
    Json machine;
    std::string text;
};

inline RunSummary run_and_summarize(const CaseConfig& cfg, const OperatingPoint& op, ModelKind kind) {
    SimConfig sim = cfg.sim;
    sim.model = kind;
    RunSummary out{simulate(cfg.converter, cfg.sim_control(), op, sim), {}, {}};
    const TimeSeries& ts = out.series;
    const double window = 0.1 * (sim.t_end - sim.step_time);
    const bool growing = oscillation_growing(ts, window);
    const auto settle = settling_time(ts, sim.step_time);
    const auto freq = dominant_frequency(ts, sim.step_time);
    out.machine = Json{{"model", to_string(kind)},
                       {"samples", ts.size()},
                       {"final_p", ts.p.back()},
                       {"target_p", op.p_0 + sim.step_size},
                       {"diverged", ts.divergence_time.has_value()},
                       {"divergence_time", optional_json(ts.divergence_time)},
                       {"oscillation_growing", growing},
                       {"settling_time", optional_json(settle)},
                       {"dominant_frequency_hz", optional_json(freq)}};
    std::ostringstream text;
    text << (kind == ModelKind::emt ? "EMT" : "RMS") << " run: " << ts.size() << " samples, final P "
         << fmt_num(ts.p.back()) << " p.u. (target " << fmt_num(op.p_0 + sim.step_size) << ")";
    if (ts.divergence_time) text << ", diverged at t = " << fmt_num(*ts.divergence_time) << " s";
    if (growing) text << ", oscillation growing";
    if (settle) text << ", settles in " << fmt_num(*settle) << " s";
    if (freq) text << ", dominant frequency " << fmt_num(*freq) << " Hz";
    text << "\n";
    out.text = text.str();
    return out;
}

}  // namespace detail

/// One time-domain run of cfg.sim.model with the simulation cut-off.
inline Report cmd_simulate(const CaseConfig& cfg, const std::optional<std::filesystem::path>& csv = {}) {
    const OperatingPoint op = detail::operating_point_of(cfg);
    auto run = detail::run_and_summarize(cfg, op, cfg.sim.model);
    Json machine{{"command", "simulate"}, {"operating_point", detail::operating_point_json(op)}};
    machine["run"] = std::move(run.machine);
    if (csv) {
        write_csv(*csv, timeseries_table(run.series));
        machine["csv"] = csv->string();
    }
    return {run.text, std::move(machine)};
}

/// Runs both models on the same step and reports their active-power mismatch
/// after the step. `prefix` yields `<prefix>_emt.csv` and `<prefix>_rms.csv`.
inline Report cmd_compare(const CaseConfig& cfg, const std::optional<std::filesystem::path>& prefix = {}) {
    const OperatingPoint op = detail::operating_point_of(cfg);
    auto emt = detail::run_and_summarize(cfg, op, ModelKind::emt);
    auto rms = detail::run_and_summarize(cfg, op, ModelKind::rms);
    const MismatchMetrics m = compare_runs(emt.series, rms.series, cfg.sim.step_time);
    Json machine{{"command", "compare"}, {"operating_point", detail::operating_point_json(op)}};
    machine["emt"] = std::move(emt.machine);
    machine["rms"] = std::move(rms.machine);
    machine["mismatch"] = Json{{"max_abs_dp", m.max_abs_dp}, {"rms_dp", m.rms_dp}};
    std::ostringstream text;
    text << emt.text << rms.text << "post-step mismatch: max |dP| " << detail::fmt_num(m.max_abs_dp)
         << " p.u., rms " << detail::fmt_num(m.rms_dp) << " p.u.\n";
    if (prefix) {
        const auto path_for = [&](std::string_view tag) {
            auto path = *prefix;
            path += "_" + std::string(tag) + ".csv";
            return path;
        };
        write_csv(path_for("emt"), timeseries_table(emt.series));
        write_csv(path_for("rms"), timeseries_table(rms.series));
        machine["csv"] = Json{{"emt", path_for("emt").string()}, {"rms", path_for("rms").string()}};
    }
    return {text.str(), std::move(machine)};
}

/// Closed-loop poles over a linear K_p sweep. CSV: `model,k_p,branch,re,im`.
inline Report cmd_rootlocus(const CaseConfig& cfg, const GridSpec& kp, std::optional<ModelKind> model = {},
                            const std::optional<std::filesystem::path>& csv = {}) {
    if (kp.min < 0.0) throw Error(Errc::invalid_argument, "K_p range must be nonnegative");
    const OperatingPoint op = detail::operating_point_of(cfg);
    const std::vector<double> gains = linspace(kp.min, kp.max, kp.n);
    CsvTable table;
    table.header = {"model", "k_p", "branch", "re", "im"};
    Json machine{{"command", "rootlocus"}, {"k_p_min", kp.min}, {"k_p_max", kp.max}, {"points", kp.n}};
    std::ostringstream text;
    for (ModelKind kind : detail::models_or_both(model)) {
        const std::string name(to_string(kind));
        const RootLocus locus = root_locus(cfg.converter, cfg.control, op, kind, gains);
        std::optional<double> first_unstable;
        for (std::size_t g = 0; g < locus.gains.size(); ++g) {
            double max_re = -std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < locus.branches[g].size(); ++b) {
                const cplx z = locus.branches[g][b];
                max_re = std::max(max_re, z.real());
                table.add_row({name, format_double(locus.gains[g]), std::to_string(b), format_double(z.real()),
                               format_double(z.imag())});
            }
            if (!first_unstable && max_re > 0.0) first_unstable = locus.gains[g];
        }
        machine[name] = Json{{"branches", locus.branches.front().size()},
                             {"first_unstable_k_p", detail::optional_json(first_unstable)}};
        text << name << ": " << locus.branches.front().size() << " branches, ";
        if (first_unstable)
            text << "right half-plane from K_p = " << detail::fmt_num(*first_unstable) << "\n";
        else
            text << "no right half-plane pole on the sweep\n";
    }
    if (csv) {
        write_csv(*csv, table);
        machine["csv"] = csv->string();
    }
    return {text.str(), std::move(machine)};
}

enum class BodeWhich { open, closed, mismatch };

inline BodeWhich parse_bode_which(std::string_view text) {
    if (text == "open") return BodeWhich::open;
    if (text == "closed") return BodeWhich::closed;
    if (text == "mismatch") return BodeWhich::mismatch;
    throw Error(Errc::invalid_argument, "bode target must be open, closed or mismatch, got '" + std::string(text) + "'");
}

/// Frequency response on a log grid. CSV: `model,omega_pu,re,im,mag,mag_db,phase_deg`;
/// the model column reads `mismatch` for the EMT-minus-RMS error.
inline Report cmd_bode(const CaseConfig& cfg, BodeWhich which, std::optional<GridSpec> omega = {},
                       std::optional<ModelKind> model = {}, const std::optional<std::filesystem::path>& csv = {}) {
    const OperatingPoint op = detail::operating_point_of(cfg);
    const GridSpec grid = omega.value_or(GridSpec{cfg.analysis.omega_grid_min, cfg.analysis.omega_grid_max,
                                                  cfg.analysis.points});
    if (!(grid.min > 0.0)) throw Error(Errc::invalid_argument, "omega range must be positive");
    const std::vector<double> omegas = logspace(grid.min, grid.max, grid.n);

    std::vector<std::pair<std::string, RationalTF>> curves;
    if (which == BodeWhich::mismatch) {
        curves.emplace_back("mismatch", mismatch_tf(cfg.converter, cfg.control, op));
    } else {
        for (ModelKind kind : detail::models_or_both(model))
            curves.emplace_back(std::string(to_string(kind)),
                                which == BodeWhich::open ? loop_tf(cfg.converter, cfg.control, op, kind)
                                                         : closed_loop(cfg.converter, cfg.control, op, kind).tf);
    }

    static constexpr const char* kWhichNames[] = {"open", "closed", "mismatch"};
    CsvTable table;
    table.header = {"model", "omega_pu", "re", "im", "mag", "mag_db", "phase_deg"};
    Json machine{{"command", "bode"}, {"which", kWhichNames[static_cast<int>(which)]}, {"points", grid.n}};
    std::ostringstream text;
    for (const auto& [name, tf] : curves) {
        const std::vector<cplx> resp = freq_response(tf, omegas);
        std::size_t peak = 0;
        for (std::size_t k = 0; k < resp.size(); ++k) {
            const double mag = std::abs(resp[k]);
            if (mag > std::abs(resp[peak])) peak = k;
            table.add_row({name, format_double(omegas[k]), format_double(resp[k].real()), format_double(resp[k].imag()),
                           format_double(mag), format_double(20.0 * std::log10(mag)),
                           format_double(detail::to_degrees(std::arg(resp[k])))});
        }
        machine[name] = Json{{"peak_mag", std::abs(resp[peak])},
                             {"peak_omega", omegas[peak]},
                             {"first_mag", std::abs(resp.front())},
                             {"last_mag", std::abs(resp.back())}};
        text << name << ": peak |.| " << detail::fmt_num(std::abs(resp[peak])) << " at omega "
             << detail::fmt_num(omegas[peak]) << ", |.| at omega " << detail::fmt_num(omegas.front()) << " is "
             << detail::fmt_num(std::abs(resp.front())) << "\n";
    }
    if (csv) {
        write_csv(*csv, table);
        machine["csv"] = csv->string();
    }
    return {text.str(), std::move(machine)};
}

}  // namespace gfpc
