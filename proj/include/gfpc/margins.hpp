#pragma once

// Gain/phase margins of the droop loop, crossover frequencies, and the
// damping/droop tuning rules built on them.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfpc/error.hpp"
#include "gfpc/plant.hpp"
#include "gfpc/ratfun.hpp"
#include "gfpc/text.hpp"

namespace gfpc {

/// Log-spaced scan used to bracket crossings before refinement.
struct ScanOptions {
    double omega_lo = 1e-4;
    double omega_hi = 1e3;
    std::size_t points = 400;
};

namespace detail {

inline double to_degrees(double rad) { return rad / std::numbers::pi * 180.0; }

inline cplx loop_at(const RationalTF& loop, double w) {
    const cplx s{0.0, w};
    const cplx d = loop.den()(s);
    if (d == cplx{}) return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    return loop.num()(s) / d;
}

// Bisection in log-frequency on the sign of f between lo and hi.
template <typename F>
double bisect_log(F&& f, double lo, double hi, double rel_tol = 1e-14) {
    const bool f_lo_negative = f(lo) < 0.0;
    for (int it = 0; it < 200 && hi - lo > rel_tol * hi; ++it) {
        const double mid = std::sqrt(lo * hi);
        if ((f(mid) < 0.0) == f_lo_negative)
            lo = mid;
        else
            hi = mid;
    }
    return std::sqrt(lo * hi);
}

}  // namespace detail

struct PhaseCrossover {
    double omega = 0.0;
    double gain_margin = 0.0;
};

/// Lowest omega > 0 where the Nyquist curve crosses the negative real axis.
/// A crossing through an imaginary-axis pole (the curve passes through
/// infinity) reports gain margin 0. Returns nullopt when there is no crossing.
inline std::optional<PhaseCrossover> phase_crossover(const RationalTF& loop, const ScanOptions& scan = {}) {
    const std::vector<double> grid = logspace(scan.omega_lo, scan.omega_hi, scan.points);
    auto im = [&](double w) { return detail::loop_at(loop, w).imag(); };
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double a = im(grid[k]);
        const double b = im(grid[k + 1]);
        if (!std::isfinite(a)) {
            // Grid point exactly on an axis pole: a sign flip across it is a crossing through infinity.
            if (k > 0 && std::isfinite(b) && (im(grid[k - 1]) < 0.0) != (b < 0.0)) return PhaseCrossover{grid[k], 0.0};
            continue;
        }
        if (!std::isfinite(b)) continue;
        if ((a < 0.0) == (b < 0.0) && a != 0.0) continue;
        const double w = a == 0.0 ? grid[k] : detail::bisect_log(im, grid[k], grid[k + 1]);
        const cplx at = detail::loop_at(loop, w);
        const double edge = std::max(std::abs(detail::loop_at(loop, grid[k])), std::abs(detail::loop_at(loop, grid[k + 1])));
        if (!std::isfinite(std::abs(at)) || std::abs(at) > 1e6 * edge) return PhaseCrossover{w, 0.0};
        if (at.real() < 0.0) return PhaseCrossover{w, 1.0 / std::abs(at)};
    }
    return std::nullopt;
}

/// Gain margin 1/|L(j w180)| (positive convention); infinity without a phase crossover.
inline double gain_margin(const RationalTF& loop, const ScanOptions& scan = {}) {
    const auto pc = phase_crossover(loop, scan);
    return pc ? pc->gain_margin : std::numeric_limits<double>::infinity();
}

/// Lowest omega > 0 with |L(j omega)| = 1.
inline double gain_crossover(const RationalTF& loop, const ScanOptions& scan = {}) {
    const std::vector<double> grid = logspace(scan.omega_lo, scan.omega_hi, scan.points);
    auto excess = [&](double w) { return std::log(std::abs(detail::loop_at(loop, w))); };
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double a = excess(grid[k]);
        const double b = excess(grid[k + 1]);
        if (a == 0.0) return grid[k];
        if (std::isfinite(a) && std::isfinite(b) && (a < 0.0) != (b < 0.0))
            return detail::bisect_log(excess, grid[k], grid[k + 1]);
    }
    throw Error(Errc::no_crossover, "|L(j omega)| never crosses 1 on the scan range");
}

/// 180 deg + arg L(j omega_c) at the lowest unit-magnitude frequency.
inline double phase_margin(const RationalTF& loop, const ScanOptions& scan = {}) {
    const double wc = gain_crossover(loop, scan);
    return 180.0 + detail::to_degrees(std::arg(detail::loop_at(loop, wc)));
}

struct MarginReport {
    double gain_margin = std::numeric_limits<double>::infinity();
    std::optional<double> phase_margin_deg;
    std::optional<double> omega_180;
    std::optional<double> omega_c;
    ModelKind model = ModelKind::emt;
};

inline MarginReport margin_report(const RationalTF& loop, ModelKind model, const ScanOptions& scan = {}) {
    MarginReport r;
    r.model = model;
    if (const auto pc = phase_crossover(loop, scan)) {
        r.gain_margin = pc->gain_margin;
        r.omega_180 = pc->omega;
    }
    if (!loop.is_zero()) {
        try {
            const double wc = gain_crossover(loop, scan);
            r.omega_c = wc;
            r.phase_margin_deg = 180.0 + detail::to_degrees(std::arg(detail::loop_at(loop, wc)));
        } catch (const Error& e) {
            if (e.code() != Errc::no_crossover) throw;
        }
    }
    return r;
}

namespace detail {

inline void require_static_gain_unloaded_q(const ControlParams& c, const OperatingPoint* op) {
    if (c.omega_v != 0.0) throw Error(Errc::wrong_regime, "closed-form crossover requires omega_v = 0");
    if (op && std::abs(op->i_q0) > 1e-12) throw Error(Errc::wrong_regime, "closed-form crossover requires i_q0 = 0");
}

}  // namespace detail

/// Phase crossover of the EMT loop: sqrt(k_v^2 + L_c^2 w1^2) / L_c.
inline double omega_180_emt(const ConverterParams& p, const ControlParams& c) {
    detail::require_static_gain_unloaded_q(c, nullptr);
    return std::sqrt(c.k_v * c.k_v + p.l_c * p.l_c * p.omega_1 * p.omega_1) / p.l_c;
}

enum class CrossoverMethod { closed_form, cubic_exact, taylor };

/// Cubic in x = omega_c^2 whose roots are the unit-gain frequencies of the EMT loop:
/// -L^4 x^3 + (2 L^4 w1^2 - 2 k^2 L^2) x^2 - (k^2 + L^2 w1^2)^2 x + K_p^2 w1^2 L^2 (V^2 - k^2 i0^2)^2.
inline Polynomial crossover_cubic(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op) {
    detail::require_static_gain_unloaded_q(c, &op);
    const double l2 = p.l_c * p.l_c;
    const double k2 = c.k_v * c.k_v;
    const double w2 = p.omega_1 * p.omega_1;
    const double drive = p.v_set * p.v_set - k2 * op.current_mag_sq();
    const double damp = k2 + l2 * w2;
    return Polynomial{c.k_p * c.k_p * w2 * l2 * drive * drive, -damp * damp, 2.0 * l2 * l2 * w2 - 2.0 * k2 * l2,
                      -l2 * l2};
}

/// Gain crossover frequency. RMS is an exact integrator loop and always uses
/// the closed form; for EMT, closed_form/taylor give the first-order root of
/// the crossover cubic and cubic_exact its smallest positive real root.
inline double omega_c(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op, ModelKind kind,
                      CrossoverMethod method) {
    detail::require_static_gain_unloaded_q(c, &op);
    if (!(c.k_p > 0.0)) throw Error(Errc::no_crossover, "omega_c requires K_p > 0");
    const double l2 = p.l_c * p.l_c;
    const double k2 = c.k_v * c.k_v;
    const double w1 = p.omega_1;
    if (kind == ModelKind::rms || method != CrossoverMethod::cubic_exact)
        return c.k_p * p.l_c * w1 * (p.v_set * p.v_set - k2 * op.current_mag_sq()) / (k2 + l2 * w1 * w1);

    std::optional<double> best;
    for (cplx x : roots(crossover_cubic(p, c, op))) {
        if (std::abs(x.imag()) > 1e-12 * std::max(1.0, std::abs(x)) || !(x.real() > 0.0)) continue;
        if (!best || x.real() < *best) best = x.real();
    }
    if (!best) throw Error(Errc::no_crossover, "crossover cubic has no positive real root");
    return std::sqrt(*best);
}

/// Droop giving gain margin `target_gm` on the EMT loop:
/// 2 k_v (k_v^2 + L_c^2 w1^2) / (g_m L_c^2 w1 (V_set^2 - |i0|^2 k_v^2)).
inline double kp_max_for_gain_margin(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op,
                                     double target_gm) {
    if (!(target_gm > 0.0)) throw Error(Errc::invalid_argument, "target gain margin must be > 0");
    const double l2 = p.l_c * p.l_c;
    const double k2 = c.k_v * c.k_v;
    const double drive = p.v_set * p.v_set - op.current_mag_sq() * k2;
    if (!(drive > 0.0))
        throw Error(Errc::invalid_operating_point, "V_set^2 - |i0|^2 k_v^2 must be positive for the droop rule");
    return 2.0 * c.k_v * (k2 + l2 * p.omega_1 * p.omega_1) / (target_gm * l2 * p.omega_1 * drive);
}

enum class PhaseFloor { deg80 = 80, deg45 = 45 };

inline PhaseFloor phase_floor_from_degrees(double deg) {
    if (deg == 80.0) return PhaseFloor::deg80;
    if (deg == 45.0) return PhaseFloor::deg45;
    throw Error(Errc::invalid_argument, "phase floor must be 80 or 45 degrees");
}

constexpr double degrees(PhaseFloor f) { return static_cast<double>(static_cast<int>(f)); }

struct GainMarginWindow {
    double lo;
    double hi;
};

/// Admissible target gain margins for each phase floor.
constexpr GainMarginWindow admissible_gain_margins(PhaseFloor f) {
    return f == PhaseFloor::deg80 ? GainMarginWindow{2.0, 24.2} : GainMarginWindow{0.0, 4.83};
}

/// Damping gain at the equality of the phase-floor rule:
/// k_v = w1 L_c g_m / sqrt(-(g_m^2 - c g_m - 4)), c = 24 (80 deg) or 4 (45 deg).
inline double kv_for_phase_margin(const ConverterParams& p, double target_gm, PhaseFloor floor) {
    const auto [lo, hi] = admissible_gain_margins(floor);
    const double coef = floor == PhaseFloor::deg80 ? 24.0 : 4.0;
    const double denom = target_gm * target_gm - coef * target_gm - 4.0;
    if (!(target_gm > lo && target_gm < hi) || !(denom < 0.0))
        throw Error(Errc::infeasible_margin, "gain margin " + format_double(target_gm) + " is outside (" +
                                                 format_double(lo) + ", " + format_double(hi) + ") for a " +
                                                 std::to_string(static_cast<int>(floor)) + " deg phase floor");
    return p.omega_1 * p.l_c * target_gm / std::sqrt(-denom);
}

/// Phase-margin slack accepted by tune()'s self-check. The floor rule is
/// built on the first-order crossover estimate; against the exact crossover
/// the 80 deg rule lands at >= 79.65 deg over its admissible range.
inline constexpr double kPhaseFloorSlackDeg = 0.5;
/// Relative gain-margin tolerance of tune()'s self-check.
inline constexpr double kGainMarginRelTol = 0.02;

struct TuningResult {
    double k_v = std::numeric_limits<double>::quiet_NaN();
    double k_p = std::numeric_limits<double>::quiet_NaN();
    double target_gm = 0.0;
    double phase_margin_floor_deg = 80.0;
    bool feasible = false;
    double measured_gm = std::numeric_limits<double>::quiet_NaN();
    double measured_pm_deg = std::numeric_limits<double>::quiet_NaN();
    std::string diagnostic;
};

/// k_v from the phase-floor rule, then K_p from the gain-margin rule, then a
/// numeric margin check on the resulting EMT loop (omega_v = 0).
/// An inadmissible target yields feasible = false; a failed check throws self_check.
inline TuningResult tune(const ConverterParams& p, const OperatingPoint& op, double target_gm, PhaseFloor floor,
                         const ScanOptions& scan = {}) {
    validate(p);
    TuningResult r;
    r.target_gm = target_gm;
    r.phase_margin_floor_deg = degrees(floor);
    try {
        r.k_v = kv_for_phase_margin(p, target_gm, floor);
    } catch (const Error& e) {
        if (e.code() != Errc::infeasible_margin) throw;
        r.diagnostic = e.what();
        return r;
    }
    ControlParams c{0.0, r.k_v, 0.0};
    r.k_p = kp_max_for_gain_margin(p, c, op, target_gm);
    c.k_p = r.k_p;

    const RationalTF loop = loop_tf(p, c, op, ModelKind::emt);
    r.measured_gm = gain_margin(loop, scan);
    r.measured_pm_deg = phase_margin(loop, scan);
    const bool gm_ok = std::abs(r.measured_gm - target_gm) <= kGainMarginRelTol * target_gm;
    const bool pm_ok = r.measured_pm_deg >= r.phase_margin_floor_deg - kPhaseFloorSlackDeg;
    if (!gm_ok || !pm_ok)
        throw Error(Errc::self_check, "tuned loop measures g_m = " + std::to_string(r.measured_gm) +
                                          ", phase margin = " + std::to_string(r.measured_pm_deg) + " deg (target g_m " +
                                          std::to_string(target_gm) + ", floor " +
                                          std::to_string(r.phase_margin_floor_deg) + " deg)");
    r.feasible = true;
    return r;
}

/// |e(j omega)| samples of the EMT-vs-RMS closed-loop mismatch.
inline std::vector<std::pair<double, double>> mismatch_profile(const ConverterParams& p, const ControlParams& c,
                                                               const OperatingPoint& op,
                                                               std::span<const double> omegas) {
    const std::vector<cplx> resp = freq_response(mismatch_tf(p, c, op), omegas);
    std::vector<std::pair<double, double>> out;
    out.reserve(omegas.size());
    for (std::size_t i = 0; i < omegas.size(); ++i) out.emplace_back(omegas[i], std::abs(resp[i]));
    return out;
}

}  // namespace gfpc
