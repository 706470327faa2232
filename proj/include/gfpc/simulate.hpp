#pragma once

// Nonlinear time-domain simulation of the converter against an infinite bus,
// with either dynamic (EMT) or algebraic (RMS) phase-reactor currents, plus
// the trace analysis used to compare the two.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gfpc/error.hpp"
#include "gfpc/plant.hpp"
#include "gfpc/ratfun.hpp"
#include "gfpc/stability.hpp"

namespace gfpc {

struct SimConfig {
    ModelKind model = ModelKind::emt;
    double t_end = 1.0;      ///< s
    double dt = 1e-4;        ///< s, fixed step
    double step_time = 0.1;  ///< s
    double step_size = 0.2;  ///< p.u. change of P_ref
    std::size_t record_decimation = 1;

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

inline void validate(const SimConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw Error(Errc::invalid_argument, "dt must be > 0");
    const double dt_max = cfg.model == ModelKind::emt ? 1e-4 : 1e-3;
    if (cfg.dt > dt_max * (1.0 + 1e-12))
        throw Error(Errc::invalid_argument, "dt must be <= " + std::to_string(dt_max) + " s for " +
                                                std::string(to_string(cfg.model)) + " runs");
    if (!(cfg.t_end > 0.0)) throw Error(Errc::invalid_argument, "t_end must be > 0");
    if (!(cfg.step_time >= 0.0 && cfg.step_time < cfg.t_end))
        throw Error(Errc::invalid_argument, "step_time must lie in [0, t_end)");
    if (cfg.record_decimation == 0) throw Error(Errc::invalid_argument, "record_decimation must be >= 1");
}

/// Sampled trajectories; parallel arrays with strictly increasing t.
struct TimeSeries {
    std::vector<double> t;            ///< s
    std::vector<double> p;            ///< terminal active power, p.u.
    std::vector<double> omega_i;      ///< converter frequency, p.u.
    std::vector<double> i_d;          ///< p.u.
    std::vector<double> i_q;          ///< p.u.
    std::vector<double> v_mag;        ///< terminal voltage magnitude, p.u.
    std::vector<double> delta_theta;  ///< rad
    /// Set when a state left the +-1e3 p.u. envelope; the series stops there.
    std::optional<double> divergence_time;

    [[nodiscard]] std::size_t size() const noexcept { return t.size(); }

    void push(double time, double power, double omega, cplx current, double vmag, double dtheta) {
        t.push_back(time);
        p.push_back(power);
        omega_i.push_back(omega);
        i_d.push_back(current.real());
        i_q.push_back(current.imag());
        v_mag.push_back(vmag);
        delta_theta.push_back(dtheta);
    }
};

/// State magnitude beyond which a run is declared divergent.
inline constexpr double kDivergenceThreshold = 1e3;

namespace detail {

template <std::size_t N>
using State = std::array<double, N>;

template <std::size_t N>
State<N> axpy(const State<N>& x, double h, const State<N>& k) {
    State<N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = x[i] + h * k[i];
    return out;
}

template <std::size_t N, typename Deriv>
State<N> rk4_step(const State<N>& x, double dt, Deriv&& f) {
    const State<N> k1 = f(x);
    const State<N> k2 = f(axpy(x, 0.5 * dt, k1));
    const State<N> k3 = f(axpy(x, 0.5 * dt, k2));
    const State<N> k4 = f(axpy(x, dt, k3));
    State<N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

template <std::size_t N>
bool out_of_bounds(const State<N>& x) {
    return std::any_of(x.begin(), x.end(), [](double v) { return !std::isfinite(v) || std::abs(v) > kDivergenceThreshold; });
}

struct Outputs {
    cplx i;
    cplx v;
    double p;
    double omega;
};

// Terminal quantities for an EMT state [i_d, i_q, z_d, z_q, dtheta].
inline Outputs emt_outputs(const ConverterParams& pp, const ControlParams& c, const State<5>& x, double p_ref) {
    const cplx i{x[0], x[1]};
    const cplx z{x[2], x[3]};
    const cplx v = pp.v_set - c.k_v * (i - z);
    const double p = (v * std::conj(i)).real();
    return {i, v, p, pp.omega_1 + c.k_p * (p_ref - p)};
}

// RMS: current is algebraic and depends on omega_i through the reactance,
// which in turn depends on P; solved by fixed-point iteration.
inline Outputs rms_outputs(const ConverterParams& pp, const ControlParams& c, const OperatingPoint& op,
                           const State<3>& x, double p_ref, double omega_guess) {
    const cplx z{x[0], x[1]};
    const cplx grid = std::polar(op.v_g, -(op.theta_0 + x[2]));
    double omega = omega_guess;
    for (int it = 0; it < 200; ++it) {
        const cplx i = (pp.v_set + c.k_v * z - grid) / cplx{pp.r_c + c.k_v, omega * pp.l_c};
        const cplx v = pp.v_set - c.k_v * (i - z);
        const double p = (v * std::conj(i)).real();
        const double next = pp.omega_1 + c.k_p * (p_ref - p);
        if (!std::isfinite(next)) break;
        if (std::abs(next - omega) <= 1e-15 * std::max(1.0, std::abs(next))) return {i, v, p, next};
        omega = next;
    }
    throw Error(Errc::numerical, "RMS network solution did not converge");
}

// Time derivatives in 1/s for the EMT state.
inline State<5> emt_derivative(const ConverterParams& pp, const ControlParams& c, const OperatingPoint& op,
                               const State<5>& s, double p_ref) {
    const double wb = pp.omega_b;
    const auto o = emt_outputs(pp, c, s, p_ref);
    const cplx grid = std::polar(op.v_g, -(op.theta_0 + s[4]));
    const cplx di = wb / pp.l_c * (o.v - grid - cplx{pp.r_c, o.omega * pp.l_c} * o.i);
    const cplx dz = c.omega_v * wb * (o.i - cplx{s[2], s[3]});
    return {di.real(), di.imag(), dz.real(), dz.imag(), (o.omega - pp.omega_1) * wb};
}

// Time derivatives in 1/s for the RMS state; omega_guess seeds and receives
// the network solution's frequency.
inline State<3> rms_derivative(const ConverterParams& pp, const ControlParams& c, const OperatingPoint& op,
                               const State<3>& s, double p_ref, double& omega_guess) {
    const double wb = pp.omega_b;
    const auto o = rms_outputs(pp, c, op, s, p_ref, omega_guess);
    omega_guess = o.omega;
    const cplx dz = c.omega_v * wb * (o.i - cplx{s[0], s[1]});
    return {dz.real(), dz.imag(), (o.omega - pp.omega_1) * wb};
}

}  // namespace detail

/// Integrates the model with classical RK4 at a fixed step, starting from the
/// operating point and stepping P_ref by cfg.step_size at cfg.step_time.
/// EMT state [i_d, i_q, z_d, z_q, dtheta]; RMS state [z_d, z_q, dtheta].
/// A run whose state leaves the divergence envelope returns a truncated
/// series with divergence_time set.
inline TimeSeries simulate(const ConverterParams& pp, const ControlParams& c, const OperatingPoint& op,
                           const SimConfig& cfg) {
    validate(pp);
    validate(c);
    validate(cfg);
    const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
    const auto step_index = static_cast<std::size_t>(std::llround(cfg.step_time / cfg.dt));
    auto p_ref_at = [&](std::size_t n) { return op.p_0 + (n >= step_index ? cfg.step_size : 0.0); };

    TimeSeries ts;
    ts.t.reserve(steps / cfg.record_decimation + 2);
    const cplx i0 = op.current();

    if (cfg.model == ModelKind::emt) {
        detail::State<5> x{i0.real(), i0.imag(), i0.real(), i0.imag(), 0.0};
        auto record = [&](std::size_t n, const detail::State<5>& s) {
            const auto o = detail::emt_outputs(pp, c, s, p_ref_at(n));
            ts.push(static_cast<double>(n) * cfg.dt, o.p, o.omega, o.i, std::abs(o.v), s[4]);
        };
        record(0, x);
        for (std::size_t n = 0; n < steps; ++n) {
            const double p_ref = p_ref_at(n);
            auto f = [&](const detail::State<5>& s) { return detail::emt_derivative(pp, c, op, s, p_ref); };
            x = detail::rk4_step(x, cfg.dt, f);
            if (detail::out_of_bounds(x)) {
                ts.divergence_time = static_cast<double>(n + 1) * cfg.dt;
                break;
            }
            if ((n + 1) % cfg.record_decimation == 0 || n + 1 == steps) record(n + 1, x);
        }
        return ts;
    }

    detail::State<3> x{i0.real(), i0.imag(), 0.0};
    double omega_guess = pp.omega_1;
    auto record = [&](std::size_t n, const detail::State<3>& s) {
        const auto o = detail::rms_outputs(pp, c, op, s, p_ref_at(n), omega_guess);
        ts.push(static_cast<double>(n) * cfg.dt, o.p, o.omega, o.i, std::abs(o.v), s[2]);
    };
    record(0, x);
    for (std::size_t n = 0; n < steps; ++n) {
        const double p_ref = p_ref_at(n);
        auto f = [&](const detail::State<3>& s) {
            return detail::rms_derivative(pp, c, op, s, p_ref, omega_guess);
        };
        x = detail::rk4_step(x, cfg.dt, f);
        const auto o = detail::rms_outputs(pp, c, op, x, p_ref_at(n + 1), omega_guess);
        if (detail::out_of_bounds(x) || !(std::abs(o.i) <= kDivergenceThreshold)) {
            ts.divergence_time = static_cast<double>(n + 1) * cfg.dt;
            break;
        }
        if ((n + 1) % cfg.record_decimation == 0 || n + 1 == steps) record(n + 1, x);
    }
    return ts;
}

/// Linear interpolation of channel `y` sampled at `t` onto time `at`.
inline double interpolate(const std::vector<double>& t, const std::vector<double>& y, double at) {
    if (at <= t.front()) return y.front();
    if (at >= t.back()) return y.back();
    const auto it = std::upper_bound(t.begin(), t.end(), at);
    const auto k = static_cast<std::size_t>(it - t.begin());
    const double w = (at - t[k - 1]) / (t[k] - t[k - 1]);
    return y[k - 1] + w * (y[k] - y[k - 1]);
}

/// 98% settling time of P after `step_time`, relative to the last sample.
/// nullopt for a divergent series or one still moving over its final tenth.
inline std::optional<double> settling_time(const TimeSeries& ts, double step_time, double band = 0.02) {
    if (ts.divergence_time || ts.size() < 2) return std::nullopt;
    const double final_value = ts.p.back();
    const double initial = interpolate(ts.t, ts.p, step_time);
    const double tol = band * std::abs(final_value - initial);
    const double tail_from = ts.t.back() - 0.1 * (ts.t.back() - step_time);
    for (std::size_t k = 0; k < ts.size(); ++k)
        if (ts.t[k] >= tail_from && std::abs(ts.p[k] - final_value) > tol) return std::nullopt;
    std::size_t last_out = ts.size();
    for (std::size_t k = 0; k < ts.size(); ++k)
        if (ts.t[k] >= step_time && std::abs(ts.p[k] - final_value) > tol) last_out = k;
    if (last_out == ts.size()) return 0.0;
    if (last_out + 1 >= ts.size()) return std::nullopt;
    return ts.t[last_out + 1] - step_time;
}

struct MismatchMetrics {
    double max_abs_dp = 0.0;  ///< max |P_a - P_b| over the window
    double rms_dp = 0.0;      ///< root-mean-square of P_a - P_b over the window
    std::optional<double> settling_a;
    std::optional<double> settling_b;
};

/// Compares P of two runs over [t_from, t_to]; b is interpolated onto a's grid.
inline MismatchMetrics compare_runs(const TimeSeries& a, const TimeSeries& b, double t_from,
                                    double t_to = std::numeric_limits<double>::infinity()) {
    if (a.size() == 0 || b.size() == 0) throw Error(Errc::incomparable_runs, "empty time series");
    const double lo = std::max({a.t.front(), b.t.front(), t_from});
    const double hi = std::min({a.t.back(), b.t.back(), t_to});
    if (!(hi >= lo)) throw Error(Errc::incomparable_runs, "time ranges of the runs do not overlap the window");
    MismatchMetrics m;
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a.t[k] < lo || a.t[k] > hi) continue;
        const double d = a.p[k] - interpolate(b.t, b.p, a.t[k]);
        m.max_abs_dp = std::max(m.max_abs_dp, std::abs(d));
        sum_sq += d * d;
        ++count;
    }
    if (count == 0) throw Error(Errc::incomparable_runs, "no samples inside the comparison window");
    m.rms_dp = std::sqrt(sum_sq / static_cast<double>(count));
    m.settling_a = settling_time(a, t_from);
    m.settling_b = settling_time(b, t_from);
    return m;
}

/// Dominant oscillation frequency (Hz) of P at or after `t_from`, from
/// zero-crossing counting on the linearly detrended channel, cross-checked
/// against the peak of a discrete spectrum. nullopt for a flat channel or
/// fewer than four periods in the window.
inline std::optional<double> dominant_frequency(const TimeSeries& ts, double t_from = 0.0) {
    std::vector<double> t;
    std::vector<double> y;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        if (ts.t[k] < t_from) continue;
        t.push_back(ts.t[k]);
        y.push_back(ts.p[k]);
    }
    const std::size_t n = t.size();
    if (n < 8) return std::nullopt;

    // Least-squares line removal.
    const double tm = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(n);
    const double ym = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxy += (t[k] - tm) * (y[k] - ym);
        sxx += (t[k] - tm) * (t[k] - tm);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    for (std::size_t k = 0; k < n; ++k) y[k] -= ym + slope * (t[k] - tm);

    const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
    if (*hi_it - *lo_it < 1e-6) return std::nullopt;

    std::vector<double> crossings;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if ((y[k] < 0.0) != (y[k + 1] < 0.0))
            crossings.push_back(t[k] + (t[k + 1] - t[k]) * y[k] / (y[k] - y[k + 1]));
    }
    if (crossings.size() < 9) return std::nullopt;  // fewer than four full periods
    const double f_zc =
        0.5 * static_cast<double>(crossings.size() - 1) / (crossings.back() - crossings.front());

    // Discrete spectrum on the (assumed uniform) grid, bins up to Nyquist.
    const double span = t.back() - t.front();
    const double fs = static_cast<double>(n - 1) / span;
    const std::size_t bins = n / 2;
    double best_mag = -1.0;
    double f_peak = 0.0;
    for (std::size_t b = 1; b <= bins; ++b) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(n);
        const cplx step = std::polar(1.0, -w);
        cplx phasor{1.0, 0.0};
        cplx acc{};
        for (std::size_t k = 0; k < n; ++k) {
            acc += y[k] * phasor;
            phasor *= step;
        }
        const double mag = std::norm(acc);
        if (mag > best_mag) {
            best_mag = mag;
            f_peak = static_cast<double>(b) * fs / static_cast<double>(n);
        }
    }
    const double bin_width = fs / static_cast<double>(n);
    if (std::abs(f_zc - f_peak) <= std::max(2.0 * bin_width, 0.1 * f_peak)) return f_zc;
    return f_peak;
}

/// True when the peak-to-peak swing of P over the last `window` seconds
/// exceeds that of the window before it, or the run hit the divergence envelope.
inline bool oscillation_growing(const TimeSeries& ts, double window) {
    if (ts.divergence_time) return true;
    if (ts.size() < 4) return false;
    const double t1 = ts.t.back();
    auto swing = [&](double from, double to) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t k = 0; k < ts.size(); ++k) {
            if (ts.t[k] < from || ts.t[k] > to) continue;
            lo = std::min(lo, ts.p[k]);
            hi = std::max(hi, ts.p[k]);
        }
        return hi - lo;
    };
    const double late = swing(t1 - window, t1);
    const double early = swing(t1 - 2.0 * window, t1 - window);
    return late > 1e-9 && late > early;
}

/// Step response of the closed-loop transfer function, by partial fractions
/// over its poles, sampled on the simulator grid of `grid`. Only P and
/// omega_i (and delta_theta, by trapezoidal integration of the frequency
/// deviation) are produced; the current and voltage channels hold NaN.
inline TimeSeries linearized_step_response(const ConverterParams& pp, const ControlParams& c, const OperatingPoint& op,
                                           ModelKind kind, double step_size, const SimConfig& grid) {
    const RationalTF g = closed_loop(pp, c, op, kind).tf;
    const std::vector<cplx> poles = roots(g.den());
    for (const cplx& z : poles)
        if (!(z.real() < 0.0)) {
            std::string report;
            for (const cplx& q : poles) report += " " + std::to_string(q.real()) + (q.imag() < 0 ? "" : "+") + std::to_string(q.imag()) + "j";
            throw Error(Errc::unstable_loop, "closed loop is not strictly stable; poles:" + report);
        }
    for (std::size_t i = 0; i < poles.size(); ++i)
        for (std::size_t j = i + 1; j < poles.size(); ++j)
            if (std::abs(poles[i] - poles[j]) < 1e-9 * std::max(1.0, std::abs(poles[i])))
                throw Error(Errc::numerical, "repeated closed-loop poles; partial fractions need distinct poles");

    const Polynomial dden = g.den().derivative();
    std::vector<cplx> residues;
    residues.reserve(poles.size());
    for (const cplx& z : poles) residues.push_back(g.num()(z) / (z * dden(z)));
    const double dc = g.num()[0] / g.den()[0];

    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto steps = static_cast<std::size_t>(std::llround(grid.t_end / grid.dt));
    TimeSeries ts;
    double theta = 0.0;
    double prev_dw = 0.0;
    for (std::size_t n = 0; n <= steps; ++n) {
        const double t = static_cast<double>(n) * grid.dt;
        const bool stepped = t >= grid.step_time - 0.5 * grid.dt;
        double y = 0.0;
        if (stepped) {
            const double tau = pp.omega_b * (t - grid.step_time);
            cplx acc = dc;
            for (std::size_t k = 0; k < poles.size(); ++k) acc += residues[k] * std::exp(poles[k] * tau);
            y = acc.real();
        }
        const double dp = step_size * y;
        const double dw = c.k_p * ((stepped ? step_size : 0.0) - dp);
        if (n > 0) theta += 0.5 * (dw + prev_dw) * pp.omega_b * grid.dt;
        prev_dw = dw;
        if (n % grid.record_decimation == 0 || n == steps)
            ts.push(t, op.p_0 + dp, pp.omega_1 + dw, cplx{nan, nan}, nan, theta);
    }
    return ts;
}

/// Relative L2 error of P_a against reference P_b (deviations from P_0 of b)
/// over [t_from, t_to].
inline double relative_l2_error(const TimeSeries& a, const TimeSeries& reference, double p_0, double t_from,
                                double t_to) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < reference.size(); ++k) {
        if (reference.t[k] < t_from || reference.t[k] > t_to) continue;
        const double r = reference.p[k];
        const double d = interpolate(a.t, a.p, reference.t[k]) - r;
        num += d * d;
        den += (r - p_0) * (r - p_0);
    }
    if (!(den > 0.0)) throw Error(Errc::incomparable_runs, "reference has no deviation in the window");
    return std::sqrt(num / den);
}

}  // namespace gfpc
