#pragma once

// Single grid-forming converter behind a phase reactor, connected to an
// infinite bus. Parameters, steady state, and the small-signal transfer
// functions from load angle to active power for EMT and RMS modeling.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <string_view>

#include "gfpc/error.hpp"
#include "gfpc/ratfun.hpp"

namespace gfpc {

enum class ModelKind { emt, rms };

constexpr std::string_view to_string(ModelKind kind) { return kind == ModelKind::emt ? "emt" : "rms"; }

inline ModelKind parse_model_kind(std::string_view text) {
    if (text == "emt" || text == "EMT") return ModelKind::emt;
    if (text == "rms" || text == "RMS") return ModelKind::rms;
    throw Error(Errc::invalid_argument, "model must be 'emt' or 'rms', got '" + std::string(text) + "'");
}

/// Circuit constants, per unit unless noted.
struct ConverterParams {
    double l_c = 0.2;    ///< phase reactor + transformer inductance
    double r_c = 0.0;    ///< phase reactor + transformer resistance
    double v_set = 1.0;  ///< converter voltage set-point
    double omega_1 = 1.0;
    double omega_b = 100.0 * std::numbers::pi;  ///< base angular speed, rad/s

    friend bool operator==(const ConverterParams&, const ConverterParams&) = default;
};

struct ControlParams {
    double k_p = 0.0;      ///< frequency droop, p.u. frequency per p.u. power
    double k_v = 0.0;      ///< virtual-impedance damping gain
    double omega_v = 0.0;  ///< high-pass cut-off; 0 selects the static-gain mode

    friend bool operator==(const ControlParams&, const ControlParams&) = default;
};

inline void validate(const ConverterParams& p) {
    if (!(p.l_c > 0.0)) throw Error(Errc::invalid_argument, "l_c must be > 0");
    if (!(p.r_c >= 0.0)) throw Error(Errc::invalid_argument, "r_c must be >= 0");
    if (!(p.v_set > 0.0)) throw Error(Errc::invalid_argument, "v_set must be > 0");
    if (!(p.omega_1 > 0.0)) throw Error(Errc::invalid_argument, "omega_1 must be > 0");
    if (!(p.omega_b > 0.0)) throw Error(Errc::invalid_argument, "omega_b must be > 0");
}

inline void validate(const ControlParams& c) {
    if (!(c.k_p >= 0.0)) throw Error(Errc::invalid_argument, "k_p must be >= 0");
    if (!(c.k_v >= 0.0)) throw Error(Errc::invalid_argument, "k_v must be >= 0");
    if (!(c.omega_v >= 0.0)) throw Error(Errc::invalid_argument, "omega_v must be >= 0");
}

/// Steady state with the converter dq frame aligned to its own terminal
/// voltage (v = V_set + j0). theta_0 is the lead of the converter frame over
/// the grid frame.
struct OperatingPoint {
    double i_d0 = 0.0;
    double i_q0 = 0.0;
    double theta_0 = 0.0;
    double v_g = 1.0;
    double p_0 = 0.0;

    [[nodiscard]] cplx current() const { return {i_d0, i_q0}; }
    [[nodiscard]] double current_mag_sq() const { return i_d0 * i_d0 + i_q0 * i_q0; }
};

/// |V_set - (R_c + j w1 L_c) i0 - V_g e^{-j theta_0}|
inline double steady_state_residual(const ConverterParams& p, const OperatingPoint& op) {
    const cplx z{p.r_c, p.omega_1 * p.l_c};
    return std::abs(cplx{p.v_set} - z * op.current() - std::polar(op.v_g, -op.theta_0));
}

/// Steady state delivering `p_ref` at the terminal into a grid of magnitude
/// `v_g` at nominal frequency. Closed form: i_d0 = P/V_set, i_q0 from the
/// magnitude condition (the root with the smaller |i_q0|), theta_0 from the
/// angle of the grid-side phasor. Reduces to the lossless power-angle relation
/// when r_c = 0.
inline OperatingPoint solve_operating_point(const ConverterParams& p, double p_ref, double v_g) {
    validate(p);
    if (!(v_g > 0.0)) throw Error(Errc::invalid_argument, "v_g must be > 0");
    const double x = p.omega_1 * p.l_c;
    const double r = p.r_c;
    const double v = p.v_set;
    const double id = p_ref / v;

    // (x^2 + r^2) iq^2 + 2 x v iq + [(v - r id)^2 + x^2 id^2 - v_g^2] = 0
    const double qa = x * x + r * r;
    const double qb = 2.0 * x * v;
    const double qc = (v - r * id) * (v - r * id) + x * x * id * id - v_g * v_g;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0)
        throw Error(Errc::power_angle_limit,
                    "P_ref = " + std::to_string(p_ref) + " p.u. exceeds the transferable power for v_g = " + std::to_string(v_g));
    const double sq = std::sqrt(disc);
    // Smaller-magnitude root, written to avoid cancellation.
    const double iq = qc == 0.0 ? 0.0 : (2.0 * qc) / (-qb - sq);

    OperatingPoint op;
    op.i_d0 = id;
    op.i_q0 = iq;
    op.v_g = v_g;
    const cplx grid_side = cplx{v} - cplx{r, x} * op.current();
    op.theta_0 = 0.0 - std::arg(grid_side);  // no negative zero at no load
    op.p_0 = v * id;

    const double residual = steady_state_residual(p, op);
    if (!(residual < 1e-8))
        throw Error(Errc::numerical, "operating point residual " + std::to_string(residual) + " exceeds 1e-8");
    return op;
}

/// Virtual-impedance high-pass filter H(s) = k_v s / (s + omega_v); the
/// constant k_v when omega_v = 0.
inline RationalTF hp_filter(const ControlParams& c) {
    if (c.omega_v == 0.0) return RationalTF::constant(c.k_v);
    return {Polynomial{0.0, c.k_v}, Polynomial{c.omega_v, 1.0}};
}

struct LinearizationConstants {
    double a = 0.0;  ///< w1 L_c i_q0 / V_set
    RationalTF b;    ///< -H(s)^2 / V_set * (i_q0 / (w1 L_c) + |i0|^2 / V_set)
};

namespace detail {

// Filter numerator/denominator pair so that H = hn / hd; transfer functions
// below are expanded over the common factor hd^2.
struct FilterPolys {
    Polynomial hn;
    Polynomial hd;
};

inline FilterPolys filter_polys(const ControlParams& c) {
    if (c.omega_v == 0.0) return {Polynomial{c.k_v}, Polynomial{1.0}};
    return {Polynomial{0.0, c.k_v}, Polynomial{c.omega_v, 1.0}};
}

// beta such that b(s) = -beta * H(s)^2
inline double b_factor(const ConverterParams& p, const OperatingPoint& op) {
    return (op.i_q0 / (p.omega_1 * p.l_c) + op.current_mag_sq() / p.v_set) / p.v_set;
}

inline double a_factor(const ConverterParams& p, const OperatingPoint& op) {
    return p.omega_1 * p.l_c * op.i_q0 / p.v_set;
}

// (1 + a + b(s)) * hd^2
inline Polynomial load_term(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op) {
    const auto [hn, hd] = filter_polys(c);
    return (1.0 + a_factor(p, op)) * (hd * hd) - b_factor(p, op) * (hn * hn);
}

}  // namespace detail

inline LinearizationConstants linearization_constants(const ConverterParams& p, const ControlParams& c,
                                                      const OperatingPoint& op) {
    const RationalTF h = hp_filter(c);
    return {detail::a_factor(p, op), (-detail::b_factor(p, op)) * (h * h)};
}

/// Load angle to active power, dP/dtheta. EMT keeps the phase-reactor current
/// dynamics; RMS treats the network algebraically. R_c is neglected. With
/// omega_v > 0 the filter is substituted and the result expanded over
/// (s + omega_v)^2.
inline RationalTF open_loop_plant(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op,
                                  ModelKind kind) {
    validate(p);
    validate(c);
    const auto [hn, hd] = detail::filter_polys(c);
    const double w1 = p.omega_1;
    const double lc = p.l_c;
    const double v2 = p.v_set * p.v_set;
    const Polynomial hd2 = hd * hd;
    const Polynomial load = detail::load_term(p, c, op);

    if (kind == ModelKind::emt) {
        const Polynomial s{0.0, 1.0};
        const Polynomial s2{0.0, 0.0, 1.0};
        const double a = detail::a_factor(p, op);
        const Polynomial num = (v2 / (w1 * lc)) * (a * (s2 * hd2) + (w1 * w1) * load);
        const Polynomial den = s2 * hd2 + (2.0 / lc) * (s * hn * hd) + (w1 * w1) * hd2 + (1.0 / (lc * lc)) * (hn * hn);
        return {num, den};
    }
    const Polynomial num = (v2 * w1 / lc) * load;
    const Polynomial den = (w1 * w1) * hd2 + (1.0 / (lc * lc)) * (hn * hn);
    return {num, den};
}

/// Droop controller C(s) = K_p / s.
inline RationalTF droop_controller(const ControlParams& c) { return RationalTF::integrator(c.k_p); }

/// Loop transfer function L(s) = C(s) G(s).
inline RationalTF loop_tf(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op, ModelKind kind) {
    return droop_controller(c) * open_loop_plant(p, c, op, kind);
}

struct ClosedLoop {
    RationalTF tf;
    /// K_p = 0: the droop loop is open, tf has a zero numerator but keeps the
    /// characteristic polynomial as its denominator.
    bool loop_open = false;
};

/// dP/dP_ref built from the expanded characteristic polynomial (not via
/// feedback()), so the two construction routes can be checked against each other.
inline ClosedLoop closed_loop(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op,
                              ModelKind kind) {
    validate(p);
    validate(c);
    const auto [hn, hd] = detail::filter_polys(c);
    const double w1 = p.omega_1;
    const double lc = p.l_c;
    const double v2 = p.v_set * p.v_set;
    const double kp = c.k_p;
    const Polynomial s{0.0, 1.0};
    const Polynomial s2{0.0, 0.0, 1.0};
    const Polynomial s3{0.0, 0.0, 0.0, 1.0};
    const Polynomial hd2 = hd * hd;
    const Polynomial load = detail::load_term(p, c, op);
    const Polynomial network = (w1 * w1) * hd2 + (1.0 / (lc * lc)) * (hn * hn);

    if (kind == ModelKind::emt) {
        const double a = detail::a_factor(p, op);
        const Polynomial num = (kp * v2 / (w1 * lc)) * (a * (s2 * hd2) + (w1 * w1) * load);
        const Polynomial den = s3 * hd2 + (2.0 / lc) * (s2 * hn * hd) + (v2 * kp * a / (w1 * lc)) * (s2 * hd2) +
                               s * network + (kp * v2 * w1 / lc) * load;
        return {{num, den}, kp == 0.0};
    }
    const Polynomial num = (kp * v2 * w1 / lc) * load;
    const Polynomial den = s * network + num;
    return {{num, den}, kp == 0.0};
}

/// e(s) = G_cl^EMT(s) - G_cl^RMS(s): the RMS model's estimation error.
inline RationalTF mismatch_tf(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op) {
    return closed_loop(p, c, op, ModelKind::emt).tf - closed_loop(p, c, op, ModelKind::rms).tf;
}

/// Load angle to active power for the RMS model, evaluated at a real Laplace
/// value `s` by the phasor route: perturb the steady-state identity, solve for
/// the current and take the real part of the terminal power perturbation.
/// At real s the conjugate-coefficient part of the complex response reduces
/// to a plain complex conjugate.
inline double rms_plant_phasor_route(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op,
                                     double s) {
    const double h = hp_filter(c)(cplx{s}).real();
    const double x = p.omega_1 * p.l_c;
    const cplx i0 = op.current();
    const cplx j{0.0, 1.0};
    // dI / dtheta = j (V_set - j w1 L_c i0) / (H + j w1 L_c)
    const cplx g_theta_i = j * (p.v_set - j * x * i0) / (h + j * x);
    // dP = Re(V_set conj(dI) + conj(i0) dV), dV = -H dI
    return (p.v_set * std::conj(g_theta_i) - std::conj(i0) * h * g_theta_i).real();
}

}  // namespace gfpc
