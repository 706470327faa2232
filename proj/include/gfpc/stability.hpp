#pragma once

// Routh-Hurwitz conditions, closed-loop poles and root-locus sweeps of the
// droop loop.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfpc/error.hpp"
#include "gfpc/plant.hpp"
#include "gfpc/ratfun.hpp"

namespace gfpc {

enum class Stability { stable, marginal, unstable };

constexpr std::string_view to_string(Stability s) {
    switch (s) {
        case Stability::stable: return "stable";
        case Stability::marginal: return "marginal";
        case Stability::unstable: return "unstable";
    }
    return "unknown";
}

/// |margin| at or below this is reported as marginal.
inline constexpr double kMarginalTol = 1e-12;

struct StabilityVerdict {
    Stability status = Stability::unstable;
    /// a1*a2 - a0*a3 for cubic checks; smallest normalized first-column entry for Routh arrays.
    double margin = 0.0;
    std::string binding_condition;

    [[nodiscard]] bool stable() const noexcept { return status == Stability::stable; }
};

/// Routh-Hurwitz for a0 s^3 + a1 s^2 + a2 s + a3.
inline StabilityVerdict routh_cubic(double a0, double a1, double a2, double a3) {
    if (a0 == 0.0) throw Error(Errc::degenerate_order, "leading cubic coefficient is zero");
    if (a0 < 0.0) {
        a0 = -a0;
        a1 = -a1;
        a2 = -a2;
        a3 = -a3;
    }
    StabilityVerdict v;
    v.margin = a1 * a2 - a0 * a3;
    if (a1 < 0.0 || a3 < 0.0 || v.margin < -kMarginalTol) {
        v.status = Stability::unstable;
        v.binding_condition = a1 < 0.0 ? "a1 > 0" : a3 < 0.0 ? "a3 > 0" : "a1*a2 > a0*a3";
        return v;
    }
    if (std::abs(v.margin) <= kMarginalTol || a1 == 0.0 || a3 == 0.0) {
        v.status = Stability::marginal;
        v.binding_condition = a3 == 0.0 ? "a3 > 0" : a1 == 0.0 ? "a1 > 0" : "a1*a2 > a0*a3";
        return v;
    }
    v.status = Stability::stable;
    v.binding_condition = "a1*a2 > a0*a3";
    return v;
}

/// Routh array over an arbitrary real polynomial. A zero first-column entry
/// yields a marginal verdict unless a sign change is already present.
inline StabilityVerdict routh_hurwitz(const Polynomial& p) {
    const std::size_t n = p.degree();
    if (n == 0) throw Error(Errc::degenerate_order, "constant polynomial has no roots");
    if (n == 3) return routh_cubic(p[3], p[2], p[1], p[0]);

    const double sign = p.leading() < 0.0 ? -1.0 : 1.0;
    const std::size_t width = n / 2 + 1;
    std::vector<std::vector<double>> rows(n + 1, std::vector<double>(width + 1, 0.0));
    for (std::size_t k = 0; k <= n; ++k) rows[k % 2][k / 2] = sign * p[n - k];

    std::vector<double> first{rows[0][0]};
    bool degenerate = false;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i >= 2) {
            const double pivot = rows[i - 1][0];
            if (pivot == 0.0) {
                degenerate = true;
                break;
            }
            for (std::size_t j = 0; j < width; ++j)
                rows[i][j] = (pivot * rows[i - 2][j + 1] - rows[i - 2][0] * rows[i - 1][j + 1]) / pivot;
        }
        first.push_back(rows[i][0]);
    }

    StabilityVerdict v;
    const double scale = std::abs(first.front());
    v.margin = std::numeric_limits<double>::infinity();
    for (double f : first) v.margin = std::min(v.margin, f / scale);
    const bool sign_change = std::any_of(first.begin(), first.end(), [](double f) { return f < 0.0; });
    if (sign_change) {
        v.status = Stability::unstable;
        v.binding_condition = "routh first column sign change";
    } else if (degenerate || std::abs(v.margin) <= kMarginalTol) {
        v.status = Stability::marginal;
        v.binding_condition = "routh first column zero";
    } else {
        v.status = Stability::stable;
        v.binding_condition = "routh first column positive";
    }
    return v;
}

struct CubicCoefficients {
    double a0 = 1.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double a3 = 0.0;
};

/// Characteristic cubic of the EMT droop loop in the static-gain mode (H = k_v).
inline CubicCoefficients emt_cubic(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op) {
    if (c.omega_v != 0.0) throw Error(Errc::wrong_regime, "cubic coefficients require omega_v = 0");
    const double w1 = p.omega_1;
    const double lc = p.l_c;
    const double v2 = p.v_set * p.v_set;
    const double a = detail::a_factor(p, op);
    const double b = -c.k_v * c.k_v * detail::b_factor(p, op);
    return {1.0, v2 * c.k_p * a / (w1 * lc) + 2.0 * c.k_v / lc, w1 * w1 + (c.k_v / lc) * (c.k_v / lc),
            w1 * w1 * (v2 * c.k_p / (w1 * lc)) * (1.0 + a + b)};
}

/// EMT droop loop without virtual impedance. Unstable for every K_p > 0,
/// marginal at K_p = 0 (poles at 0 and +-j w1). Assumes no reactive current.
inline StabilityVerdict condition_no_virtual_impedance(const ConverterParams& p, const ControlParams& c) {
    validate(p);
    validate(c);
    if (c.k_v != 0.0) throw Error(Errc::wrong_regime, "condition without virtual impedance requires k_v = 0");
    const double gain = c.k_p * p.v_set * p.v_set / (p.omega_1 * p.l_c);
    StabilityVerdict v;
    v.margin = -p.omega_1 * p.omega_1 * gain;  // a1 a2 - a0 a3 with a1 = 0
    v.binding_condition = "0 > Kp*Vset^2/(w1*Lc)";
    v.status = c.k_p == 0.0 ? Stability::marginal : Stability::unstable;
    return v;
}

/// Largest K_p keeping the EMT loop stable when i0 = 0.
inline double kp_stability_bound(const ConverterParams& p, const ControlParams& c) {
    const double lc = p.l_c;
    const double w1 = p.omega_1;
    return 2.0 * c.k_v * (c.k_v * c.k_v + lc * lc * w1 * w1) / (lc * lc * p.v_set * p.v_set * w1);
}

struct VirtualImpedanceVerdict {
    StabilityVerdict verdict;
    /// Simplified K_p bound, reported only for i_d0 = i_q0 = 0.
    std::optional<double> kp_bound;
};

/// EMT droop loop with a static virtual resistance: evaluates
/// (k_v^2/L_c^2 + w1^2)(i_q0 K_p V_set + 2 k_v/L_c)
///   - K_p V_set^2 w1 (1 + a + b) / L_c > 0.
inline VirtualImpedanceVerdict condition_with_virtual_impedance(const ConverterParams& p, const ControlParams& c,
                                                                const OperatingPoint& op) {
    validate(p);
    validate(c);
    if (!(c.k_v > 0.0)) throw Error(Errc::wrong_regime, "condition with virtual impedance requires k_v > 0");
    if (c.omega_v != 0.0) throw Error(Errc::wrong_regime, "condition with virtual impedance requires omega_v = 0");
    const double kv = c.k_v;
    const double lc = p.l_c;
    const double w1 = p.omega_1;
    const double vs = p.v_set;
    const double kp = c.k_p;
    const double iq = op.i_q0;
    const double i2 = op.current_mag_sq();

    const double lhs =
        (kv * kv / (lc * lc) + w1 * w1) * (iq * kp * vs + 2.0 * kv / lc) -
        kp * vs * vs * w1 * (-(kv * kv) * (i2 / vs + iq / (lc * w1)) / vs + iq * lc * w1 / vs + 1.0) / lc;

    const CubicCoefficients cc = emt_cubic(p, c, op);
    StabilityVerdict v;
    v.margin = lhs;
    if (cc.a1 <= 0.0 || cc.a3 < 0.0) {
        v.status = Stability::unstable;
        v.binding_condition = cc.a1 <= 0.0 ? "a1 > 0" : "a3 > 0";
    } else {
        v.binding_condition = "a1*a2 > a0*a3";
        v.status = std::abs(lhs) <= kMarginalTol || cc.a3 == 0.0 ? Stability::marginal
                   : lhs > 0.0                                  ? Stability::stable
                                                                : Stability::unstable;
    }
    VirtualImpedanceVerdict out{v, std::nullopt};
    if (op.i_d0 == 0.0 && op.i_q0 == 0.0) out.kp_bound = kp_stability_bound(p, c);
    return out;
}

/// Single real pole of the RMS droop loop in the static-gain mode.
inline double rms_closed_loop_pole(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op) {
    if (c.omega_v != 0.0) throw Error(Errc::wrong_regime, "closed-form RMS pole requires omega_v = 0");
    const double lc = p.l_c;
    const double w1 = p.omega_1;
    const double a = detail::a_factor(p, op);
    const double b = -c.k_v * c.k_v * detail::b_factor(p, op);
    return -c.k_p * lc * p.v_set * p.v_set * w1 * (1.0 + a + b) / (c.k_v * c.k_v + lc * lc * w1 * w1);
}

inline std::vector<cplx> closed_loop_poles(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op,
                                           ModelKind kind) {
    return roots(closed_loop(p, c, op, kind).tf.den());
}

/// Verdict for the closed loop of either model at any omega_v, from its Routh array.
inline StabilityVerdict closed_loop_verdict(const ConverterParams& p, const ControlParams& c, const OperatingPoint& op,
                                            ModelKind kind) {
    return routh_hurwitz(closed_loop(p, c, op, kind).tf.den());
}

struct RootLocus {
    std::vector<double> gains;
    /// branches[g][b]: pole b at gains[g]; index b follows one continuous branch.
    std::vector<std::vector<cplx>> branches;
};

namespace detail {

// Reorders `next` so that next[b] is the continuation of prev[b], minimizing
// the summed distance (exhaustive for small degree, greedy otherwise).
inline std::vector<cplx> match_branches(const std::vector<cplx>& prev, std::vector<cplx> next) {
    const std::size_t n = prev.size();
    auto tie_key = [](cplx z) { return z.imag() > 0.0 ? 0 : z.imag() < 0.0 ? 2 : 1; };
    if (n <= 7) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::vector<std::size_t> best = perm;
        double best_cost = std::numeric_limits<double>::infinity();
        int best_ties = 0;
        do {
            double cost = 0.0;
            int ties = 0;
            for (std::size_t b = 0; b < n; ++b) {
                cost += std::abs(prev[b] - next[perm[b]]);
                ties += tie_key(prev[b]) == tie_key(next[perm[b]]) ? 1 : 0;
            }
            if (cost < best_cost - 1e-15 || (std::abs(cost - best_cost) <= 1e-15 && ties > best_ties)) {
                best_cost = cost;
                best_ties = ties;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        std::vector<cplx> out(n);
        for (std::size_t b = 0; b < n; ++b) out[b] = next[best[b]];
        return out;
    }
    std::vector<cplx> out(n);
    std::vector<bool> taken(n, false);
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t pick = n;
        for (std::size_t k = 0; k < n; ++k) {
            if (taken[k]) continue;
            if (pick == n || std::abs(prev[b] - next[k]) < std::abs(prev[b] - next[pick])) pick = k;
        }
        taken[pick] = true;
        out[b] = next[pick];
    }
    return out;
}

}  // namespace detail

/// Closed-loop poles over a sorted, nonnegative K_p grid, branch-matched by
/// nearest-neighbor continuation.
inline RootLocus root_locus(const ConverterParams& p, ControlParams c, const OperatingPoint& op, ModelKind kind,
                            std::span<const double> kp_grid) {
    if (kp_grid.empty()) throw Error(Errc::invalid_argument, "root locus needs a nonempty K_p grid");
    if (!std::is_sorted(kp_grid.begin(), kp_grid.end()) || kp_grid.front() < 0.0)
        throw Error(Errc::invalid_argument, "root locus K_p grid must be sorted and nonnegative");
    RootLocus out;
    for (double kp : kp_grid) {
        c.k_p = kp;
        std::vector<cplx> poles = closed_loop_poles(p, c, op, kind);
        if (out.branches.empty()) {
            std::sort(poles.begin(), poles.end(), [](cplx x, cplx y) {
                return x.real() != y.real() ? x.real() < y.real() : x.imag() > y.imag();
            });
        } else {
            poles = detail::match_branches(out.branches.back(), std::move(poles));
        }
        out.gains.push_back(kp);
        out.branches.push_back(std::move(poles));
    }
    return out;
}

}  // namespace gfpc
