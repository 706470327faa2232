// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gfpc/case_config.hpp"
#include "gfpc/csv.hpp"
#include "gfpc/margins.hpp"
#include "gfpc/simulate.hpp"
#include "gfpc/stability.hpp"

using namespace gfpc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
    std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_real(const std::vector<cplx>& r) {
    double m = -std::numeric_limits<double>::infinity();
    for (cplx z : r) m = std::max(m, z.real());
    return m;
}

const ConverterParams kP;

void tuning_reproduction() {
    const auto t0 = Clock::now();
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    const TuningResult low = tune(kP, op, 2.5, PhaseFloor::deg80);
    const TuningResult high = tune(kP, op, 10.0, PhaseFloor::deg80);
    const double elapsed = seconds_since(t0);
    const bool pass = low.feasible && high.feasible && std::abs(low.k_v - 0.0658) <= 5e-4 &&
                      std::abs(low.k_p - 0.0584) <= 5e-4 && std::abs(high.k_v - 0.1667) <= 5e-4 &&
                      std::abs(high.k_p - 0.0569) <= 0.01 * 0.0569 && elapsed < 0.1;
    report(1, "tuning reproduction", pass,
           fmt("g_m=2.5 -> k_v=%.5f K_p=%.5f; g_m=10 -> k_v=%.5f K_p=%.5f (%.2f%% from 0.0569); %.1f ms", low.k_v,
               low.k_p, high.k_v, high.k_p, 100.0 * std::abs(high.k_p - 0.0569) / 0.0569, 1e3 * elapsed));
}

void instability_without_virtual_impedance() {
    const auto t0 = Clock::now();
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    bool pass = true;
    std::string detail;
    for (double kp : {1e-4, 1e-3, 0.005, 0.01}) {
        const ControlParams c{kp, 0.0, 0.0};
        const bool routh_unstable = closed_loop_verdict(kP, c, op, ModelKind::emt).status == Stability::unstable &&
                                    condition_no_virtual_impedance(kP, c).status == Stability::unstable;
        const auto emt = roots(closed_loop(kP, c, op, ModelKind::emt).tf.den());
        double pair_re = -1.0;
        for (cplx z : emt)
            if (z.imag() != 0.0) pair_re = std::max(pair_re, z.real());
        const auto rms = roots(closed_loop(kP, c, op, ModelKind::rms).tf.den());
        const bool rms_ok = rms.size() == 1 && rms[0].imag() == 0.0 && rms[0].real() < 0.0;
        pass = pass && routh_unstable && pair_re > 0.0 && rms_ok;
        detail += fmt("K_p=%g: pair Re=%+.3e, RMS pole=%.3e; ", kp, pair_re, rms.empty() ? 0.0 : rms[0].real());
    }
    double worst = 0.0;
    int pair = 0;
    for (cplx z : roots(closed_loop(kP, {0.0, 0.0, 0.0}, op, ModelKind::emt).tf.den()))
        if (z.imag() != 0.0) {
            ++pair;
            worst = std::max({worst, std::abs(z.real()), std::abs(std::abs(z.imag()) - 1.0)});
        }
    pass = pass && pair == 2 && worst <= 1e-9;
    detail += fmt("K_p=0 pair deviation from +-j: %.1e; %.1f ms", worst, 1e3 * seconds_since(t0));
    report(2, "instability without virtual impedance", pass && seconds_since(t0) < 0.1, detail);
}

void stability_boundary() {
    std::mt19937_64 rng(20240615);
    std::uniform_real_distribution<double> lc(0.1, 0.3), kv(0.02, 0.2);
    bool pass = true;
    double worst_gap = 0.0;
    int mismatches = 0;
    for (int k = 0; k < 20; ++k) {
        ConverterParams p;
        p.l_c = lc(rng);
        const double k_v = kv(rng);
        const OperatingPoint op = solve_operating_point(p, 0.0, 1.0);
        auto stable = [&](double kp) { return routh_cubic(1.0, emt_cubic(p, {kp, k_v, 0.0}, op).a1,
                                                          emt_cubic(p, {kp, k_v, 0.0}, op).a2,
                                                          emt_cubic(p, {kp, k_v, 0.0}, op).a3)
                                                  .stable(); };
        const double bound = 2.0 * k_v * (k_v * k_v + p.l_c * p.l_c * p.omega_1 * p.omega_1) /
                             (p.l_c * p.l_c * p.v_set * p.v_set * p.omega_1);
        double lo = 0.0, hi = 10.0 * bound;
        if (!stable(1e-12) || stable(hi)) {
            pass = false;
            continue;
        }
        while (hi - lo > 1e-13) {
            const double mid = 0.5 * (lo + hi);
            (stable(mid) ? lo : hi) = mid;
        }
        worst_gap = std::max(worst_gap, std::abs(0.5 * (lo + hi) - bound));
        for (double f : {0.1, 0.5, 0.9, 0.99, 1.01, 1.1, 2.0, 5.0}) {
            const ControlParams c{f * bound, k_v, 0.0};
            const bool routh = condition_with_virtual_impedance(p, c, op).verdict.stable();
            const bool poles = max_real(closed_loop_poles(p, c, op, ModelKind::emt)) < 0.0;
            if (routh != poles) ++mismatches;
        }
    }
    pass = pass && worst_gap <= 1e-9 && mismatches == 0;
    report(3, "stability boundary consistency", pass,
           fmt("20 sets, max |bisected - closed-form bound| = %.2e, verdict/pole-sign mismatches = %d", worst_gap,
               mismatches));
}

void margin_self_consistency() {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    bool pass = true;
    std::string detail;
    for (double g : {2.5, 10.0}) {
        const TuningResult t = tune(kP, op, g, PhaseFloor::deg80);
        const ControlParams c{t.k_p, t.k_v, 0.0};
        const MarginReport emt = margin_report(loop_tf(kP, c, op, ModelKind::emt), ModelKind::emt);
        const MarginReport rms = margin_report(loop_tf(kP, c, op, ModelKind::rms), ModelKind::rms);
        const double w180 = std::sqrt(c.k_v * c.k_v + kP.l_c * kP.l_c) / kP.l_c;
        const double w180_err = emt.omega_180 ? std::abs(*emt.omega_180 - w180) / w180 : 1.0;
        const bool ok = std::abs(emt.gain_margin - g) <= 0.02 * g && emt.phase_margin_deg &&
                        *emt.phase_margin_deg >= 80.0 && w180_err <= 1e-6 && std::isinf(rms.gain_margin) &&
                        rms.phase_margin_deg && *rms.phase_margin_deg == 90.0;
        pass = pass && ok;
        detail += fmt("target %g: g_m=%.4f phi_m=%.3f deg omega_180 rel err=%.1e, RMS g_m=%s phi_m=%.15g; ", g,
                      emt.gain_margin, emt.phase_margin_deg.value_or(NAN), w180_err,
                      std::isinf(rms.gain_margin) ? "inf" : "finite", rms.phase_margin_deg.value_or(NAN));
    }
    report(4, "margin self-consistency", pass, detail);
}

void mismatch_ordering() {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    const auto grid = logspace(0.1, 10.0, 4000);
    const std::vector<double> dc{1e-6};
    double peak[2] = {0.0, 0.0};
    double low[2] = {0.0, 0.0};
    const ControlParams cases[2] = {{0.0584, 0.0658, 0.0}, {0.0565, 0.1667, 0.0}};
    for (int k = 0; k < 2; ++k) {
        for (auto [w, mag] : mismatch_profile(kP, cases[k], op, grid)) peak[k] = std::max(peak[k], mag);
        low[k] = mismatch_profile(kP, cases[k], op, dc)[0].second;
    }
    report(5, "mismatch ordering", peak[0] > peak[1] && low[0] < 1e-6 && low[1] < 1e-6,
           fmt("peak |e| case 1 = %.4f, case 2 = %.4f; |e(j1e-6)| = %.1e, %.1e", peak[0], peak[1], low[0], low[1]));
}

void time_domain() {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    SimConfig emt_cfg;  // 0.2 p.u. step at 0.1 s, 1 s horizon, dt = 1e-4 s
    SimConfig rms_cfg = emt_cfg;
    rms_cfg.model = ModelKind::rms;
    double slowest = 0.0;
    auto run = [&](const ControlParams& c, const SimConfig& s) {
        const auto t0 = Clock::now();
        TimeSeries ts = simulate(kP, c, op, s);
        slowest = std::max(slowest, seconds_since(t0));
        return ts;
    };
    const ControlParams case1{0.0584, 0.0658, 0.1}, case2{0.0565, 0.1667, 0.1}, case3{0.01, 0.0, 0.1};
    const TimeSeries e2 = run(case2, emt_cfg), r2 = run(case2, rms_cfg);
    const TimeSeries e1 = run(case1, emt_cfg), r1 = run(case1, rms_cfg);
    const double target = op.p_0 + 0.2;
    const double d2 = compare_runs(e2, r2, 0.1).max_abs_dp;
    const double d1 = compare_runs(e1, r1, 0.1).max_abs_dp;
    const bool a = !e2.divergence_time && !r2.divergence_time && std::abs(e2.p.back() - target) <= 1e-3 &&
                   std::abs(r2.p.back() - target) <= 1e-3 && d2 < d1;

    const auto t3 = Clock::now();
    const TimeSeries e3 = run(case3, emt_cfg);
    const bool growing = oscillation_growing(e3, 0.1);
    const auto f = dominant_frequency(e3, 0.1);
    const double analysis_time = seconds_since(t3);
    const TimeSeries r3 = run(case3, rms_cfg);
    const bool b = growing && f && std::abs(*f - 50.0) <= 2.5 && !oscillation_growing(r3, 0.1) &&
                   std::abs(r3.p.back() - target) <= 1e-3;
    const bool fast = std::max(slowest, analysis_time) < 10.0;
    report(6, "time-domain reproduction", a && b && fast,
           fmt("(a) case 2 final P emt=%.6f rms=%.6f, max|dP| case 2=%.4f < case 1=%.4f; (b) case 3 EMT %s, "
               "%s%.2f Hz, RMS final P=%.6f; slowest run %.2f s",
               e2.p.back(), r2.p.back(), d2, d1,
               e3.divergence_time ? "hit divergence envelope" : (growing ? "oscillation growing" : "not growing"),
               f ? "" : "no frequency ", f.value_or(NAN), r3.p.back(), std::max(slowest, analysis_time)));
}

void linearization_oracle() {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    double worst = 0.0;
    std::string detail;
    for (const ControlParams& c : {ControlParams{0.0584, 0.0658, 0.1}, ControlParams{0.0565, 0.1667, 0.1}})
        for (ModelKind kind : {ModelKind::emt, ModelKind::rms}) {
            SimConfig s;
            s.model = kind;
            s.step_size = 0.01;
            s.t_end = 0.6;
            const TimeSeries nl = simulate(kP, c, op, s);
            const TimeSeries lin = linearized_step_response(kP, c, op, kind, 0.01, s);
            const double err = relative_l2_error(nl, lin, op.p_0, 0.1, 0.6);
            worst = std::max(worst, err);
            detail += fmt("k_v=%g %s: %.2e; ", c.k_v, std::string(to_string(kind)).c_str(), err);
        }
    report(7, "linearization oracle", worst < 0.02, detail + fmt("worst relative L2 error %.2e", worst));
}

void property_suites() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::string detail;

    // Root/eval round trip on polynomials built from separated roots.
    double root_err = 0.0;
    for (int k = 0; k < 300; ++k) {
        std::vector<cplx> rts;
        const std::size_t degree = 1 + static_cast<std::size_t>(k % 6);
        while (rts.size() < degree) {
            const cplx z{2.0 * u(rng), 0.0};
            if (std::all_of(rts.begin(), rts.end(), [&](cplx w) { return std::abs(w - z) > 0.2; })) rts.push_back(z);
        }
        const Polynomial p = Polynomial::from_roots(rts);
        for (cplx z : roots(p)) {
            double best = std::numeric_limits<double>::infinity();
            for (cplx w : rts) best = std::min(best, std::abs(w - z));
            root_err = std::max(root_err, best);
        }
    }
    const bool roots_ok = root_err <= 1e-7;
    detail += fmt("roots %.1e; ", root_err);

    // Routh vs roots on 1000 random cubics.
    int disagreements = 0;
    for (int k = 0; k < 1000; ++k) {
        const double a0 = 1.0 + std::abs(u(rng)), a1 = 2 * u(rng), a2 = 2 * u(rng), a3 = 2 * u(rng);
        const double m = max_real(roots(Polynomial{a3, a2, a1, a0}));
        if (std::abs(m) < 1e-9) continue;
        if (routh_cubic(a0, a1, a2, a3).stable() != (m < 0.0)) ++disagreements;
    }
    detail += fmt("routh disagreements %d; ", disagreements);

    // Step halving and steady-state hold.
    const OperatingPoint op = solve_operating_point(kP, 0.3, 1.0);
    double halving = 0.0, hold = 0.0;
    for (ModelKind kind : {ModelKind::emt, ModelKind::rms}) {
        SimConfig s;
        s.model = kind;
        s.t_end = 0.5;
        SimConfig h = s;
        h.dt /= 2.0;
        h.record_decimation = 2;
        const ControlParams c{0.0565, 0.1667, 0.1};
        const TimeSeries a = simulate(kP, c, op, s), b = simulate(kP, c, op, h);
        for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) halving = std::max(halving, std::abs(a.p[k] - b.p[k]));
        if (a.size() != b.size()) halving = INFINITY;
        SimConfig z = s;
        z.step_size = 0.0;
        for (double v : simulate(kP, c, op, z).p) hold = std::max(hold, std::abs(v - op.p_0));
    }
    detail += fmt("halving %.1e; hold %.1e; ", halving, hold);

    // Config and CSV round trips.
    bool config_ok = true;
    for (int k = 0; k < 100; ++k) {
        CaseConfig cfg;
        cfg.converter.l_c = 0.1 + 0.2 * std::abs(u(rng));
        cfg.control = {std::abs(u(rng)), std::abs(u(rng)), std::abs(u(rng))};
        cfg.operating.p_ref = u(rng);
        cfg.sim.step_size = u(rng);
        std::istringstream in(serialize(cfg));
        config_ok = config_ok && parse_config(in) == cfg;
    }
    TimeSeries ts;
    for (int k = 0; k < 500; ++k) ts.push(k * 1e-4, u(rng), 1.0 + 1e-3 * u(rng), cplx{u(rng), u(rng)}, u(rng), u(rng));
    std::istringstream csv(to_csv(timeseries_table(ts)));
    const TimeSeries back = timeseries_from_table(parse_csv(csv));
    bool csv_ok = back.size() == ts.size();
    for (std::size_t k = 0; csv_ok && k < ts.size(); ++k)
        csv_ok = std::memcmp(&back.p[k], &ts.p[k], sizeof(double)) == 0 &&
                 std::memcmp(&back.i_q[k], &ts.i_q[k], sizeof(double)) == 0 &&
                 std::memcmp(&back.t[k], &ts.t[k], sizeof(double)) == 0;
    detail += fmt("config round trip %s; csv round trip %s; ", config_ok ? "ok" : "broken", csv_ok ? "ok" : "broken");

    const double elapsed = seconds_since(t0);
    report(8, "property suites",
           roots_ok && disagreements == 0 && halving <= 1e-5 && hold <= 1e-6 && config_ok && csv_ok && elapsed < 60.0,
           detail + fmt("%.2f s", elapsed));
}

}  // namespace

int main() {
    const std::pair<const char*, void (*)()> criteria[] = {
        {"tuning reproduction", tuning_reproduction},
        {"instability without virtual impedance", instability_without_virtual_impedance},
        {"stability boundary consistency", stability_boundary},
        {"margin self-consistency", margin_self_consistency},
        {"mismatch ordering", mismatch_ordering},
        {"time-domain reproduction", time_domain},
        {"linearization oracle", linearization_oracle},
        {"property suites", property_suites},
    };
    int id = 0;
    for (const auto& [title, check] : criteria) {
        ++id;
        try {
            check();
        } catch (const std::exception& e) {
            report(id, title, false, std::string("threw: ") + e.what());
        }
    }
    std::printf("%d of %d criteria passed\n", id - failures, id);
    return failures == 0 ? 0 : 1;
}
