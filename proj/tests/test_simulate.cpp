#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "gfpc/simulate.hpp"

using namespace gfpc;

namespace {

const ConverterParams kP;
const ControlParams kCase1{0.0584, 0.0658, 0.1};
const ControlParams kCase2{0.0565, 0.1667, 0.1};
const ControlParams kCase3{0.01, 0.0, 0.1};

SimConfig config(ModelKind kind, double step = 0.2) {
    SimConfig s;
    s.model = kind;
    s.step_size = step;
    return s;
}

double max_deviation(const TimeSeries& ts, double from, double value) {
    double m = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k)
        if (ts.t[k] >= from) m = std::max(m, std::abs(ts.p[k] - value));
    return m;
}

TimeSeries synthetic(double dt, double t_end, auto&& f) {
    TimeSeries ts;
    for (std::size_t n = 0; static_cast<double>(n) * dt <= t_end + 1e-12; ++n) {
        const double t = static_cast<double>(n) * dt;
        ts.push(t, f(t), 1.0, cplx{}, 1.0, 0.0);
    }
    return ts;
}

}  // namespace

TEST(SimConfig, StepLimitsPerModel) {
    SimConfig s = config(ModelKind::emt);
    s.dt = 2e-4;
    EXPECT_THROW(validate(s), Error);
    s.model = ModelKind::rms;
    EXPECT_NO_THROW(validate(s));
    s.step_time = 2.0;
    EXPECT_THROW(validate(s), Error);
}

TEST(SimulateProperty, SteadyStateHoldsWithoutStep) {
    for (double pref : {0.0, 0.5, -0.8})
        for (ControlParams c : {kCase1, kCase2})
            for (ModelKind kind : {ModelKind::emt, ModelKind::rms}) {
                const OperatingPoint op = solve_operating_point(kP, pref, 1.0);
                const TimeSeries ts = simulate(kP, c, op, config(kind, 0.0));
                EXPECT_LT(max_deviation(ts, 0.0, op.p_0), 1e-6) << "P=" << pref;
                EXPECT_NEAR(ts.omega_i.back(), kP.omega_1, 1e-6);
            }
}

TEST(SimulateProperty, HalvingTheStepChangesPowerByLessThanTenMicroPerUnit) {
    const OperatingPoint op = solve_operating_point(kP, 0.3, 1.0);
    for (ControlParams c : {kCase1, kCase2})
        for (ModelKind kind : {ModelKind::emt, ModelKind::rms}) {
            SimConfig coarse = config(kind);
            coarse.t_end = 0.5;
            SimConfig fine = coarse;
            fine.dt = coarse.dt / 2.0;
            fine.record_decimation = 2;
            const TimeSeries a = simulate(kP, c, op, coarse);
            const TimeSeries b = simulate(kP, c, op, fine);
            ASSERT_EQ(a.size(), b.size());
            for (std::size_t k = 0; k < a.size(); ++k) {
                ASSERT_DOUBLE_EQ(a.t[k], b.t[k]);
                EXPECT_LT(std::abs(a.p[k] - b.p[k]), 1e-5);
            }
        }
}

TEST(Simulate, HighMarginCaseSettlesInBothModels) {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    for (ModelKind kind : {ModelKind::emt, ModelKind::rms}) {
        const TimeSeries ts = simulate(kP, kCase2, op, config(kind));
        EXPECT_FALSE(ts.divergence_time.has_value());
        EXPECT_NEAR(ts.p.back(), op.p_0 + 0.2, 1e-3);
        EXPECT_TRUE(settling_time(ts, 0.1).has_value());
    }
}

TEST(Simulate, LowMarginCaseMismatchesMore) {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    auto mismatch = [&](ControlParams c) {
        return compare_runs(simulate(kP, c, op, config(ModelKind::emt)), simulate(kP, c, op, config(ModelKind::rms)), 0.1)
            .max_abs_dp;
    };
    EXPECT_GT(mismatch(kCase1), mismatch(kCase2));
}

TEST(Simulate, UndampedEmtOscillatesAtFiftyHertzWhileRmsSettles) {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    const TimeSeries emt = simulate(kP, kCase3, op, config(ModelKind::emt));
    EXPECT_TRUE(oscillation_growing(emt, 0.1));
    const auto f = dominant_frequency(emt, 0.1);
    ASSERT_TRUE(f.has_value());
    EXPECT_NEAR(*f, 50.0, 2.5);
    EXPECT_FALSE(settling_time(emt, 0.1).has_value());

    const TimeSeries rms = simulate(kP, kCase3, op, config(ModelKind::rms));
    EXPECT_FALSE(oscillation_growing(rms, 0.1));
    EXPECT_NEAR(rms.p.back(), op.p_0 + 0.2, 1e-3);
}

TEST(Simulate, RunawayIsTruncatedAtTheDivergenceEnvelope) {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    SimConfig s = config(ModelKind::emt);
    s.t_end = 5.0;
    const TimeSeries ts = simulate(kP, {1.0, 0.0, 0.0}, op, s);
    ASSERT_TRUE(ts.divergence_time.has_value());
    EXPECT_LT(ts.t.back(), *ts.divergence_time + 1e-12);
    EXPECT_LT(*ts.divergence_time, 5.0);
}

// Verdict of the linear model against the long-run behavior of the nonlinear one.
TEST(SimulateProperty, StabilityVerdictPredictsTimeDomainBehavior) {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    for (double kv : {0.03, 0.05, 0.1}) {
        const double bound = kp_stability_bound(kP, {0.0, kv, 0.0});
        for (double factor : {0.5, 2.0}) {
            const ControlParams c{factor * bound, kv, 0.0};
            const bool stable = closed_loop_verdict(kP, c, op, ModelKind::emt).stable();
            EXPECT_EQ(stable, factor < 1.0);
            SimConfig s = config(ModelKind::emt, 0.01);
            s.t_end = 2.0;
            const TimeSeries ts = simulate(kP, c, op, s);
            // Unstable runs saturate into a nonlinear oscillation rather than growing forever.
            const bool settled = !ts.divergence_time && max_deviation(ts, 1.8, op.p_0 + 0.01) < 1e-4;
            EXPECT_EQ(settled, stable) << "kv=" << kv << " factor=" << factor;
        }
    }
}

TEST(Linearized, SmallStepMatchesTransferFunction) {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    for (ControlParams c : {kCase1, kCase2})
        for (ModelKind kind : {ModelKind::emt, ModelKind::rms}) {
            SimConfig s = config(kind, 0.01);
            s.t_end = 0.6;
            const TimeSeries nonlinear = simulate(kP, c, op, s);
            const TimeSeries linear = linearized_step_response(kP, c, op, kind, 0.01, s);
            EXPECT_LT(relative_l2_error(nonlinear, linear, op.p_0, 0.1, 0.6), 0.02);
        }
}

TEST(Linearized, UnstableLoopIsRefused) {
    const OperatingPoint op = solve_operating_point(kP, 0.0, 1.0);
    try {
        (void)linearized_step_response(kP, kCase3, op, ModelKind::emt, 0.01, config(ModelKind::emt));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::unstable_loop);
    }
}

TEST(Metrics, DominantFrequencyOfSyntheticSinusoid) {
    const TimeSeries ts = synthetic(1e-4, 1.0, [](double t) { return 0.3 + 0.01 * std::sin(2 * std::numbers::pi * 37.0 * t); });
    const auto f = dominant_frequency(ts);
    ASSERT_TRUE(f.has_value());
    EXPECT_NEAR(*f, 37.0, 0.1);
    EXPECT_FALSE(dominant_frequency(synthetic(1e-3, 1.0, [](double) { return 1.0; })).has_value());
}

TEST(Metrics, SettlingTimeOfFirstOrderResponse) {
    const double tau = 0.05;
    const TimeSeries ts =
        synthetic(1e-4, 1.0, [&](double t) { return t < 0.1 ? 0.0 : 1.0 - std::exp(-(t - 0.1) / tau); });
    const auto st = settling_time(ts, 0.1);
    ASSERT_TRUE(st.has_value());
    EXPECT_NEAR(*st, tau * std::log(50.0), 2e-3);
}

TEST(Metrics, CompareRunsOfIdenticalSeriesIsZero) {
    const TimeSeries ts = synthetic(1e-3, 1.0, [](double t) { return std::sin(t); });
    const MismatchMetrics m = compare_runs(ts, ts, 0.1);
    EXPECT_EQ(m.max_abs_dp, 0.0);
    EXPECT_EQ(m.rms_dp, 0.0);
    EXPECT_THROW((void)compare_runs(ts, ts, 2.0), Error);
}
