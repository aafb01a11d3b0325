#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace autoens;

namespace {

ScheduleConfig default_schedule() { return ScheduleConfig{}; }

/// Steps the schedule with converged at `converge_at` values of n and
/// cycle_end at `end_at`, returning the emitted LRs and states.
std::vector<AeStep> drive(const ScheduleConfig& c, std::int64_t steps, const std::vector<std::int64_t>& converge_at,
                          const std::vector<std::int64_t>& end_at) {
    std::vector<AeStep> out;
    ScheduleState s = initial_state(c);
    AeEvents ev;
    for (std::int64_t i = 0; i < steps; ++i) {
        const auto st = ae_step(s, c, ev);
        s = st.state;
        out.push_back(st);
        ev = {std::find(converge_at.begin(), converge_at.end(), i) != converge_at.end(),
              std::find(end_at.begin(), end_at.end(), i) != end_at.end()};
    }
    return out;
}

}  // namespace

TEST(Schedule, Rates) {
    const auto c = default_schedule();
    EXPECT_DOUBLE_EQ(c.beta(), 0.49 / 25.0);
    EXPECT_DOUBLE_EQ(c.beta1(), 0.49 / 125.0);
    EXPECT_DOUBLE_EQ(c.beta2(), 0.49 / 625.0);
    EXPECT_TRUE(c.validate().empty());
}

TEST(Schedule, DeclineExamples) {
    const auto c = default_schedule();
    EXPECT_EQ(decline_lr(c, 0), 0.5);
    EXPECT_EQ(decline_lr(c, 10), 0.5 - c.beta() * 10.0);
    EXPECT_NEAR(decline_lr(c, 10), 0.304, 1e-12);
    EXPECT_EQ(decline_lr(c, 25), 0.01);
    EXPECT_EQ(decline_lr(c, 400), 0.01);
}

TEST(Schedule, DeclineIsMonotoneAndContinuousAtN) {
    const auto c = default_schedule();
    for (std::int64_t k = 1; k < 100; ++k) EXPECT_LE(decline_lr(c, k), decline_lr(c, k - 1));
    EXPECT_NEAR(decline_lr(c, c.N - 1), c.alpha2 + c.beta(), 1e-12);
}

TEST(Schedule, RiseExamplesAndContinuityAtM) {
    const auto c = default_schedule();
    EXPECT_EQ(rise_lr(c, 0), 0.01);
    EXPECT_EQ(rise_lr(c, 3), c.beta1() * 3.0 + 0.01);
    const double lr_now = c.beta1() * 5.0 + 0.01;
    EXPECT_NEAR(lr_now, 0.0296, 1e-12);
    EXPECT_EQ(rise_lr(c, 5), lr_now);
    EXPECT_EQ(rise_lr(c, 7), c.beta2() * 2.0 + lr_now);
    for (std::int64_t k = 1; k < 200; ++k) EXPECT_GT(rise_lr(c, k), rise_lr(c, k - 1));
    // slope changes from beta1 to beta2 at m
    EXPECT_NEAR(rise_lr(c, 5) - rise_lr(c, 4), c.beta1(), 1e-15);
    EXPECT_NEAR(rise_lr(c, 6) - rise_lr(c, 5), c.beta2(), 1e-15);
}

TEST(Schedule, ValidateRejectsBadBounds) {
    auto c = default_schedule();
    c.alpha2 = 0.6;
    EXPECT_THROW(c.validate(), Error);
    c = default_schedule();
    c.alpha2 = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = default_schedule();
    c.N = 0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Schedule, ValidateWarnsWhenExploreIsSteeper) {
    auto c = default_schedule();
    c.a = 30.0;
    const auto w = c.validate();
    ASSERT_EQ(w.size(), 1u);
}

TEST(Schedule, StateMachineFollowsClosedForms) {
    const auto c = default_schedule();
    // converge at n=39 (floor), cycle end at n=60
    const auto steps = drive(c, 120, {39}, {60});
    for (std::int64_t n = 0; n < 40; ++n) EXPECT_EQ(steps[n].lr, decline_lr(c, n)) << n;
    EXPECT_EQ(steps[24].state.phase, Phase::Decline);
    EXPECT_EQ(steps[25].state.phase, Phase::Floor);
    EXPECT_EQ(steps[40].state.phase, Phase::RiseRapid);
    EXPECT_EQ(steps[40].state.M, 40);
    for (std::int64_t k = 0; k <= 20; ++k) EXPECT_EQ(steps[40 + k].lr, rise_lr(c, k)) << k;
    EXPECT_EQ(steps[45].state.phase, Phase::RiseExplore);
    EXPECT_EQ(steps[61].state.phase, Phase::Decline);
    const double anchor = steps[60].lr;
    EXPECT_EQ(steps[61].lr, anchor);
    EXPECT_EQ(steps[62].lr, anchor - c.beta());
}

TEST(Schedule, ReplayIsPeriodic) {
    const auto c = default_schedule();
    const auto a = drive(c, 200, {30, 130}, {60, 160});
    // two identical rises after identical collections
    for (std::int64_t k = 0; k < 20; ++k) EXPECT_EQ(a[31 + k].lr, a[131 + k].lr);
}

TEST(Schedule, CycleEndOutsideExploreIsStateError) {
    const auto c = default_schedule();
    ScheduleState s = initial_state(c);
    try {
        ae_step(s, c, {false, true});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::State);
    }
}

TEST(Schedule, PretrainHoldsThenDeclines) {
    auto c = default_schedule();
    c.pretrain_steps = 3;
    const auto steps = drive(c, 6, {}, {});
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(steps[i].state.phase, Phase::Pretrain);
        EXPECT_EQ(steps[i].lr, 0.1);
    }
    EXPECT_EQ(steps[3].lr, 0.5);
    EXPECT_EQ(steps[3].state.phase, Phase::Decline);
}

TEST(Schedule, RandomEventSequencesOnlyTakeAllowedTransitions) {
    const auto c = default_schedule();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        ScheduleState s = initial_state(c);
        AeEvents ev;
        for (int i = 0; i < 500; ++i) {
            const auto st = ae_step(s, c, ev);
            ASSERT_TRUE(is_allowed_transition(s.phase, st.state.phase))
                << to_string(s.phase) << " -> " << to_string(st.state.phase);
            ASSERT_GE(st.lr, c.alpha2);
            ASSERT_EQ(st.state.n, s.n + 1);
            if (st.state.phase == Phase::Decline || st.state.phase == Phase::Floor) {
                ASSERT_LE(st.lr, c.alpha1);
            }
            s = st.state;
            ev = {};
            const bool settling = s.phase == Phase::Decline || s.phase == Phase::Floor;
            if (settling && rng.uniform() < 0.1) ev.converged = true;
            if (s.phase == Phase::RiseExplore && rng.uniform() < 0.2) ev.cycle_end = true;
        }
    }
}

TEST(Schedule, PhaseNamesRoundTrip) {
    for (Phase p : {Phase::Pretrain, Phase::Decline, Phase::Floor, Phase::RiseRapid, Phase::RiseExplore}) {
        EXPECT_EQ(phase_from_string(to_string(p)), p);
    }
    EXPECT_FALSE(phase_from_string("nope").has_value());
}

TEST(Schedule, BaselineSchedules) {
    EXPECT_DOUBLE_EQ(cosine_cycle_lr(0.1, 40, 0), 0.1);
    EXPECT_NEAR(cosine_cycle_lr(0.1, 40, 20), 0.05, 1e-12);
    EXPECT_DOUBLE_EQ(cosine_cycle_lr(0.1, 40, 40), 0.1);
    EXPECT_TRUE(cosine_cycle_end(40, 39));
    EXPECT_FALSE(cosine_cycle_end(40, 40));
    EXPECT_DOUBLE_EQ(triangular_lr(0.005, 0.05, 4, 0), 0.05);
    EXPECT_DOUBLE_EQ(triangular_lr(0.005, 0.05, 4, 2), 0.005);
    EXPECT_TRUE(triangular_trough(4, 2));
    EXPECT_DOUBLE_EQ(step_decay_lr(0.1, {75, 112}, 0.1, 74), 0.1);
    EXPECT_DOUBLE_EQ(step_decay_lr(0.1, {75, 112}, 0.1, 75), 0.1 * 0.1);
    EXPECT_DOUBLE_EQ(step_decay_lr(0.1, {75, 112}, 0.1, 149), 0.1 * 0.1 * 0.1);
}

TEST(Schedule, SuggestBoundsOnSigmoidCurve) {
    AccuracyLrCurve curve;
    for (int i = 0; i < 100; ++i) {
        const double lr = std::pow(10.0, -4.0 + 4.0 * i / 99.0);
        const double acc = 0.5 + 0.45 / (1.0 + std::exp(-(std::log10(lr) + 2.5) * 4.0));
        curve.points.push_back({lr, acc});
    }
    const auto b = suggest_bounds(curve);
    EXPECT_LT(b.alpha2.lo, b.alpha2.hi);
    EXPECT_LT(b.alpha1.lo, b.alpha1.hi);
    EXPECT_LT(b.alpha2.hi, b.alpha1.lo);
    // steepest part of the sigmoid is around 10^-2.5
    EXPECT_LE(b.alpha2.lo, std::pow(10.0, -2.5));
    EXPECT_GE(b.alpha2.hi, std::pow(10.0, -2.5));
}

TEST(Schedule, SuggestBoundsConstantCurveHasNoSignal) {
    AccuracyLrCurve curve;
    for (int i = 0; i < 20; ++i) curve.points.push_back({0.01 * (i + 1), 0.5});
    try {
        suggest_bounds(curve);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoSignal);
    }
}

TEST(Schedule, RangeScanOnMoons) {
    const auto data = autoens::testing::moons_splits(1, 600);
    const auto curve = lr_range_scan(init_model({2, 16, 2}, 1), data.train, 1e-4, 1.0, 30);
    ASSERT_FALSE(curve.points.empty());
    EXPECT_DOUBLE_EQ(curve.points.front().lr, 1e-4);
    EXPECT_THROW(lr_range_scan(init_model({2, 16, 2}, 1), data.train, 1.0, 0.1, 30), Error);
}
