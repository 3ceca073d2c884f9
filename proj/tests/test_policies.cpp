#include <cmath>

#include <gtest/gtest.h>

#include "bufrelay/errors.hpp"
#include "bufrelay/policies.hpp"
#include "bufrelay/roots.hpp"

using namespace bufrelay;
using policy::DecisionFunction;
using policy::Protocol;
using policy::Selection;

TEST(DecisionFunction, InverseRoundTrip)
{
    for (const auto f : {DecisionFunction::identity(), DecisionFunction::log_capacity()}) {
        for (const double x : {0.0, 1e-8, 0.5, 3.0, 1e4}) {
            EXPECT_NEAR(f.inverse(f(x)), x, 1e-12 * std::max(1.0, x));
        }
    }
    EXPECT_EQ(DecisionFunction::from_name("identity"), DecisionFunction::identity());
    EXPECT_THROW(DecisionFunction::from_name("linear"), ConfigError);
}

TEST(FixedPowerRule, Examples)
{
    EXPECT_EQ(policy::select_fixed_power(1.0, 2.0, 1.0, DecisionFunction::log_capacity()), Selection::relay);
    // F(r) = 1 = rho F(s): ties go to the relay.
    EXPECT_EQ(policy::select_fixed_power(2.0, 1.0, 0.5, DecisionFunction::identity()), Selection::relay);
    for (const auto f : {DecisionFunction::identity(), DecisionFunction::log_capacity()}) {
        EXPECT_EQ(policy::select_fixed_power(2.0, 1.0, 1.0, f), Selection::source);
    }
}

TEST(FixedPowerRule, LimitsAreConsistentWithRule)
{
    const auto f = DecisionFunction::log_capacity();
    for (const double rho : {0.3, 1.0, 2.7}) {
        for (const double s : {0.1, 1.0, 8.0}) {
            const double h = f.relay_limit(s, rho);
            EXPECT_EQ(policy::select_fixed_power(s, h * (1.0 + 1e-9), rho, f), Selection::relay);
            EXPECT_EQ(policy::select_fixed_power(s, h * (1.0 - 1e-9), rho, f), Selection::source);
            const double g = f.source_limit(h, rho);
            EXPECT_NEAR(g, s, 1e-10 * s);
        }
    }
}

TEST(PowerAllocation, HandComputedPoint)
{
    const auto a = policy::allocate_power(1.0, 1.0, 0.5, 1.0);
    EXPECT_DOUBLE_EQ(a.source, 1.0);
    EXPECT_DOUBLE_EQ(a.relay, 1.0);
}

TEST(PowerAllocation, CutoffAndAsymptote)
{
    const double lambda = 0.4;
    const double rho = 2.0;
    EXPECT_EQ(policy::allocate_power(lambda / rho, 1.0, lambda, rho).source, 0.0);
    EXPECT_NEAR(policy::allocate_power(1.0, 1e12, lambda, rho).relay, 1.0 / lambda, 1e-10);
    EXPECT_EQ(policy::allocate_power(1.0, lambda, lambda, rho).relay, 0.0);
}

TEST(PowerSelection, CutoffClauses)
{
    const double lambda = 1.0;
    const double rho = 2.0;
    // h_R > lambda, h_S <= lambda/rho: relay.
    EXPECT_EQ(policy::select_with_power(0.5, 1.5, lambda, rho), Selection::relay);
    // h_R <= lambda: source, whatever h_S is.
    for (const double hs : {0.1, 1.0, 100.0}) {
        EXPECT_EQ(policy::select_with_power(hs, 1.0, lambda, rho), Selection::source);
    }
}

TEST(PowerSelection, FlipsAcrossCrossingThreshold)
{
    for (const double lambda : {0.1, 0.7, 3.0}) {
        for (const double rho : {0.5, 1.0, 4.0}) {
            for (const double hr_factor : {1.2, 3.0, 20.0}) {
                const double h_r = lambda * hr_factor;
                const double l1 = policy::source_crossing(h_r, lambda, rho);
                EXPECT_EQ(policy::select_with_power(l1 * (1.0 - 1e-6), h_r, lambda, rho), Selection::relay);
                EXPECT_EQ(policy::select_with_power(l1 * (1.0 + 1e-6), h_r, lambda, rho), Selection::source);
            }
        }
    }
}

namespace {

// Bisection oracle for the metric equality, independent of the Lambert-W route.
double l1_bisection(double h_r, double lambda, double rho)
{
    const double target = policy::relay_metric(h_r, lambda);
    const double lo = lambda / rho;
    double hi = 2.0 * lo;
    while (policy::source_metric(hi, lambda, rho) < target) {
        hi *= 2.0;
    }
    return roots::bisect([&](double h) { return policy::source_metric(h, lambda, rho) - target; }, lo, hi).x;
}

double l2_bisection(double h_s, double lambda, double rho)
{
    const double target = policy::source_metric(h_s, lambda, rho);
    const double lo = lambda;
    double hi = 2.0 * lo;
    while (policy::relay_metric(hi, lambda) < target) {
        hi *= 2.0;
    }
    return roots::bisect([&](double h) { return policy::relay_metric(h, lambda) - target; }, lo, hi).x;
}

} // namespace

TEST(CrossingThresholds, MatchBisectionOracle)
{
    EXPECT_LT(std::abs(policy::source_crossing(2.0, 0.5, 1.0) / l1_bisection(2.0, 0.5, 1.0) - 1.0), 1e-9);
    for (const double lambda : {0.01, 0.3, 1.0, 5.0}) {
        for (const double rho : {0.1, 0.8, 3.0, 25.0}) {
            for (const double factor : {1.001, 1.1, 2.0, 10.0, 1e3}) {
                const double l1 = policy::source_crossing(lambda * factor, lambda, rho);
                const double b1 = l1_bisection(lambda * factor, lambda, rho);
                EXPECT_LT(std::abs(l1 / b1 - 1.0), 1e-9) << lambda << ' ' << rho << ' ' << factor;
                const double hs = lambda / rho * factor;
                const double l2 = policy::relay_crossing(hs, lambda, rho);
                const double b2 = l2_bisection(hs, lambda, rho);
                EXPECT_LT(std::abs(l2 / b2 - 1.0), 1e-9) << lambda << ' ' << rho << ' ' << factor;
            }
        }
    }
}

TEST(CrossingThresholds, BoundaryValues)
{
    const double lambda = 0.6;
    const double rho = 1.7;
    EXPECT_NEAR(policy::source_crossing(lambda, lambda, rho), lambda / rho, 1e-12);
    EXPECT_NEAR(policy::relay_crossing(lambda / rho, lambda, rho), lambda, 1e-12);
    const auto both = policy::l_thresholds(lambda, lambda / rho, lambda, rho);
    EXPECT_NEAR(both.source, lambda / rho, 1e-12);
    EXPECT_NEAR(both.relay, lambda, 1e-12);
}

TEST(CrossingThresholds, ExtremeMetricsStayFinite)
{
    // Large delta takes the exponential form of the principal branch.
    const double l1 = policy::source_crossing(1e200, 1e-3, 1.0);
    EXPECT_TRUE(std::isfinite(l1));
    EXPECT_GT(l1, 1e-3);
    EXPECT_NO_THROW(policy::validate_threshold_branches());
    EXPECT_THROW(policy::source_crossing(0.1, 0.5, 1.0), DomainError);
    EXPECT_THROW(policy::relay_crossing(0.1, 0.5, 1.0), DomainError);
}

TEST(QueueLimited, ForcesRelayWhenSourceBitsDoNotFit)
{
    const auto f = DecisionFunction::identity();
    EXPECT_EQ(policy::select_queue_limited(3.0, 0.0, 1.0, f, 9.0, 10.0), Selection::relay);
    EXPECT_EQ(policy::select_queue_limited(0.9, 0.0, 1.0, f, 9.0, 10.0), Selection::source);
    EXPECT_EQ(policy::select_queue_limited(0.9, 2.0, 1.0, f, 9.0, 10.0), Selection::relay);
    for (const double s : {0.1, 2.0, 50.0}) {
        for (const double r : {0.1, 2.0, 50.0}) {
            EXPECT_EQ(policy::select_queue_limited(s, r, 1.3, f, 0.0, INFINITY),
                      policy::select_fixed_power(s, r, 1.3, f));
        }
    }
}

TEST(ConventionalSchedule, Examples)
{
    EXPECT_EQ(policy::conventional_schedule(Protocol::conv_no_buffer, 1, 2), Selection::source);
    EXPECT_EQ(policy::conventional_schedule(Protocol::conv_no_buffer, 2, 2), Selection::relay);
    EXPECT_EQ(policy::conventional_schedule(Protocol::conv_buffer, 50, 100), Selection::source);
    EXPECT_EQ(policy::conventional_schedule(Protocol::conv_buffer, 51, 100), Selection::relay);
    EXPECT_THROW(policy::conventional_schedule(Protocol::conv_buffer, 1, 7), ConfigError);
    EXPECT_THROW(policy::conventional_schedule(Protocol::adaptive_fixed, 1, 2), ConfigError);
}

TEST(PolicySpec, Validation)
{
    policy::PolicySpec p;
    EXPECT_NO_THROW(p.validate());
    p.rho = 0.0;
    EXPECT_THROW(p.validate(), ConfigError);
    p = {};
    p.protocol = Protocol::adaptive_pa;
    EXPECT_THROW(p.validate(), ConfigError);
    p = {};
    p.conv_frame = 3;
    EXPECT_THROW(p.validate(), ConfigError);
    EXPECT_EQ(policy::protocol_from_name("starved"), Protocol::starved);
    EXPECT_THROW(policy::protocol_from_name("fast"), ConfigError);
}
