#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bufrelay/errors.hpp"

namespace bufrelay::special {

namespace detail {

inline constexpr double kEps = std::numeric_limits<double>::epsilon();

// E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!). Accurate for 0 < x <= ~2.
inline double e1_series(double x)
{
    double sum = 0.0;
    double term = 1.0; // (-x)^k / k!
    for (int k = 1; k < 200; ++k) {
        term *= -x / k;
        const double contrib = term / k;
        sum += contrib;
        if (std::abs(contrib) < kEps * 0.25 * std::abs(sum)) {
            break;
        }
    }
    return -std::numbers::egamma - std::log(x) - sum;
}

// e^x E1(x) by the even contraction of the continued fraction
//   1 / (x + 1 - 1^2 / (x + 3 - 2^2 / (x + 5 - ...)))
// evaluated with the modified Lentz algorithm. Converges for every x > 0 but
// needs many terms once x drops well below 1.
inline double scaled_e1_continued_fraction(double x, int max_terms = 20000)
{
    constexpr double tiny = 1e-300;
    double b = x + 1.0;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= max_terms; ++i) {
        const double an = -static_cast<double>(i) * i;
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = b + an / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        const double delta = c * d;
        h *= delta;
        if (std::abs(delta - 1.0) <= kEps) {
            return h;
        }
    }
    throw ConvergenceError("exponential integral continued fraction did not converge for x = "
                           + std::to_string(x));
}

// u - log(1 + u), accurate also for |u| << 1 where the direct difference cancels.
inline double log1p_deficit(double u)
{
    if (std::abs(u) < 1e-2) {
        // u^2/2 - u^3/3 + u^4/4 - ...
        double term = u * u;
        double sum = 0.0;
        for (int k = 2; k < 30; ++k) {
            const double contrib = term / k;
            sum += contrib;
            if (std::abs(contrib) < kEps * std::abs(sum)) {
                break;
            }
            term *= -u;
        }
        return sum;
    }
    return u - std::log1p(u);
}

} // namespace detail

/// Exponential integral E1(x) = int_x^inf e^{-t}/t dt for x > 0.
///
/// Series below x = 1, continued fraction above. Underflows gracefully to 0 for
/// x beyond ~745.
inline double exp_integral_e1(double x)
{
    if (!(x > 0.0)) {
        throw DomainError("exp_integral_e1: argument must be positive, got " + std::to_string(x));
    }
    if (x < 1.0) {
        return detail::e1_series(x);
    }
    if (x > 750.0) {
        return 0.0;
    }
    return std::exp(-x) * detail::scaled_e1_continued_fraction(x);
}

/// e^x E1(x). Stays finite for arguments where e^x or E1(x) alone would over- or
/// underflow; every Rayleigh closed form in this library is written in terms of it.
inline double scaled_exp_integral_e1(double x)
{
    if (!(x > 0.0)) {
        throw DomainError("scaled_exp_integral_e1: argument must be positive, got "
                          + std::to_string(x));
    }
    if (x < 1.0) {
        return std::exp(x) * detail::e1_series(x);
    }
    if (std::isinf(x)) {
        return 0.0;
    }
    return detail::scaled_e1_continued_fraction(x);
}

enum class Branch { principal, lower };

namespace detail {

// Solves w + ln(-w) = -1 - delta (i.e. w e^w = -exp(-1 - delta)) for delta >= 0.
// Near the branch point the unknown is v = w + 1 so that the equation
// delta = (-v) - log1p(-v) keeps full relative precision in v.
inline double lambert_w_negative(Branch branch, double delta)
{
    constexpr int max_iter = 50;
    if (delta <= 0.0) {
        return -1.0;
    }
    const bool near_branch = delta < 0.5;
    if (near_branch) {
        const double p = std::sqrt(-2.0 * std::expm1(-delta));
        const double sign = branch == Branch::principal ? 1.0 : -1.0;
        double v = sign * p - p * p / 3.0 + sign * 11.0 / 72.0 * p * p * p;
        if (branch == Branch::principal) {
            v = std::min(std::max(v, 1e-300), 1.0 - 1e-16);
        } else {
            v = std::min(v, -1e-300);
        }
        for (int it = 0; it < max_iter; ++it) {
            const double one_minus_v = 1.0 - v;
            const double h = delta - log1p_deficit(-v);
            const double dh = -v / one_minus_v;
            const double d2h = -1.0 / (one_minus_v * one_minus_v);
            double step = 2.0 * h * dh / (2.0 * dh * dh - h * d2h);
            double next = v - step;
            // Stay on the requested side of the branch point.
            if (branch == Branch::principal && (next <= 0.0 || next >= 1.0)) {
                next = next <= 0.0 ? 0.5 * v : 0.5 * (v + 1.0);
            } else if (branch == Branch::lower && next >= 0.0) {
                next = 0.5 * v;
            }
            step = v - next;
            v = next;
            if (std::abs(step) <= 2.0 * kEps * std::abs(v) || h == 0.0) {
                break;
            }
        }
        return v - 1.0;
    }

    // Far from the branch point: iterate on w with h(w) = w + ln(-w) - c.
    const double c = -1.0 - delta;
    double w;
    if (branch == Branch::principal) {
        const double x = -std::exp(c);
        if (x == 0.0) {
            return -0.0; // W0(x) ~ x for |x| below the double range
        }
        if (x > -1e-8) {
            // Series W0(x) = x - x^2 + 3/2 x^3 - ...: truncation error ~ x^4.
            return x - x * x + 1.5 * x * x * x;
        }
        w = x - x * x + 1.5 * x * x * x;
        w = std::max(std::min(w, -1e-300), -1.0 + 1e-12);
    } else {
        w = c - std::log(-c);
        w = std::min(w, -1.0 - 1e-12);
    }
    for (int it = 0; it < max_iter; ++it) {
        const double h = w + std::log(-w) - c;
        const double dh = 1.0 + 1.0 / w;
        const double d2h = -1.0 / (w * w);
        double next = w - 2.0 * h * dh / (2.0 * dh * dh - h * d2h);
        if (branch == Branch::principal && (next >= 0.0 || next <= -1.0)) {
            next = next >= 0.0 ? 0.5 * w : 0.5 * (w - 1.0);
        } else if (branch == Branch::lower && next >= -1.0) {
            next = 0.5 * (w - 1.0);
        }
        const double step = w - next;
        w = next;
        if (std::abs(step) <= 2.0 * kEps * std::abs(w) || h == 0.0) {
            break;
        }
    }
    return w;
}

// Principal branch for x > 0: iterate on w + ln w = ln x.
inline double lambert_w0_positive(double x)
{
    const double lx = std::log1p(x);
    double w = lx * (1.0 - std::log1p(lx) / (2.0 + lx));
    const double c = std::log(x);
    for (int it = 0; it < 50; ++it) {
        const double h = w + std::log(w) - c;
        const double dh = 1.0 + 1.0 / w;
        const double d2h = -1.0 / (w * w);
        double next = w - 2.0 * h * dh / (2.0 * dh * dh - h * d2h);
        if (next <= 0.0) {
            next = 0.5 * w;
        }
        const double step = w - next;
        w = next;
        if (std::abs(step) <= 2.0 * kEps * std::abs(w) || h == 0.0) {
            break;
        }
    }
    return w;
}

} // namespace detail

/// Real Lambert W: principal branch on [-1/e, inf) (result >= -1), lower branch
/// on [-1/e, 0) (result <= -1). Halley iteration capped at 50 steps.
inline double lambert_w(Branch branch, double x)
{
    constexpr double branch_point = -1.0 / std::numbers::e;
    // Allow the last bit of rounding in a caller's -1/e.
    if (std::isnan(x) || x < branch_point * (1.0 + 4.0 * detail::kEps)) {
        throw DomainError("lambert_w: argument below -1/e: " + std::to_string(x));
    }
    if (branch == Branch::lower && !(x < 0.0)) {
        throw DomainError("lambert_w: lower branch requires -1/e <= x < 0, got "
                          + std::to_string(x));
    }
    if (x == 0.0) {
        return 0.0;
    }
    if (x > 0.0) {
        if (std::isinf(x)) {
            return x;
        }
        return detail::lambert_w0_positive(x);
    }
    // x = -exp(-1 - delta) with delta = -ln(-e x) >= 0; -e x - 1 is exact near the
    // branch point, so log1p keeps delta accurate there.
    const double delta = std::max(0.0, -std::log1p(-std::numbers::e * x - 1.0));
    return detail::lambert_w_negative(branch, delta);
}

/// W(-exp(-1 - delta)) for delta >= 0, for callers that already hold the
/// logarithm of the argument. Avoids the underflow and branch-point
/// cancellation of forming the argument explicitly.
inline double lambert_w_of_neg_exp(Branch branch, double delta)
{
    if (std::isnan(delta) || delta < 0.0) {
        throw DomainError("lambert_w_of_neg_exp: delta must be >= 0");
    }
    return detail::lambert_w_negative(branch, delta);
}

} // namespace bufrelay::special
