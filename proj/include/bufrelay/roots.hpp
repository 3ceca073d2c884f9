#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "bufrelay/errors.hpp"

namespace bufrelay::roots {

struct RootResult {
    double x = 0.0;
    double fx = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct RootTolerance {
    double x_rel = 1e-14;
    double x_abs = 1e-300;
    double f_abs = 0.0; // stop early once |f| <= f_abs
    int max_iter = 200;
};

/// Brent's method on a sign-changing bracket [a, b] with known end values.
template <class F>
RootResult brent(F&& f, double a, double b, double fa, double fb, const RootTolerance& tol = {})
{
    if (fa == 0.0) {
        return {a, fa, 0, true};
    }
    if (fb == 0.0) {
        return {b, fb, 0, true};
    }
    if ((fa > 0.0) == (fb > 0.0)) {
        throw ConvergenceError("brent: bracket does not change sign");
    }
    double c = a;
    double fc = fa;
    double d = b - a;
    double e = d;
    RootResult out;
    for (int it = 1; it <= tol.max_iter; ++it) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b)
                            + 0.5 * std::max(tol.x_abs, tol.x_rel * std::abs(b));
        const double xm = 0.5 * (c - b);
        out.iterations = it;
        if (std::abs(xm) <= tol1 || fb == 0.0 || std::abs(fb) <= tol.f_abs) {
            out.x = b;
            out.fx = fb;
            out.converged = true;
            return out;
        }
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            const double s = fb / fa;
            double p;
            double q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qa = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) {
                q = -q;
            }
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += std::abs(d) > tol1 ? d : (xm > 0.0 ? tol1 : -tol1);
        fb = f(b);
    }
    out.x = b;
    out.fx = fb;
    out.converged = false;
    return out;
}

template <class F>
RootResult brent(F&& f, double a, double b, const RootTolerance& tol = {})
{
    const double fa = f(a);
    const double fb = f(b);
    return brent(f, a, b, fa, fb, tol);
}

/// Plain bisection; slower than Brent but shares no code path with it, which
/// makes it the reference in cross-checks.
template <class F>
RootResult bisect(F&& f, double a, double b, int iterations = 200)
{
    double fa = f(a);
    const double fb = f(b);
    if ((fa > 0.0) == (fb > 0.0) && fa != 0.0 && fb != 0.0) {
        throw ConvergenceError("bisect: bracket does not change sign");
    }
    RootResult out;
    for (int it = 0; it < iterations; ++it) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) {
            break;
        }
        const double fm = f(m);
        out.iterations = it + 1;
        if (fm == 0.0) {
            return {m, 0.0, it + 1, true};
        }
        if ((fm > 0.0) == (fa > 0.0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    out.x = 0.5 * (a + b);
    out.fx = f(out.x);
    out.converged = true;
    return out;
}

struct Bracket {
    double lo;
    double hi;
    double f_lo;
    double f_hi;
};

/// Widens [lo, hi] geometrically (lo /= factor, hi *= factor) until f changes
/// sign or the limits are reached. Returns nullopt if no sign change is found.
template <class F>
std::optional<Bracket> expand_bracket(F&& f, double lo, double hi, double factor, double min_lo,
                                      double max_hi)
{
    double f_lo = f(lo);
    double f_hi = f(hi);
    while ((f_lo > 0.0) == (f_hi > 0.0) && f_lo != 0.0 && f_hi != 0.0) {
        const bool can_lower = lo > min_lo;
        const bool can_raise = hi < max_hi;
        if (!can_lower && !can_raise) {
            return std::nullopt;
        }
        // Move the end whose value is closer to zero: that is the side the root lies on.
        const bool lower_side = can_lower && (!can_raise || std::abs(f_lo) < std::abs(f_hi));
        if (lower_side) {
            hi = lo;
            f_hi = f_lo;
            lo = std::max(min_lo, lo / factor);
            f_lo = f(lo);
        } else {
            lo = hi;
            f_lo = f_hi;
            hi = std::min(max_hi, hi * factor);
            f_hi = f(hi);
        }
    }
    return Bracket{lo, hi, f_lo, f_hi};
}

} // namespace bufrelay::roots
