#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "bufrelay/errors.hpp"

namespace bufrelay::special {

/// Tolerances and budget for the adaptive Gauss-Kronrod integrator.
struct QuadratureSpec {
    double abs_tol = 1e-9;
    double rel_tol = 1e-8;
    int max_subdivisions = 2000;
    /// e-folding length used to map [lower, inf) onto (0, 1]. Set it to the
    /// decay length of the integrand's exponential tail (the link mean for
    /// Rayleigh densities).
    double tail_scale = 1.0;

    void validate() const
    {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) {
            throw ConfigError("QuadratureSpec: tolerances must be > 0");
        }
        if (max_subdivisions < 1) {
            throw ConfigError("QuadratureSpec: max_subdivisions must be >= 1");
        }
        if (!(tail_scale > 0.0) || !std::isfinite(tail_scale)) {
            throw ConfigError("QuadratureSpec: tail_scale must be positive and finite");
        }
    }

    [[nodiscard]] QuadratureSpec with_scale(double scale) const
    {
        QuadratureSpec out = *this;
        out.tail_scale = scale;
        return out;
    }

    /// Spec for an inner integral of a nested pair: tolerances `factor` times tighter.
    [[nodiscard]] QuadratureSpec tightened(double factor = 10.0) const
    {
        QuadratureSpec out = *this;
        out.abs_tol /= factor;
        out.rel_tol /= factor;
        return out;
    }
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int panels = 0;
};

namespace detail {

// 7-point Gauss / 15-point Kronrod abscissae and weights.
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a;
    double b;
    double value;
    double error;
    double abs_value;
};

struct PanelOrder {
    bool operator()(const Panel& lhs, const Panel& rhs) const
    {
        if (lhs.error != rhs.error) {
            return lhs.error < rhs.error;
        }
        return lhs.a > rhs.a;
    }
};

template <class F>
Panel gauss_kronrod_15(F& f, double a, double b)
{
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    double abs_sum = std::abs(kronrod);
    std::array<double, 7> f1{};
    std::array<double, 7> f2{};
    for (int j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        f1[j] = f(center - dx);
        f2[j] = f(center + dx);
        const double pair = f1[j] + f2[j];
        kronrod += kWgk[j] * pair;
        abs_sum += kWgk[j] * (std::abs(f1[j]) + std::abs(f2[j]));
        if (j % 2 == 1) {
            gauss += kWg[j / 2] * pair;
        }
    }
    const double mean = 0.5 * kronrod;
    double asc = kWgk[7] * std::abs(fc - mean);
    for (int j = 0; j < 7; ++j) {
        asc += kWgk[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));
    }
    const double result = kronrod * half;
    asc *= std::abs(half);
    abs_sum *= std::abs(half);
    double err = std::abs((kronrod - gauss) * half);
    if (asc != 0.0 && err != 0.0) {
        err = asc * std::min(1.0, std::pow(200.0 * err / asc, 1.5));
    }
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (abs_sum > std::numeric_limits<double>::min() / (50.0 * eps)) {
        err = std::max(err, 50.0 * eps * abs_sum);
    }
    if (!std::isfinite(result)) {
        throw ConvergenceError("quadrature: integrand returned a non-finite value on ["
                               + std::to_string(a) + ", " + std::to_string(b) + "]");
    }
    return Panel{a, b, result, err, abs_sum};
}

} // namespace detail

/// Globally adaptive 15-point Gauss-Kronrod quadrature of f over [a, b].
/// The panel with the largest error estimate is bisected until the summed
/// estimate meets max(abs_tol, rel_tol * |I|).
template <class F>
QuadratureResult integrate_interval_detailed(F&& f, double a, double b, const QuadratureSpec& spec)
{
    spec.validate();
    if (!(a <= b) || !std::isfinite(a) || !std::isfinite(b)) {
        throw DomainError("integrate_interval: requires finite a <= b");
    }
    if (a == b) {
        return {};
    }
    std::priority_queue<detail::Panel, std::vector<detail::Panel>, detail::PanelOrder> panels;
    panels.push(detail::gauss_kronrod_15(f, a, b));
    double total = panels.top().value;
    double total_err = panels.top().error;
    double total_abs = panels.top().abs_value;
    int count = 1;
    constexpr double roundoff = 100.0 * std::numeric_limits<double>::epsilon();
    const double min_width = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(a) + std::abs(b));
    while (total_err > std::max({spec.abs_tol, spec.rel_tol * std::abs(total), roundoff * total_abs})) {
        if (count >= spec.max_subdivisions) {
            throw ConvergenceError("quadrature: " + std::to_string(count)
                                   + " panels exhausted with error estimate "
                                   + std::to_string(total_err));
        }
        const detail::Panel worst = panels.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a <= min_width) {
            // Nothing left to resolve at double precision; accept.
            break;
        }
        panels.pop();
        const detail::Panel left = detail::gauss_kronrod_15(f, worst.a, mid);
        const detail::Panel right = detail::gauss_kronrod_15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        total_abs += left.abs_value + right.abs_value - worst.abs_value;
        panels.push(left);
        panels.push(right);
        ++count;
    }
    // Re-sum from the panels to drop the drift of the running updates.
    QuadratureResult out;
    out.panels = count;
    std::vector<detail::Panel> all;
    all.reserve(panels.size());
    while (!panels.empty()) {
        all.push_back(panels.top());
        panels.pop();
    }
    std::sort(all.begin(), all.end(), [](const detail::Panel& l, const detail::Panel& r) { return l.a < r.a; });
    for (const auto& p : all) {
        out.value += p.value;
        out.error += p.error;
    }
    return out;
}

template <class F>
double integrate_interval(F&& f, double a, double b, const QuadratureSpec& spec)
{
    return integrate_interval_detailed(std::forward<F>(f), a, b, spec).value;
}

/// int_lower^inf f(x) dx via x = lower - tail_scale * ln(u), u in (0, 1].
template <class F>
QuadratureResult integrate_semi_infinite_detailed(F&& f, double lower, const QuadratureSpec& spec)
{
    spec.validate();
    if (!std::isfinite(lower)) {
        if (lower > 0.0) {
            return {};
        }
        throw DomainError("integrate_semi_infinite: lower limit must be finite");
    }
    const double scale = spec.tail_scale;
    auto mapped = [&f, lower, scale](double u) {
        const double x = lower - scale * std::log(u);
        if (std::isinf(x)) {
            return 0.0;
        }
        const double fx = f(x);
        if (fx == 0.0) {
            return 0.0;
        }
        return fx * scale / u;
    };
    return integrate_interval_detailed(mapped, 0.0, 1.0, spec);
}

template <class F>
double integrate_semi_infinite(F&& f, double lower, const QuadratureSpec& spec)
{
    return integrate_semi_infinite_detailed(std::forward<F>(f), lower, spec).value;
}

} // namespace bufrelay::special
