#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bufrelay/channel.hpp"
#include "bufrelay/errors.hpp"
#include "bufrelay/policies.hpp"
#include "bufrelay/quadrature.hpp"
#include "bufrelay/special_functions.hpp"

namespace bufrelay::closed_form {

using channel::FadingModel;
using policy::DecisionFunction;
using policy::DecisionKind;
using special::QuadratureSpec;

namespace detail {

inline constexpr double kLn2 = std::numbers::ln2;

inline double g(double x) { return special::scaled_exp_integral_e1(x); }

inline void require_positive_mean(double omega, const char* what)
{
    if (!(omega > 0.0) || !std::isfinite(omega)) {
        throw DomainError(std::string(what) + ": link means must be positive and finite");
    }
}

inline void require_rho(double rho)
{
    if (!(rho > 0.0) || !std::isfinite(rho)) {
        throw DomainError("rho must be positive and finite");
    }
}

// e^{-x} * y, with the convention 0 * anything = 0 once e^{-x} underflows.
inline double damp(double x, double y)
{
    const double w = std::exp(-x);
    return w == 0.0 ? 0.0 : w * y;
}

} // namespace detail

/// Conventional relaying without buffer: source and relay alternate slots.
inline double tau_conv1_rayleigh(double omega_s, double omega_r)
{
    detail::require_positive_mean(omega_s, "tau_conv1_rayleigh");
    detail::require_positive_mean(omega_r, "tau_conv1_rayleigh");
    const double x = (omega_r + omega_s) / (omega_s * omega_r);
    return detail::g(x) / (2.0 * detail::kLn2);
}

/// Conventional relaying with buffer: N/2 receive slots then N/2 transmit slots, N -> inf.
inline double tau_conv2_rayleigh(double omega_s, double omega_r)
{
    detail::require_positive_mean(omega_s, "tau_conv2_rayleigh");
    detail::require_positive_mean(omega_r, "tau_conv2_rayleigh");
    return std::min(detail::g(1.0 / omega_s), detail::g(1.0 / omega_r)) / (2.0 * detail::kLn2);
}

/// Arrival and departure rates of the fixed-power policy for a given threshold:
/// arrival = E{(1-d)S}, departure = E{dR}, both in bits/slot.
struct LinkRates {
    double arrival = 0.0;
    double departure = 0.0;
};

/// How link_rates evaluates the two expectations.
enum class Route {
    automatic,      // best route available for the models and decision function
    closed_form,    // Rayleigh links, identity F
    log_quadrature, // Rayleigh links, log-capacity F: one-dimensional integrals
    nested,         // any models, any F: nested double integrals
};

namespace detail {

inline LinkRates rates_closed_identity(double rho, double os, double orr)
{
    const double sum = orr + rho * os;
    LinkRates out;
    out.arrival = (g(1.0 / os) - orr / sum * g(sum / (os * orr))) / kLn2;
    out.departure = (g(1.0 / orr) - rho * os / sum * g(sum / (rho * os * orr))) / kLn2;
    return out;
}

// E{ ln(1+X) 1[X > t] } for X ~ Exp(omega), written with u = 1 + t:
// e^{-t/omega} [ln u + e^{u/omega} E1(u/omega)].
inline double log_tail_rayleigh(double log_u, double t, double omega)
{
    if (std::isinf(t)) {
        return 0.0;
    }
    const double u = 1.0 + t;
    return damp(t / omega, log_u + g(u / omega));
}

inline LinkRates rates_log_quadrature(double rho, double os, double orr, const QuadratureSpec& spec)
{
    LinkRates out;
    // Source selected iff s > G(r) = (1+r)^{1/rho} - 1.
    out.arrival = special::integrate_semi_infinite(
                      [&](double r) {
                          const double log_u = std::log1p(r) / rho;
                          return log_tail_rayleigh(log_u, std::expm1(log_u), os) * std::exp(-r / orr) / orr;
                      },
                      0.0, spec.with_scale(orr))
                  / kLn2;
    // Relay selected iff r >= H(s) = (1+s)^rho - 1.
    out.departure = special::integrate_semi_infinite(
                        [&](double s) {
                            const double log_u = std::log1p(s) * rho;
                            return log_tail_rayleigh(log_u, std::expm1(log_u), orr) * std::exp(-s / os) / os;
                        },
                        0.0, spec.with_scale(os))
                    / kLn2;
    return out;
}

inline LinkRates rates_nested(const DecisionFunction& f, double rho, const FadingModel& ms, const FadingModel& mr,
                              const QuadratureSpec& spec)
{
    const QuadratureSpec inner = spec.tightened();
    auto log2_1p = [](double x) { return std::log1p(x) / kLn2; };
    LinkRates out;
    out.arrival = special::integrate_semi_infinite(
        [&](double r) {
            const double fr = mr.pdf(r);
            if (fr == 0.0) {
                return 0.0;
            }
            const double lower = f.source_limit(r, rho);
            const double tail = special::integrate_semi_infinite(
                [&](double s) { return log2_1p(s) * ms.pdf(s); }, lower, inner.with_scale(ms.mean()));
            return tail * fr;
        },
        0.0, spec.with_scale(mr.mean()));
    out.departure = special::integrate_semi_infinite(
        [&](double s) {
            const double fs = ms.pdf(s);
            if (fs == 0.0) {
                return 0.0;
            }
            const double lower = f.relay_limit(s, rho);
            const double tail = special::integrate_semi_infinite(
                [&](double r) { return log2_1p(r) * mr.pdf(r); }, lower, inner.with_scale(mr.mean()));
            return tail * fs;
        },
        0.0, spec.with_scale(ms.mean()));
    return out;
}

} // namespace detail

/// E{(1-d)S} and E{dR} under the fixed-power rule with threshold rho.
inline LinkRates link_rates(const DecisionFunction& f, double rho, const FadingModel& ms, const FadingModel& mr,
                            const QuadratureSpec& spec = {}, Route route = Route::automatic)
{
    detail::require_rho(rho);
    const bool rayleigh = ms.is_rayleigh() && mr.is_rayleigh();
    if (route == Route::automatic) {
        if (rayleigh) {
            route = f.kind() == DecisionKind::identity ? Route::closed_form : Route::log_quadrature;
        } else {
            route = Route::nested;
        }
    }
    switch (route) {
    case Route::closed_form:
        if (!rayleigh || f.kind() != DecisionKind::identity) {
            throw ConfigError("link_rates: closed-form route needs Rayleigh links and the identity decision function");
        }
        return detail::rates_closed_identity(rho, ms.mean(), mr.mean());
    case Route::log_quadrature:
        if (!rayleigh || f.kind() != DecisionKind::log_capacity) {
            throw ConfigError("link_rates: log-quadrature route needs Rayleigh links and the log-capacity decision function");
        }
        return detail::rates_log_quadrature(rho, ms.mean(), mr.mean(), spec);
    case Route::nested:
    case Route::automatic:
        break;
    }
    return detail::rates_nested(f, rho, ms, mr, spec);
}

/// Flow balance of the fixed-power rule: value = E{(1-d)S} - E{dR}. The
/// optimal threshold is its root. The value increases with rho.
struct ThresholdResidual {
    double value = 0.0;
    double throughput_at_root = 0.0; // E{dR} at this rho
};

inline ThresholdResidual threshold_residual(const DecisionFunction& f, double rho, const FadingModel& ms,
                                            const FadingModel& mr, const QuadratureSpec& spec = {},
                                            Route route = Route::automatic)
{
    const LinkRates lr = link_rates(f, rho, ms, mr, spec, route);
    return ThresholdResidual{lr.arrival - lr.departure, lr.departure};
}

/// E{dR} for the given threshold; the maximal throughput when rho is the root of threshold_residual.
inline double tau_max(const DecisionFunction& f, double rho, const FadingModel& ms, const FadingModel& mr,
                      const QuadratureSpec& spec = {}, Route route = Route::automatic)
{
    return link_rates(f, rho, ms, mr, spec, route).departure;
}

/// Maximal throughput for equal link means (threshold 1, either decision function).
inline double tau_max_symmetric_rayleigh(double omega)
{
    detail::require_positive_mean(omega, "tau_max_symmetric_rayleigh");
    return (detail::g(1.0 / omega) - 0.5 * detail::g(2.0 / omega)) / detail::kLn2;
}

/// tau_max / tau_conv2 for equal link means.
inline double symmetric_gain_rayleigh(double omega)
{
    detail::require_positive_mean(omega, "symmetric_gain_rayleigh");
    return 2.0 - detail::g(2.0 / omega) / detail::g(1.0 / omega);
}

// ---------------------------------------------------------------------------
// Joint link selection and power allocation.

/// rate = (arrival - departure) in bits/slot, power = mean power - gamma_bar,
/// tau = arrival-side throughput.
struct PaResiduals {
    double rate = 0.0;
    double power = 0.0;
    double tau = 0.0;
    double arrival = 0.0;
    double departure = 0.0;
    double mean_power = 0.0;
};

namespace detail {

inline void require_pa_args(double lambda, double rho, double gamma_bar)
{
    if (!(lambda > 0.0) || !(rho > 0.0) || !(gamma_bar > 0.0) || !std::isfinite(lambda) || !std::isfinite(rho)) {
        throw DomainError("pa_residuals: lambda, rho and gamma_bar must be positive and finite");
    }
}

inline double e1(double x) { return special::exp_integral_e1(x); }

// int_a^inf ln(c h) e^{-h/omega}/omega dh = e^{-a/omega} ln(c a) + E1(a/omega).
inline double log_moment_tail(double a, double c, double omega)
{
    if (std::isinf(a)) {
        return 0.0;
    }
    return damp(a / omega, std::log(c * a)) + e1(a / omega);
}

// int_a^inf (c - 1/h) e^{-h/omega}/omega dh = c e^{-a/omega} - E1(a/omega)/omega.
inline double power_moment_tail(double a, double c, double omega)
{
    if (std::isinf(a)) {
        return 0.0;
    }
    return c * std::exp(-a / omega) - e1(a / omega) / omega;
}

} // namespace detail

/// Residuals of the two optimality conditions for Rayleigh links with mean
/// channel gains omega_s, omega_r. Inner integrals are done in closed form; the
/// outer ones by quadrature over the region where the crossing thresholds apply.
inline PaResiduals pa_residuals_rayleigh(double lambda, double rho, double omega_s, double omega_r, double gamma_bar,
                                         const QuadratureSpec& spec = {})
{
    detail::require_pa_args(lambda, rho, gamma_bar);
    detail::require_positive_mean(omega_s, "pa_residuals");
    detail::require_positive_mean(omega_r, "pa_residuals");
    const double a = omega_s;
    const double b = omega_r;
    const double cut_s = lambda / rho;
    const double cut_r = lambda;
    const double p_r_low = -std::expm1(-cut_r / b); // Pr{h_R <= lambda}
    const double p_s_low = -std::expm1(-cut_s / a); // Pr{h_S <= lambda/rho}

    // Source slots: h_S above its cutoff and either h_R below its cutoff or h_S above L1(h_R).
    const double arr_low = p_r_low * detail::e1(cut_s / a);
    const double arr_high = special::integrate_semi_infinite(
        [&](double h) {
            const double l1 = policy::source_crossing(h, lambda, rho);
            return detail::log_moment_tail(l1, rho / lambda, a) * std::exp(-h / b) / b;
        },
        cut_r, spec.with_scale(b));
    const double dep_low = p_s_low * detail::e1(cut_r / b);
    const double dep_high = special::integrate_semi_infinite(
        [&](double h) {
            const double l2 = policy::relay_crossing(h, lambda, rho);
            return detail::log_moment_tail(l2, 1.0 / lambda, b) * std::exp(-h / a) / a;
        },
        cut_s, spec.with_scale(a));

    const double pow_s_low = p_r_low * detail::power_moment_tail(cut_s, rho / lambda, a);
    const double pow_s_high = special::integrate_semi_infinite(
        [&](double h) {
            const double l1 = policy::source_crossing(h, lambda, rho);
            return detail::power_moment_tail(l1, rho / lambda, a) * std::exp(-h / b) / b;
        },
        cut_r, spec.with_scale(b));
    const double pow_r_low = p_s_low * detail::power_moment_tail(cut_r, 1.0 / lambda, b);
    const double pow_r_high = special::integrate_semi_infinite(
        [&](double h) {
            const double l2 = policy::relay_crossing(h, lambda, rho);
            return detail::power_moment_tail(l2, 1.0 / lambda, b) * std::exp(-h / a) / a;
        },
        cut_s, spec.with_scale(a));

    PaResiduals out;
    out.arrival = (arr_low + arr_high) / detail::kLn2;
    out.departure = (dep_low + dep_high) / detail::kLn2;
    out.mean_power = pow_s_low + pow_s_high + pow_r_low + pow_r_high;
    out.rate = out.arrival - out.departure;
    out.power = out.mean_power - gamma_bar;
    out.tau = out.arrival;
    return out;
}

/// Same conditions for arbitrary gain models, by nested quadrature of the
/// double integrals. The source-side integrand is log2(rho h_S / lambda).
inline PaResiduals pa_residuals_generic(double lambda, double rho, const FadingModel& mhs, const FadingModel& mhr,
                                        double gamma_bar, const QuadratureSpec& spec = {})
{
    detail::require_pa_args(lambda, rho, gamma_bar);
    const double cut_s = lambda / rho;
    const double cut_r = lambda;
    const QuadratureSpec inner = spec.tightened();
    const QuadratureSpec inner_s = inner.with_scale(mhs.mean());
    const QuadratureSpec inner_r = inner.with_scale(mhr.mean());

    auto src_rate = [&](double lower) {
        return special::integrate_semi_infinite(
            [&](double h) { return std::log2(rho * h / lambda) * mhs.pdf(h); }, lower, inner_s);
    };
    auto rel_rate = [&](double lower) {
        return special::integrate_semi_infinite(
            [&](double h) { return std::log2(h / lambda) * mhr.pdf(h); }, lower, inner_r);
    };
    auto src_power = [&](double lower) {
        return special::integrate_semi_infinite(
            [&](double h) { return (rho / lambda - 1.0 / h) * mhs.pdf(h); }, lower, inner_s);
    };
    auto rel_power = [&](double lower) {
        return special::integrate_semi_infinite(
            [&](double h) { return (1.0 / lambda - 1.0 / h) * mhr.pdf(h); }, lower, inner_r);
    };
    const double p_r_low = mhr.cdf(cut_r, inner);
    const double p_s_low = mhs.cdf(cut_s, inner);

    auto outer_r = [&](auto&& tail) {
        return special::integrate_semi_infinite(
            [&](double h) {
                const double fr = mhr.pdf(h);
                return fr == 0.0 ? 0.0 : tail(policy::source_crossing(h, lambda, rho)) * fr;
            },
            cut_r, spec.with_scale(mhr.mean()));
    };
    auto outer_s = [&](auto&& tail) {
        return special::integrate_semi_infinite(
            [&](double h) {
                const double fs = mhs.pdf(h);
                return fs == 0.0 ? 0.0 : tail(policy::relay_crossing(h, lambda, rho)) * fs;
            },
            cut_s, spec.with_scale(mhs.mean()));
    };

    PaResiduals out;
    out.arrival = p_r_low * src_rate(cut_s) + outer_r(src_rate);
    out.departure = p_s_low * rel_rate(cut_r) + outer_s(rel_rate);
    out.mean_power = p_r_low * src_power(cut_s) + outer_r(src_power) + p_s_low * rel_power(cut_r) + outer_s(rel_power);
    out.rate = out.arrival - out.departure;
    out.power = out.mean_power - gamma_bar;
    out.tau = out.arrival;
    return out;
}

/// Dispatches to the Rayleigh form when both models are Rayleigh.
inline PaResiduals pa_residuals(double lambda, double rho, const FadingModel& mhs, const FadingModel& mhr,
                                double gamma_bar, const QuadratureSpec& spec = {})
{
    if (mhs.is_rayleigh() && mhr.is_rayleigh()) {
        return pa_residuals_rayleigh(lambda, rho, mhs.mean(), mhr.mean(), gamma_bar, spec);
    }
    return pa_residuals_generic(lambda, rho, mhs, mhr, gamma_bar, spec);
}

/// Mean power of per-link water-filling max(0, 1/alpha - 1/h) on a Rayleigh link.
inline double water_filling_power_rayleigh(double alpha, double omega)
{
    if (!(alpha > 0.0)) {
        throw DomainError("water_filling_power_rayleigh: alpha must be > 0");
    }
    detail::require_positive_mean(omega, "water_filling_power_rayleigh");
    return detail::power_moment_tail(alpha, 1.0 / alpha, omega);
}

/// Ergodic rate E{log2(1 + gamma h)} under that water-filling.
inline double water_filling_rate_rayleigh(double alpha, double omega)
{
    if (!(alpha > 0.0)) {
        throw DomainError("water_filling_rate_rayleigh: alpha must be > 0");
    }
    detail::require_positive_mean(omega, "water_filling_rate_rayleigh");
    return detail::e1(alpha / omega) / detail::kLn2;
}

// ---------------------------------------------------------------------------
// Delay-limited operation (identity decision function, Rayleigh links).

/// m_s1 = E{(1-d)S}, m_r1 = E{dR}, m_s2 = E{(1-d)S^2}, m_r2 = E{dR^2}, xi = m_s1/m_r1.
struct DelayMoments {
    double m_s1 = 0.0;
    double m_r1 = 0.0;
    double m_s2 = 0.0;
    double m_r2 = 0.0;
    double xi = 0.0;
};

/// First moments in closed form, second moments by nested quadrature.
inline DelayMoments delay_moments(double rho, double omega_s, double omega_r, const QuadratureSpec& spec = {})
{
    detail::require_rho(rho);
    detail::require_positive_mean(omega_s, "delay_moments");
    detail::require_positive_mean(omega_r, "delay_moments");
    const LinkRates lr = detail::rates_closed_identity(rho, omega_s, omega_r);
    const QuadratureSpec inner = spec.tightened();
    auto sq = [](double x) {
        const double v = std::log1p(x) / detail::kLn2;
        return v * v;
    };
    DelayMoments m;
    m.m_s1 = lr.arrival;
    m.m_r1 = lr.departure;
    m.m_s2 = special::integrate_semi_infinite(
        [&](double r) {
            const double inner_val = special::integrate_semi_infinite(
                [&](double s) { return sq(s) * std::exp(-s / omega_s) / omega_s; }, r / rho,
                inner.with_scale(omega_s));
            return inner_val * std::exp(-r / omega_r) / omega_r;
        },
        0.0, spec.with_scale(omega_r));
    m.m_r2 = special::integrate_semi_infinite(
        [&](double s) {
            const double inner_val = special::integrate_semi_infinite(
                [&](double r) { return sq(r) * std::exp(-r / omega_r) / omega_r; }, s * rho,
                inner.with_scale(omega_r));
            return inner_val * std::exp(-s / omega_s) / omega_s;
        },
        0.0, spec.with_scale(omega_s));
    m.xi = m.m_r1 > 0.0 ? m.m_s1 / m.m_r1 : std::numeric_limits<double>::infinity();
    return m;
}

/// Upper bound on the mean delay (slots) of the starved-buffer policy.
inline double delay_upper_bound(const DelayMoments& m)
{
    if (!(m.m_s1 > 0.0)) {
        throw DomainError("delay_upper_bound: requires E{(1-d)S} > 0");
    }
    if (!(m.xi < 1.0) || !(m.m_r1 > m.m_s1)) {
        throw DomainError("delay_upper_bound: requires xi < 1 (non-absorbing queue), got xi = "
                          + std::to_string(m.xi));
    }
    return 0.5 / m.m_s1 * (m.m_s2 + m.xi * (2.0 - m.xi) * m.m_r2) / (m.m_r1 - m.m_s1);
}

/// Upper bound on E{Q} implied by the delay bound and Little's law.
inline double mean_queue_upper_bound(const DelayMoments& m) { return m.m_s1 * delay_upper_bound(m); }

/// Markov bound Pr{Q > q_max} <= E{Q}/q_max, saturated at 1.
inline double drop_probability_bound(double mean_queue, double q_max)
{
    if (!(q_max > 0.0)) {
        throw DomainError("drop_probability_bound: q_max must be > 0");
    }
    if (!(mean_queue >= 0.0)) {
        throw DomainError("drop_probability_bound: mean queue must be >= 0");
    }
    return std::min(1.0, mean_queue / q_max);
}

/// Finite-buffer throughput E{(1-d)S} (1 - Pr{Q > q_max}); with the Markov
/// bound in place of the overflow probability this is a lower bound.
inline double finite_buffer_throughput(double m_s1, double overflow_probability)
{
    if (!(overflow_probability >= 0.0 && overflow_probability <= 1.0)) {
        throw DomainError("finite_buffer_throughput: probability outside [0, 1]");
    }
    return m_s1 * (1.0 - overflow_probability);
}

} // namespace bufrelay::closed_form
