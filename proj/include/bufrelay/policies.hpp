#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numbers>
#include <string>
#include <string_view>

#include "bufrelay/errors.hpp"
#include "bufrelay/roots.hpp"
#include "bufrelay/special_functions.hpp"

namespace bufrelay::policy {

enum class DecisionKind { identity, log_capacity };

/// Link-selection metric F with its inverse. Both variants are nonnegative and
/// strictly increasing on [0, inf).
class DecisionFunction {
public:
    constexpr DecisionFunction() = default;

    static constexpr DecisionFunction identity() { return DecisionFunction(DecisionKind::identity); }
    static constexpr DecisionFunction log_capacity() { return DecisionFunction(DecisionKind::log_capacity); }

    static DecisionFunction from_name(std::string_view name)
    {
        if (name == "identity") {
            return identity();
        }
        if (name == "log_capacity") {
            return log_capacity();
        }
        throw ConfigError("unknown decision function '" + std::string(name)
                          + "' (expected identity or log_capacity)");
    }

    constexpr DecisionKind kind() const { return kind_; }

    std::string_view name() const { return kind_ == DecisionKind::identity ? "identity" : "log_capacity"; }

    double operator()(double x) const
    {
        return kind_ == DecisionKind::identity ? x : std::log1p(x) / std::numbers::ln2;
    }

    double inverse(double y) const
    {
        return kind_ == DecisionKind::identity ? y : std::expm1(y * std::numbers::ln2);
    }

    /// G(r) = F^-1(F(r)/rho): the source is selected iff s > G(r).
    double source_limit(double r, double rho) const { return inverse((*this)(r) / rho); }

    /// H(s) = F^-1(rho F(s)): the relay is selected iff r >= H(s).
    double relay_limit(double s, double rho) const { return inverse(rho * (*this)(s)); }

    friend constexpr bool operator==(DecisionFunction, DecisionFunction) = default;

private:
    constexpr explicit DecisionFunction(DecisionKind kind) : kind_(kind) {}

    DecisionKind kind_ = DecisionKind::log_capacity;
};

enum class Protocol { conv_no_buffer, conv_buffer, adaptive_fixed, adaptive_pa, starved, queue_limited };

inline constexpr std::array<std::string_view, 6> kProtocolNames = {
    "conv_no_buffer", "conv_buffer", "adaptive_fixed", "adaptive_pa", "starved", "queue_limited"};

inline std::string_view to_string(Protocol p) { return kProtocolNames[static_cast<std::size_t>(p)]; }

inline Protocol protocol_from_name(std::string_view name)
{
    for (std::size_t i = 0; i < kProtocolNames.size(); ++i) {
        if (kProtocolNames[i] == name) {
            return static_cast<Protocol>(i);
        }
    }
    throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

inline bool is_conventional(Protocol p) { return p == Protocol::conv_no_buffer || p == Protocol::conv_buffer; }

/// Protocol identifier plus the parameters it reads.
struct PolicySpec {
    Protocol protocol = Protocol::adaptive_fixed;
    double rho = 1.0;
    double lambda = 0.0;    // adaptive_pa only
    double gamma_bar = 0.0; // adaptive_pa only
    double q_max = std::numeric_limits<double>::infinity();
    DecisionFunction decision = DecisionFunction::log_capacity();
    /// Receive/transmit frame length for conv_buffer (0: the whole run).
    std::int64_t conv_frame = 0;

    void validate() const
    {
        if (!(rho > 0.0) || !std::isfinite(rho)) {
            throw ConfigError("policy: rho must be positive and finite");
        }
        if (protocol == Protocol::adaptive_pa && (!(lambda > 0.0) || !(gamma_bar > 0.0))) {
            throw ConfigError("policy: adaptive_pa requires lambda > 0 and gamma_bar > 0");
        }
        if (!(q_max >= 0.0)) {
            throw ConfigError("policy: q_max must be >= 0");
        }
        if (protocol == Protocol::queue_limited && std::isinf(q_max)) {
            // Degenerates to adaptive_fixed; allowed.
        }
        if (conv_frame < 0 || conv_frame % 2 != 0) {
            throw ConfigError("policy: conv_frame must be a nonnegative even number of slots");
        }
    }
};

enum class Selection : std::uint8_t { source = 0, relay = 1 };

inline int as_int(Selection d) { return static_cast<int>(d); }

/// Fixed-power rule: the relay transmits iff F(r) >= rho F(s). Ties go to the relay.
inline Selection select_fixed_power(double s, double r, double rho, const DecisionFunction& f)
{
    return f(r) >= rho * f(s) ? Selection::relay : Selection::source;
}

struct PowerAllocation {
    double source = 0.0;
    double relay = 0.0;
};

/// Water-filling with link-specific levels rho/lambda (source) and 1/lambda (relay).
inline PowerAllocation allocate_power(double h_s, double h_r, double lambda, double rho)
{
    PowerAllocation out;
    if (h_s > lambda / rho) {
        out.source = rho / lambda - 1.0 / h_s;
    }
    if (h_r > lambda) {
        out.relay = 1.0 / lambda - 1.0 / h_r;
    }
    return out;
}

namespace detail {

// y - 1 - ln(y) for y = den/num. Near y = 1 the cancellation is handled by the
// log1p series; far from it the logarithm is taken of num and den separately.
inline double excess_log_ratio(double y, double num, double den)
{
    if (std::abs(y - 1.0) < 0.5) {
        return special::detail::log1p_deficit(y - 1.0);
    }
    return (std::log(num) - std::log(den)) + y - 1.0;
}

} // namespace detail

/// ln(h_R/lambda) + lambda/h_R - 1: relay-slot value of the per-slot Lagrangian.
inline double relay_metric(double h_r, double lambda)
{
    return detail::excess_log_ratio(lambda / h_r, h_r, lambda);
}

/// rho ln(rho h_S/lambda) + lambda/h_S - rho: source-slot value of the per-slot Lagrangian.
inline double source_metric(double h_s, double lambda, double rho)
{
    return rho * detail::excess_log_ratio(lambda / (rho * h_s), rho * h_s, lambda);
}

/// Joint selection rule under power allocation. Slots in which neither link
/// clears its cutoff resolve to the source with zero power, i.e. an idle slot.
inline Selection select_with_power(double h_s, double h_r, double lambda, double rho)
{
    const bool relay_on = h_r > lambda;
    const bool source_on = h_s > lambda / rho;
    if (relay_on && source_on && relay_metric(h_r, lambda) > source_metric(h_s, lambda, rho)) {
        return Selection::relay;
    }
    if (relay_on && !source_on) {
        return Selection::relay;
    }
    return Selection::source;
}

/// Crossing thresholds of the power-allocation metrics: for a given h_R,
/// `source` (L1) is the h_S at which both metrics are equal; for a given h_S,
/// `relay` (L2) is the corresponding h_R.
struct CrossingThresholds {
    double source = 0.0;
    double relay = 0.0;
};

namespace detail {

// -scale / W(-exp(-1 - delta)) on the branch whose result lies in [scale, inf)
// and reproduces the metric crossing; `metric` maps a candidate back to delta.
template <class Metric>
double crossing_from_lambert(double delta, double scale, double cutoff, Metric&& metric)
{
    for (const auto branch : {special::Branch::principal, special::Branch::lower}) {
        const double w = special::lambert_w_of_neg_exp(branch, delta);
        // On the principal branch -1/w = exp(1 + delta + w); the exponential
        // form stays accurate where w itself is tiny or underflows.
        const double candidate
            = branch == special::Branch::principal && delta > 30.0 ? scale * std::exp(1.0 + delta + w) : -scale / w;
        if (!(candidate >= cutoff * (1.0 - 1e-15))) {
            continue;
        }
        if (std::isinf(candidate)) {
            return candidate;
        }
        const double back = metric(candidate);
        if (std::abs(back - delta) <= 1e-8 * std::max(1.0, delta)) {
            return std::max(candidate, cutoff);
        }
    }
    throw DomainError("crossing threshold: no Lambert W branch yields an in-domain crossing");
}

} // namespace detail

/// L1: the h_S at which the source metric equals the relay metric of h_r (h_r >= lambda).
inline double source_crossing(double h_r, double lambda, double rho)
{
    if (!(h_r >= lambda) || !(lambda > 0.0) || !(rho > 0.0)) {
        throw DomainError("source_crossing: requires h_r >= lambda > 0 and rho > 0");
    }
    const double delta = relay_metric(h_r, lambda) / rho;
    return detail::crossing_from_lambert(delta, lambda / rho, lambda / rho, [&](double h_s) {
        return source_metric(h_s, lambda, rho) / rho;
    });
}

/// L2: the h_R at which the relay metric equals the source metric of h_s (h_s >= lambda/rho).
inline double relay_crossing(double h_s, double lambda, double rho)
{
    if (!(h_s >= lambda / rho) || !(lambda > 0.0) || !(rho > 0.0)) {
        throw DomainError("relay_crossing: requires h_s >= lambda/rho > 0");
    }
    const double delta = source_metric(h_s, lambda, rho);
    return detail::crossing_from_lambert(delta, lambda, lambda, [&](double h_r) { return relay_metric(h_r, lambda); });
}

inline CrossingThresholds l_thresholds(double h_r, double h_s, double lambda, double rho)
{
    return CrossingThresholds{source_crossing(h_r, lambda, rho), relay_crossing(h_s, lambda, rho)};
}

/// Compares the Lambert-W thresholds with bisection on the metric equality over
/// a coarse (lambda, rho, h) grid. Throws DomainError on disagreement.
inline void validate_threshold_branches()
{
    for (const double lambda : {0.05, 0.5, 2.0}) {
        for (const double rho : {0.2, 1.0, 5.0}) {
            for (const double factor : {1.01, 1.5, 4.0, 30.0}) {
                const double h_r = lambda * factor;
                const double target = relay_metric(h_r, lambda);
                const double lo = lambda / rho;
                double hi = 2.0 * lo;
                while (source_metric(hi, lambda, rho) < target) {
                    hi *= 2.0;
                }
                const auto ref = roots::bisect(
                    [&](double h) { return source_metric(h, lambda, rho) - target; }, lo, hi);
                const double l1 = source_crossing(h_r, lambda, rho);
                if (std::abs(l1 - ref.x) > 1e-8 * ref.x) {
                    throw DomainError("threshold branch validation failed (L1) at lambda="
                                      + std::to_string(lambda) + " rho=" + std::to_string(rho));
                }
            }
        }
    }
}

/// Runs validate_threshold_branches once per process.
inline void ensure_threshold_branches_validated()
{
    static std::once_flag flag;
    std::call_once(flag, validate_threshold_branches);
}

/// Queue-limiting rule: use the fixed-power rule while the buffer has room
/// for this slot's source bits, otherwise force the relay to transmit.
inline Selection select_queue_limited(double s, double r, double rho, const DecisionFunction& f, double q,
                                      double q_max)
{
    const double source_bits = std::log2(1.0 + s);
    if (q_max - q > source_bits) {
        return select_fixed_power(s, r, rho, f);
    }
    return Selection::relay;
}

/// Fixed schedules of the conventional baselines for 1-based `slot` in a frame
/// of `horizon` slots.
inline Selection conventional_schedule(Protocol protocol, std::int64_t slot, std::int64_t horizon)
{
    if (horizon < 2 || horizon % 2 != 0) {
        throw ConfigError("conventional_schedule: horizon must be even and >= 2");
    }
    if (slot < 1 || slot > horizon) {
        throw ConfigError("conventional_schedule: slot outside 1..horizon");
    }
    switch (protocol) {
    case Protocol::conv_no_buffer:
        return slot % 2 == 0 ? Selection::relay : Selection::source;
    case Protocol::conv_buffer:
        return slot <= horizon / 2 ? Selection::source : Selection::relay;
    default:
        throw ConfigError("conventional_schedule: not a conventional protocol");
    }
}

} // namespace bufrelay::policy
