// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bufrelay/bufrelay.hpp"

using namespace bufrelay;
using channel::FadingModel;
using policy::DecisionFunction;
using policy::Protocol;

namespace {

constexpr std::int64_t kSlots = 1'000'000;

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const char* fmt, ...) __attribute__((format(printf, 3, 4)))
    {
        if (!cond) {
            ok = false;
            char buf[512];
            va_list args;
            va_start(args, fmt);
            std::vsnprintf(buf, sizeof buf, fmt, args);
            va_end(args);
            if (!detail.empty()) {
                detail += "; ";
            }
            detail += buf;
        }
    }

    void note(const char* fmt, ...) __attribute__((format(printf, 2, 3)))
    {
        char buf[512];
        va_list args;
        va_start(args, fmt);
        std::vsnprintf(buf, sizeof buf, fmt, args);
        va_end(args);
        std::printf("    %s\n", buf);
    }
};

sim::SimConfig config(Protocol p, double os, double orr, std::uint64_t seed)
{
    sim::SimConfig c;
    c.policy.protocol = p;
    c.model_s = FadingModel::rayleigh(os);
    c.model_r = FadingModel::rayleigh(orr);
    c.slots = kSlots;
    c.seed = seed;
    return c;
}

Check ac1()
{
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    for (const double omega : {0.5, 1.0, 4.0}) {
        const auto m = FadingModel::rayleigh(omega);
        const double reference = closed_form::tau_max_symmetric_rayleigh(omega);
        for (const auto f : {DecisionFunction::identity(), DecisionFunction::log_capacity()}) {
            const auto r = solvers::solve_rho_opt(f, m, m);
            c.require(std::abs(r.rho - 1.0) <= 1e-6, "omega=%g %s: rho_opt=%.12g", omega,
                      std::string(f.name()).c_str(), r.rho);
            c.require(std::abs(r.tau - reference) <= 1e-9, "omega=%g %s: tau_max off by %.3g", omega,
                      std::string(f.name()).c_str(), r.tau - reference);
        }
        auto s = config(Protocol::adaptive_fixed, omega, omega, 101);
        s.policy.rho = 1.0;
        const double sim_tau = sim::run(s).throughput;
        c.note("omega=%g tau_max=%.9f sim=%.6f (%.3f%%)", omega, reference, sim_tau,
               100.0 * (sim_tau / reference - 1.0));
        c.require(rel(sim_tau, reference) <= 0.01, "omega=%g: simulation off by %.3f%%", omega,
                  100.0 * rel(sim_tau, reference));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.note("runtime %.2f s", secs);
    c.require(secs < 10.0, "runtime %.1f s", secs);
    return c;
}

Check ac2()
{
    Check c;
    const std::pair<double, double> grid[] = {{1.0, 1.0}, {0.5, 2.0}, {2.0, 0.5}, {1.0, 10.0}, {10.0, 1.0}, {5.0, 5.0}};
    std::uint64_t seed = 201;
    for (const auto& [os, orr] : grid) {
        const double t1 = closed_form::tau_conv1_rayleigh(os, orr);
        const double t2 = closed_form::tau_conv2_rayleigh(os, orr);
        const double s1 = sim::run(config(Protocol::conv_no_buffer, os, orr, seed++)).throughput;
        // One receive/transmit frame over the whole run approximates N -> inf.
        const double s2 = sim::run(config(Protocol::conv_buffer, os, orr, seed++)).throughput;
        c.note("(%g, %g) conv1 %.6f sim %.6f (%.3f%%)  conv2 %.6f sim %.6f (%.3f%%)", os, orr, t1, s1,
               100.0 * (s1 / t1 - 1.0), t2, s2, 100.0 * (s2 / t2 - 1.0));
        c.require(rel(s1, t1) <= 0.005, "(%g,%g) conv1 off by %.3f%%", os, orr, 100.0 * rel(s1, t1));
        c.require(rel(s2, t2) <= 0.005, "(%g,%g) conv2 off by %.3f%%", os, orr, 100.0 * rel(s2, t2));
        c.require(t2 >= t1, "(%g,%g) conv2 < conv1", os, orr);
    }
    return c;
}

Check ac3()
{
    Check c;
    double prev = INFINITY;
    for (const double omega : {1e-3, 1e-1, 1.0, 10.0, 1e3}) {
        const auto m = FadingModel::rayleigh(omega);
        const double gain = solvers::solve_rho_opt(DecisionFunction::identity(), m, m).tau
                            / closed_form::tau_conv2_rayleigh(omega, omega);
        c.note("omega=%g gain=%.10f", omega, gain);
        c.require(gain < prev, "not decreasing at omega=%g", omega);
        c.require(gain >= 1.0 && gain <= 1.5, "gain %.6f outside [1, 1.5] at omega=%g", gain, omega);
        if (omega == 1e-3) {
            c.require(gain >= 1.45, "gain %.6f < 1.45 at omega=1e-3", gain);
        }
        prev = gain;
    }
    return c;
}

Check ac4()
{
    Check c;
    // Extreme-ratio gains pinned from the first validated run (closed form for
    // the identity metric, one-dimensional quadrature for log-capacity).
    struct Pinned {
        DecisionFunction f;
        double at_low;
        double at_high;
    };
    const Pinned pinned[] = {{DecisionFunction::identity(), 1.99980084005, 1.95829779711},
                             {DecisionFunction::log_capacity(), 1.99981262426, 1.96790975433}};
    for (const auto& p : pinned) {
        std::vector<double> ratios;
        std::vector<double> gains;
        for (int k = -8; k <= 8; ++k) {
            const double ratio = std::pow(10.0, k / 4.0);
            const auto r = solvers::solve_rho_opt(p.f, FadingModel::rayleigh(1.0), FadingModel::rayleigh(ratio));
            ratios.push_back(ratio);
            gains.push_back(r.tau / closed_form::tau_conv2_rayleigh(1.0, ratio));
        }
        const auto argmin = static_cast<std::size_t>(std::min_element(gains.begin(), gains.end()) - gains.begin());
        bool u_shape = argmin > 0 && argmin + 1 < gains.size();
        for (std::size_t i = 1; i < gains.size(); ++i) {
            u_shape = u_shape && (i <= argmin ? gains[i] < gains[i - 1] : gains[i] > gains[i - 1]);
        }
        const double at_one = gains[8];
        c.note("%s: gain(1e-2)=%.11f gain(1)=%.11f gain(1e2)=%.11f minimum at ratio %g",
               std::string(p.f.name()).c_str(), gains.front(), at_one, gains.back(), ratios[argmin]);
        c.require(u_shape, "%s: gain is not U-shaped", std::string(p.f.name()).c_str());
        c.require(gains.front() > at_one && gains.back() > at_one, "%s: extremes do not exceed ratio-1 value",
                  std::string(p.f.name()).c_str());
        c.require(rel(gains.front(), p.at_low) < 1e-9 && rel(gains.back(), p.at_high) < 1e-9,
                  "%s: extremes moved from pinned values", std::string(p.f.name()).c_str());
    }
    return c;
}

Check ac5()
{
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    const double a = 0.1;
    const double b = 1.9;
    std::uint64_t seed = 501;
    for (const double gamma : {1.0, 100.0}) {
        const auto r = solvers::solve_lambda_rho(FadingModel::rayleigh(a), FadingModel::rayleigh(b), gamma);
        const double conv = solvers::tau_conv2_pa_rayleigh(a, b, gamma);
        auto s = config(Protocol::adaptive_pa, a, b, seed++);
        s.policy.lambda = r.lambda;
        s.policy.rho = r.rho;
        s.policy.gamma_bar = gamma;
        const auto m = sim::run(s);
        c.note("gamma=%g lambda=%.9g rho=%.9g tau=%.9f conv_pa=%.9f sim tau=%.6f power=%.6f", gamma, r.lambda, r.rho,
               r.tau, conv, m.throughput, m.mean_power);
        c.require(r.converged, "gamma=%g: solver residuals not below tolerance", gamma);
        c.require(rel(m.mean_power, gamma) <= 0.015, "gamma=%g: simulated power %.6g", gamma, m.mean_power);
        c.require(rel(m.throughput, r.tau) <= 0.015, "gamma=%g: simulated throughput off by %.3f%%", gamma,
                  100.0 * rel(m.throughput, r.tau));
        if (gamma == 1.0) {
            const double floor = 1.9 * 0.95;
            c.note("gain factor solver %.5f, simulation %.5f (floor %.3f)", r.tau / conv, m.throughput / conv, floor);
            c.require(r.tau / conv >= floor, "solver gain factor %.4f", r.tau / conv);
            c.require(m.throughput / conv >= floor, "simulated gain factor %.4f", m.throughput / conv);
        } else {
            c.note("absolute gain solver %.5f, simulation %.5f bits/slot", r.tau - conv, m.throughput - conv);
            c.require(std::abs(r.tau - conv - 1.0) <= 0.1, "solver gain %.4f", r.tau - conv);
            c.require(std::abs(m.throughput - conv - 1.0) <= 0.1, "simulated gain %.4f", m.throughput - conv);
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.note("runtime %.2f s", secs);
    c.require(secs < 60.0, "runtime %.1f s", secs);
    return c;
}

Check ac6()
{
    Check c;
    // The bound sits within ~2% of the true mean delay at xi = 0.95 and the
    // ratio gap between the last two loads is ~0.02. A 10^6-slot run there has a
    // delay spread of ~7%, so each case averages ten 10^7-slot runs (standard
    // error ~0.4%).
    constexpr int kReplications = 10;
    constexpr std::int64_t kLongSlots = 10'000'000;
    double prev_ratio = INFINITY;
    std::uint64_t seed = 601;
    for (const double xi : {0.5, 0.7, 0.9, 0.95}) {
        const auto r = solvers::solve_rho_for_load(xi, 1.0, 1.0);
        const double bound = closed_form::delay_upper_bound(closed_form::delay_moments(r.rho, 1.0, 1.0));
        double sum = 0.0;
        double lo = INFINITY;
        double hi = 0.0;
        for (int k = 0; k < kReplications; ++k) {
            auto s = config(Protocol::starved, 1.0, 1.0, seed++);
            s.slots = kLongSlots;
            s.policy.rho = r.rho;
            s.policy.decision = DecisionFunction::identity();
            const double d = sim::run(s).mean_delay_fifo;
            sum += d;
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        const double delay = sum / kReplications;
        const double ratio = bound / delay;
        c.note("xi=%.2f rho=%.6f bound=%.4f sim=%.4f (runs %.3f..%.3f) bound/sim=%.4f", xi, r.rho, bound, delay, lo,
               hi, ratio);
        c.require(delay <= bound, "xi=%.2f: simulated delay %.4f above bound %.4f", xi, delay, bound);
        c.require(ratio < prev_ratio, "xi=%.2f: bound/sim ratio not decreasing", xi);
        prev_ratio = ratio;
    }
    return c;
}

Check ac7()
{
    Check c;
    std::uint64_t seed = 701;
    for (const double xi : {0.5, 0.7, 0.9}) {
        const double rho = solvers::solve_rho_for_load(xi, 1.0, 1.0).rho;
        double prev_drop = INFINITY;
        for (const double q_max : {2.0, 5.0, 10.0, 20.0}) {
            auto s = config(Protocol::starved, 1.0, 1.0, seed);
            s.policy.rho = rho;
            s.policy.decision = DecisionFunction::identity();
            s.overflow_threshold = q_max;
            const auto open = sim::run(s);
            const double bound = closed_form::drop_probability_bound(open.mean_queue, q_max);
            s.policy.q_max = q_max;
            s.overflow_threshold = NAN;
            const double drop = sim::run(s).drop_prob;
            c.note("xi=%.1f q_max=%g Pr{Q>q_max}=%.6f bound=%.6f drop=%.6g", xi, q_max, open.overflow_event_prob,
                   bound, drop);
            c.require(open.overflow_event_prob <= bound, "xi=%.1f q_max=%g: overflow above bound", xi, q_max);
            c.require(drop < prev_drop, "xi=%.1f q_max=%g: drop probability not decreasing", xi, q_max);
            prev_drop = drop;
        }
        ++seed;
    }
    return c;
}

Check ac8()
{
    Check c;
    // Half-duplex, nonnegative queue and bit conservation on every protocol.
    std::vector<sim::SimConfig> runs;
    runs.push_back(config(Protocol::conv_no_buffer, 1.0, 1.0, 801));
    runs.push_back(config(Protocol::conv_buffer, 1.0, 2.0, 802));
    runs.back().policy.conv_frame = 20;
    runs.back().policy.q_max = 5.0;
    runs.push_back(config(Protocol::adaptive_fixed, 1.0, 2.0, 803));
    runs.push_back(config(Protocol::adaptive_pa, 0.1, 1.9, 804));
    runs.back().policy.lambda = 1.9;
    runs.back().policy.rho = 16.4;
    runs.back().policy.gamma_bar = 1.0;
    runs.push_back(config(Protocol::starved, 1.0, 1.0, 805));
    runs.back().policy.rho = 0.8;
    runs.back().policy.q_max = 8.0;
    runs.push_back(config(Protocol::queue_limited, 1.0, 1.0, 806));
    runs.back().policy.q_max = 5.0;
    for (auto& s : runs) {
        s.slots = 100'000;
        s.warmup_slots = 1'000;
        s.record_trace = true;
        const auto out = sim::run_with_trace(s);
        const auto& m = out.metrics;
        const char* name = policy::to_string(s.policy.protocol).data();
        bool exclusive = true;
        bool nonnegative = true;
        double sent = 0.0;
        for (const auto& row : out.trace) {
            exclusive = exclusive && (row.d == 0 ? row.relay_bits == 0.0 : row.source_bits == 0.0);
            nonnegative = nonnegative && row.queue >= 0.0;
            sent += row.source_bits;
        }
        const double imbalance = std::abs(m.total_admitted - m.total_departed - m.total_flushed - m.final_queue);
        const double offered_gap = std::abs(sent - (m.total_admitted + m.total_dropped - m.total_flushed));
        c.require(exclusive, "%s: both nodes transmitted in one slot", name);
        c.require(nonnegative, "%s: negative queue", name);
        c.require(imbalance <= 1e-9 * sent && offered_gap <= 1e-9 * sent, "%s: bit balance off by %.3g", name,
                  std::max(imbalance, offered_gap));
    }
    c.note("half-duplex, queue >= 0 and bit balance checked on %zu protocols", runs.size());

    // Little's law against the FIFO accumulator.
    for (const double rho : {0.6, 0.9}) {
        auto s = config(Protocol::starved, 1.0, 1.0, 810);
        s.policy.rho = rho;
        s.policy.decision = DecisionFunction::identity();
        const auto m = sim::run(s);
        const double dev = rel(m.mean_delay_little, m.mean_delay_fifo);
        c.note("Little vs FIFO at rho=%g: %.4f vs %.4f (%.3f%%)", rho, m.mean_delay_little, m.mean_delay_fifo,
               100.0 * dev);
        c.require(dev < 0.02, "Little deviation %.3f%% at rho=%g", 100.0 * dev, rho);
    }

    // Lambert-W thresholds against bisection on the metric equality.
    double worst = 0.0;
    for (const double lambda : {0.01, 0.3, 1.0, 5.0}) {
        for (const double rho : {0.1, 0.8, 3.0, 25.0}) {
            for (const double factor : {1.001, 1.1, 2.0, 10.0, 1e3}) {
                const double h_r = lambda * factor;
                const double target_r = policy::relay_metric(h_r, lambda);
                double hi = 2.0 * lambda / rho;
                while (policy::source_metric(hi, lambda, rho) < target_r) {
                    hi *= 2.0;
                }
                const double b1 = roots::bisect(
                    [&](double h) { return policy::source_metric(h, lambda, rho) - target_r; }, lambda / rho, hi).x;
                worst = std::max(worst, rel(policy::source_crossing(h_r, lambda, rho), b1));
                const double h_s = lambda / rho * factor;
                const double target_s = policy::source_metric(h_s, lambda, rho);
                hi = 2.0 * lambda;
                while (policy::relay_metric(hi, lambda) < target_s) {
                    hi *= 2.0;
                }
                const double b2
                    = roots::bisect([&](double h) { return policy::relay_metric(h, lambda) - target_s; }, lambda, hi).x;
                worst = std::max(worst, rel(policy::relay_crossing(h_s, lambda, rho), b2));
            }
        }
    }
    c.note("L1/L2 worst relative deviation from bisection %.3g", worst);
    c.require(worst < 1e-9, "L1/L2 deviation %.3g", worst);

    // Quadrature determinism.
    auto f = [](double x) { return std::log1p(x) * std::exp(-x / 3.0) / 3.0; };
    const auto q1 = special::integrate_semi_infinite_detailed(f, 0.2, special::QuadratureSpec{}.with_scale(3.0));
    const auto q2 = special::integrate_semi_infinite_detailed(f, 0.2, special::QuadratureSpec{}.with_scale(3.0));
    c.require(q1.value == q2.value && q1.panels == q2.panels, "quadrature not deterministic");

    // Special functions: two independent routes.
    double worst_e1 = 0.0;
    for (double x = 0.5; x <= 2.0; x += 0.05) {
        worst_e1 = std::max(worst_e1, rel(special::detail::e1_series(x),
                                          std::exp(-x) * special::detail::scaled_e1_continued_fraction(x)));
    }
    double worst_w = 0.0;
    for (double x = -0.36; x < 0.0; x += 0.01) {
        for (const auto br : {special::Branch::principal, special::Branch::lower}) {
            // Newton on w e^w = x from the returned value must not move it.
            const double w = special::lambert_w(br, x);
            const double step = (w * std::exp(w) - x) / (std::exp(w) * (w + 1.0));
            worst_w = std::max(worst_w, std::abs(step / w));
        }
    }
    c.note("E1 series vs continued fraction %.3g, Lambert W Newton step %.3g", worst_e1, worst_w);
    c.require(worst_e1 < 1e-12, "E1 routes disagree by %.3g", worst_e1);
    c.require(worst_w < 1e-12, "Lambert W residual step %.3g", worst_w);
    return c;
}

struct Curve {
    std::vector<double> delay;
    std::vector<double> tau;
};

// Linear interpolation in log(delay); NaN outside the sampled range.
double interpolate(const Curve& c, double delay)
{
    for (std::size_t i = 1; i < c.delay.size(); ++i) {
        if (delay >= c.delay[i - 1] && delay <= c.delay[i]) {
            const double t = (std::log(delay) - std::log(c.delay[i - 1])) / (std::log(c.delay[i]) - std::log(c.delay[i - 1]));
            return c.tau[i - 1] + t * (c.tau[i] - c.tau[i - 1]);
        }
    }
    return NAN;
}

Check ac9()
{
    Check c;
    const double tau_max = closed_form::tau_max_symmetric_rayleigh(1.0);
    const double rho_opt = solvers::solve_rho_opt(DecisionFunction::identity(), FadingModel::rayleigh(1.0),
                                                  FadingModel::rayleigh(1.0))
                               .rho;
    Curve starved;
    Curve limited;
    std::uint64_t seed = 901;
    for (const double target : {2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0}) {
        auto s = config(Protocol::starved, 1.0, 1.0, seed++);
        s.policy.rho = solvers::solve_rho_for_delay(target, 1.0, 1.0).rho;
        s.policy.decision = DecisionFunction::identity();
        const auto m = sim::run(s);
        starved.delay.push_back(m.mean_delay_fifo);
        starved.tau.push_back(m.throughput);
    }
    for (const double q_max : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0}) {
        auto s = config(Protocol::queue_limited, 1.0, 1.0, seed++);
        s.policy.rho = rho_opt;
        s.policy.q_max = q_max;
        s.policy.decision = DecisionFunction::identity();
        const auto m = sim::run(s);
        limited.delay.push_back(m.mean_delay_fifo);
        limited.tau.push_back(m.throughput);
    }
    int compared = 0;
    for (std::size_t i = 0; i < starved.delay.size(); ++i) {
        if (starved.delay[i] > 20.0) {
            continue;
        }
        const double ql = interpolate(limited, starved.delay[i]);
        if (std::isnan(ql)) {
            continue;
        }
        ++compared;
        c.note("delay %.3f: starved %.6f, queue-limited %.6f", starved.delay[i], starved.tau[i], ql);
        c.require(ql >= starved.tau[i], "queue-limited below starved at delay %.3f", starved.delay[i]);
    }
    c.require(compared >= 3, "only %d small-delay points overlap", compared);
    const double s_last = starved.tau.back();
    const double q_last = limited.tau.back();
    c.note("largest delays: starved %.2f slots -> %.6f, queue-limited %.2f slots -> %.6f, tau_max %.6f",
           starved.delay.back(), s_last, limited.delay.back(), q_last, tau_max);
    c.require(rel(s_last, tau_max) <= 0.02, "starved %.4f not within 2%% of tau_max", s_last);
    c.require(rel(q_last, tau_max) <= 0.02, "queue-limited %.4f not within 2%% of tau_max", q_last);
    return c;
}

} // namespace

int main()
{
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    const std::vector<std::pair<const char*, std::function<Check()>>> criteria = {
        {"AC1 symmetric optimum", ac1},        {"AC2 baseline closed forms", ac2},
        {"AC3 gain envelope", ac3},            {"AC4 asymmetric gain", ac4},
        {"AC5 power allocation", ac5},         {"AC6 delay bound", ac6},
        {"AC7 drop bound", ac7},               {"AC8 property suites", ac8},
        {"AC9 delay-limited comparison", ac9},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        std::printf("%s\n", name);
        Check c;
        try {
            c = run();
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s %s%s%s\n", c.ok ? "PASS" : "FAIL", name, c.detail.empty() ? "" : " -- ", c.detail.c_str());
        failed += c.ok ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
