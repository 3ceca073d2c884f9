#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bufrelay/channel.hpp"
#include "bufrelay/closed_form.hpp"
#include "bufrelay/errors.hpp"
#include "bufrelay/policies.hpp"
#include "bufrelay/roots.hpp"

namespace bufrelay::solvers {

using channel::FadingModel;
using closed_form::Route;
using policy::DecisionFunction;
using special::QuadratureSpec;

/// Residual magnitude below which a solver output counts as a root.
inline constexpr double kRootTolerance = 1e-7;

struct SolverResult {
    double rho = std::numeric_limits<double>::quiet_NaN();
    double lambda = std::numeric_limits<double>::quiet_NaN(); // power allocation only
    double tau = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> residuals;
    int iterations = 0;
    bool converged = false;
    std::string method;

    bool has_lambda() const { return !std::isnan(lambda); }

    bool residuals_within(double tol = kRootTolerance) const
    {
        return std::all_of(residuals.begin(), residuals.end(), [tol](double r) { return std::abs(r) < tol; });
    }
};

namespace detail {

// Brent on u = ln(x) over a bracket given in x.
template <class F>
roots::RootResult brent_log(F&& f, const roots::Bracket& br, double x_tol = 1e-13)
{
    roots::RootTolerance tol;
    tol.x_abs = x_tol;
    tol.x_rel = x_tol;
    tol.max_iter = 300;
    auto in_log = [&](double u) { return f(std::exp(u)); };
    auto res = roots::brent(in_log, std::log(br.lo), std::log(br.hi), br.f_lo, br.f_hi, tol);
    res.x = std::exp(res.x);
    return res;
}

} // namespace detail

/// Optimal threshold of the fixed-power rule: the root of threshold_residual.
/// The search starts on [0.01, 100] and widens tenfold up to [1e-6, 1e6].
inline SolverResult solve_rho_opt(const DecisionFunction& f, const FadingModel& ms, const FadingModel& mr,
                                  const QuadratureSpec& spec = {}, Route route = Route::automatic)
{
    auto residual = [&](double rho) { return closed_form::threshold_residual(f, rho, ms, mr, spec, route).value; };
    const auto br = roots::expand_bracket(residual, 0.01, 100.0, 10.0, 1e-6, 1e6);
    if (!br) {
        throw ConvergenceError("solve_rho_opt: threshold residual does not change sign on [1e-6, 1e6]");
    }
    const auto root = detail::brent_log(residual, *br);
    SolverResult out;
    out.rho = root.x;
    const auto lr = closed_form::link_rates(f, root.x, ms, mr, spec, route);
    out.tau = lr.departure;
    out.residuals = {lr.arrival - lr.departure};
    out.iterations = root.iterations;
    out.converged = root.converged && out.residuals_within();
    out.method = "brent";
    return out;
}

/// Tighter default tolerances for the power-allocation search: the power
/// residual is on the scale of gamma_bar, so relative quadrature error has to
/// stay well below 1e-7 / gamma_bar.
inline QuadratureSpec power_allocation_spec()
{
    QuadratureSpec spec;
    spec.abs_tol = 1e-12;
    spec.rel_tol = 1e-11;
    spec.max_subdivisions = 4000;
    return spec;
}

namespace detail {

struct LambdaSolve {
    double lambda;
    int iterations;
};

// lambda with mean power = gamma_bar for fixed rho; mean power decreases in lambda.
inline std::optional<LambdaSolve> lambda_for_power(double rho, const FadingModel& mhs, const FadingModel& mhr,
                                                   double gamma_bar, const QuadratureSpec& spec)
{
    auto power = [&](double lambda) {
        return closed_form::pa_residuals(lambda, rho, mhs, mhr, gamma_bar, spec).power;
    };
    const auto br = roots::expand_bracket(power, 1e-4, 1e2, 10.0, 1e-10, 1e6);
    if (!br || !(br->f_lo >= 0.0 && br->f_hi <= 0.0)) {
        return std::nullopt; // missing or wrongly oriented sign change
    }
    const auto root = brent_log(power, *br, 1e-14);
    if (!root.converged) {
        return std::nullopt;
    }
    return LambdaSolve{root.x, root.iterations};
}

inline SolverResult finish_pa(double lambda, double rho, const FadingModel& mhs, const FadingModel& mhr,
                              double gamma_bar, const QuadratureSpec& spec, int iterations, std::string method)
{
    const auto res = closed_form::pa_residuals(lambda, rho, mhs, mhr, gamma_bar, spec);
    SolverResult out;
    out.rho = rho;
    out.lambda = lambda;
    out.tau = res.tau;
    out.residuals = {res.rate, res.power};
    out.iterations = iterations;
    out.converged = out.residuals_within();
    out.method = std::move(method);
    return out;
}

} // namespace detail

/// (lambda, rho) on a log grid followed by damped Newton iterations with a
/// finite-difference Jacobian in (ln lambda, ln rho).
inline SolverResult solve_lambda_rho_grid(const FadingModel& mhs, const FadingModel& mhr, double gamma_bar,
                                          const QuadratureSpec& spec = power_allocation_spec(), int grid_points = 25)
{
    if (!(gamma_bar > 0.0)) {
        throw DomainError("solve_lambda_rho_grid: gamma_bar must be > 0");
    }
    auto eval = [&](double ul, double ur) {
        const auto r = closed_form::pa_residuals(std::exp(ul), std::exp(ur), mhs, mhr, gamma_bar, spec);
        return std::array<double, 2>{r.rate, r.power / gamma_bar};
    };
    auto norm2 = [](const std::array<double, 2>& v) { return v[0] * v[0] + v[1] * v[1]; };

    const double ul_lo = std::log(1e-4);
    const double ul_hi = std::log(1e2);
    const double ur_lo = std::log(1e-2);
    const double ur_hi = std::log(1e2);
    double best_ul = 0.0;
    double best_ur = 0.0;
    double best = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    for (int i = 0; i < grid_points; ++i) {
        for (int j = 0; j < grid_points; ++j) {
            const double ul = ul_lo + (ul_hi - ul_lo) * i / (grid_points - 1);
            const double ur = ur_lo + (ur_hi - ur_lo) * j / (grid_points - 1);
            const double n = norm2(eval(ul, ur));
            ++evaluations;
            if (n < best) {
                best = n;
                best_ul = ul;
                best_ur = ur;
            }
        }
    }

    double ul = best_ul;
    double ur = best_ur;
    auto fx = eval(ul, ur);
    constexpr double h = 1e-6;
    int it = 0;
    for (; it < 100; ++it) {
        if (std::abs(fx[0]) < 1e-10 && std::abs(fx[1]) * gamma_bar < 1e-10) {
            break;
        }
        const auto fl = eval(ul + h, ur);
        const auto fr = eval(ul, ur + h);
        const double j11 = (fl[0] - fx[0]) / h;
        const double j21 = (fl[1] - fx[1]) / h;
        const double j12 = (fr[0] - fx[0]) / h;
        const double j22 = (fr[1] - fx[1]) / h;
        const double det = j11 * j22 - j12 * j21;
        if (det == 0.0 || !std::isfinite(det)) {
            break;
        }
        const double dl = -(j22 * fx[0] - j12 * fx[1]) / det;
        const double dr = -(-j21 * fx[0] + j11 * fx[1]) / det;
        double step = 1.0;
        bool accepted = false;
        for (int k = 0; k < 30; ++k) {
            const double nl = ul + step * dl;
            const double nr = ur + step * dr;
            try {
                const auto fn = eval(nl, nr);
                if (norm2(fn) < norm2(fx)) {
                    ul = nl;
                    ur = nr;
                    fx = fn;
                    accepted = true;
                    break;
                }
            } catch (const DomainError&) {
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }
    }
    return detail::finish_pa(std::exp(ul), std::exp(ur), mhs, mhr, gamma_bar, spec, evaluations + 3 * it, "grid");
}

/// Joint (lambda, rho) of the power-allocation policy. Nested search: for each
/// trial rho the power condition is solved for lambda, and the rate condition
/// is then driven to zero in rho. Falls back to solve_lambda_rho_grid when a
/// bracket is missing or has the wrong orientation.
inline SolverResult solve_lambda_rho(const FadingModel& mhs, const FadingModel& mhr, double gamma_bar,
                                     const QuadratureSpec& spec = power_allocation_spec())
{
    if (!(gamma_bar > 0.0) || !std::isfinite(gamma_bar)) {
        throw DomainError("solve_lambda_rho: gamma_bar must be positive and finite");
    }
    policy::ensure_threshold_branches_validated();
    int inner_iterations = 0;
    bool nesting_ok = true;
    auto rate_at = [&](double rho) {
        const auto ls = detail::lambda_for_power(rho, mhs, mhr, gamma_bar, spec);
        if (!ls) {
            nesting_ok = false;
            return std::numeric_limits<double>::quiet_NaN();
        }
        inner_iterations += ls->iterations;
        return closed_form::pa_residuals(ls->lambda, rho, mhs, mhr, gamma_bar, spec).rate;
    };
    std::optional<roots::Bracket> br;
    try {
        br = roots::expand_bracket(rate_at, 0.01, 100.0, 10.0, 1e-6, 1e6);
    } catch (const DomainError&) {
        nesting_ok = false;
    }
    if (nesting_ok && br && br->f_lo < 0.0 && br->f_hi > 0.0) {
        const auto root = detail::brent_log(rate_at, *br, 1e-13);
        if (nesting_ok && root.converged) {
            const auto ls = detail::lambda_for_power(root.x, mhs, mhr, gamma_bar, spec);
            if (ls) {
                auto out = detail::finish_pa(ls->lambda, root.x, mhs, mhr, gamma_bar, spec,
                                             root.iterations + inner_iterations, "nested");
                if (out.converged) {
                    return out;
                }
            }
        }
    }
    auto out = solve_lambda_rho_grid(mhs, mhr, gamma_bar, spec);
    if (!out.converged) {
        throw ConvergenceError("solve_lambda_rho: neither the nested search nor the grid fallback converged");
    }
    return out;
}

/// Water level alpha of per-link water-filling with mean power gamma_bar on a Rayleigh link.
inline double water_level_rayleigh(double omega, double gamma_bar)
{
    if (!(gamma_bar > 0.0) || !(omega > 0.0)) {
        throw DomainError("water_level_rayleigh: omega and gamma_bar must be > 0");
    }
    auto excess = [&](double alpha) { return closed_form::water_filling_power_rayleigh(alpha, omega) - gamma_bar; };
    const auto br = roots::expand_bracket(excess, 1e-3, 1e3, 10.0, 1e-300, 1e300);
    if (!br) {
        throw ConvergenceError("water_level_rayleigh: no bracket");
    }
    return detail::brent_log(excess, *br, 1e-15).x;
}

/// Conventional buffered relaying (N/2 receive, N/2 transmit) where each link
/// water-fills its own power to mean gamma_bar.
inline double tau_conv2_pa_rayleigh(double omega_s, double omega_r, double gamma_bar)
{
    const double rate_s = closed_form::water_filling_rate_rayleigh(water_level_rayleigh(omega_s, gamma_bar), omega_s);
    const double rate_r = closed_form::water_filling_rate_rayleigh(water_level_rayleigh(omega_r, gamma_bar), omega_r);
    return 0.5 * std::min(rate_s, rate_r);
}

/// Threshold at which the load factor xi = E{(1-d)S}/E{dR} equals `xi`
/// (identity decision function, Rayleigh links). xi increases with rho.
inline SolverResult solve_rho_for_load(double xi, double omega_s, double omega_r)
{
    if (!(xi > 0.0)) {
        throw DomainError("solve_rho_for_load: xi must be > 0");
    }
    auto f = [&](double rho) {
        const auto m = closed_form::link_rates(DecisionFunction::identity(), rho, FadingModel::rayleigh(omega_s),
                                               FadingModel::rayleigh(omega_r));
        return m.arrival / m.departure - xi;
    };
    const auto br = roots::expand_bracket(f, 0.01, 100.0, 10.0, 1e-12, 1e12);
    if (!br) {
        throw InfeasibleError("solve_rho_for_load: load factor not attainable");
    }
    const auto root = detail::brent_log(f, *br, 1e-14);
    const auto lr = closed_form::link_rates(DecisionFunction::identity(), root.x, FadingModel::rayleigh(omega_s),
                                            FadingModel::rayleigh(omega_r));
    SolverResult out;
    out.rho = root.x;
    out.tau = lr.arrival;
    out.residuals = {lr.arrival / lr.departure - xi};
    out.iterations = root.iterations;
    out.converged = root.converged && out.residuals_within();
    out.method = "brent";
    return out;
}

/// Starved-buffer threshold: the rho below the optimum at which the delay
/// bound equals target_delay. rho is raised geometrically from 1e-6 rho_opt
/// toward rho_opt until the bound reaches the target, then the crossing is
/// refined by Brent. The residual is reported relative (bound/target - 1);
/// tau is E{(1-d)S}.
inline SolverResult solve_rho_for_delay(double target_delay, double omega_s, double omega_r,
                                        const QuadratureSpec& spec = {})
{
    if (!(target_delay > 0.0) || !std::isfinite(target_delay)) {
        throw DomainError("solve_rho_for_delay: target delay must be positive and finite");
    }
    const auto ms = FadingModel::rayleigh(omega_s);
    const auto mr = FadingModel::rayleigh(omega_r);
    const double rho_opt = solve_rho_opt(DecisionFunction::identity(), ms, mr, spec).rho;
    auto excess = [&](double rho) {
        const auto m = closed_form::delay_moments(rho, omega_s, omega_r, spec);
        if (!(m.xi < 1.0)) {
            return 1e300; // absorbing queue: bound is unbounded
        }
        return closed_form::delay_upper_bound(m) / target_delay - 1.0;
    };

    // Scan t = rho/rho_opt: geometric up to 1/2, then halving the gap to 1.
    std::vector<double> ts;
    for (double t = 1e-6; t < 0.5; t *= 1.5) {
        ts.push_back(t);
    }
    for (double gap = 0.5; gap > 1e-12; gap *= 0.5) {
        ts.push_back(1.0 - gap);
    }
    double prev_t = 0.0;
    double prev_f = 0.0;
    int scanned = 0;
    for (const double t : ts) {
        const double ft = excess(t * rho_opt);
        ++scanned;
        if (ft >= 0.0) {
            if (scanned == 1) {
                throw InfeasibleError("solve_rho_for_delay: target " + std::to_string(target_delay)
                                      + " slots is below the smallest attainable delay bound");
            }
            roots::RootTolerance tol;
            tol.x_rel = 1e-15;
            tol.x_abs = 1e-300;
            tol.max_iter = 300;
            const auto root = roots::brent(excess, prev_t * rho_opt, t * rho_opt, prev_f, ft, tol);
            const auto m = closed_form::delay_moments(root.x, omega_s, omega_r, spec);
            SolverResult out;
            out.rho = root.x;
            out.tau = m.m_s1;
            out.residuals = {closed_form::delay_upper_bound(m) / target_delay - 1.0};
            out.iterations = scanned + root.iterations;
            out.converged = root.converged && out.residuals_within();
            out.method = "scan+brent";
            return out;
        }
        prev_t = t;
        prev_f = ft;
    }
    throw InfeasibleError("solve_rho_for_delay: delay bound stays below the target up to rho_opt");
}

} // namespace bufrelay::solvers
