// Command-line front end: closed forms, solvers, single runs and figure sweeps.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bufrelay/bufrelay.hpp"
#include "bufrelay/experiments.hpp"

namespace {

using bufrelay::channel::FadingModel;
using bufrelay::policy::DecisionFunction;
using bufrelay::policy::Protocol;
using nlohmann::ordered_json;

struct Globals {
    std::uint64_t seed = 1;
    std::string out;
    bool no_timestamp = false;
    double tol = 1e-8;
    int jobs = 1;
};

struct Link {
    double omega_s = 1.0;
    double omega_r = 1.0;
};

void add_link(CLI::App* cmd, Link& link)
{
    cmd->add_option("--omega-s", link.omega_s, "mean SNR (or gain) of the source-relay link")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--omega-r", link.omega_r, "mean SNR (or gain) of the relay-destination link")
        ->check(CLI::PositiveNumber);
}

// Non-finite doubles become null in JSON.
ordered_json num(double x)
{
    if (!std::isfinite(x)) {
        return nullptr;
    }
    return x;
}

bufrelay::special::QuadratureSpec quadrature(const Globals& g)
{
    bufrelay::special::QuadratureSpec spec;
    spec.rel_tol = g.tol;
    spec.abs_tol = g.tol / 10.0;
    spec.validate();
    return spec;
}

void emit(const Globals& g, const std::string& text)
{
    if (g.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream os(g.out);
    if (!os) {
        throw bufrelay::ConfigError("cannot write '" + g.out + "'");
    }
    os << text;
}

void emit_json(const Globals& g, const ordered_json& j) { emit(g, j.dump(2) + "\n"); }

ordered_json solver_json(const bufrelay::solvers::SolverResult& r)
{
    ordered_json j;
    j["rho"] = num(r.rho);
    if (r.has_lambda()) {
        j["lambda"] = num(r.lambda);
    }
    j["tau"] = num(r.tau);
    j["residuals"] = ordered_json::array();
    for (const double v : r.residuals) {
        j["residuals"].push_back(num(v));
    }
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["method"] = r.method;
    return j;
}

int cmd_analyze(const Globals& g, const Link& link, const std::string& decision, double rho)
{
    namespace cf = bufrelay::closed_form;
    const auto f = DecisionFunction::from_name(decision);
    const auto ms = FadingModel::rayleigh(link.omega_s);
    const auto mr = FadingModel::rayleigh(link.omega_r);
    const auto spec = quadrature(g);
    ordered_json j;
    j["omega_s"] = link.omega_s;
    j["omega_r"] = link.omega_r;
    j["decision"] = std::string(f.name());
    j["rho"] = rho;
    j["tau_conv1"] = num(cf::tau_conv1_rayleigh(link.omega_s, link.omega_r));
    j["tau_conv2"] = num(cf::tau_conv2_rayleigh(link.omega_s, link.omega_r));
    const auto lr = cf::link_rates(f, rho, ms, mr, spec);
    j["arrival_rate"] = num(lr.arrival);
    j["departure_rate"] = num(lr.departure);
    j["tau"] = num(std::min(lr.arrival, lr.departure));
    j["absorbing"] = lr.arrival > lr.departure;
    if (f == DecisionFunction::identity()) {
        const auto m = cf::delay_moments(rho, link.omega_s, link.omega_r, spec);
        j["xi"] = num(m.xi);
        j["m_s2"] = num(m.m_s2);
        j["m_r2"] = num(m.m_r2);
        j["delay_bound"] = m.xi < 1.0 ? num(cf::delay_upper_bound(m)) : ordered_json(nullptr);
    }
    emit_json(g, j);
    return 0;
}

int cmd_solve(const Globals& g, const Link& link, const std::string& decision, std::optional<double> gamma)
{
    ordered_json j;
    j["omega_s"] = link.omega_s;
    j["omega_r"] = link.omega_r;
    bufrelay::solvers::SolverResult r;
    if (gamma) {
        j["gamma_bar"] = *gamma;
        r = bufrelay::solvers::solve_lambda_rho(FadingModel::rayleigh(link.omega_s),
                                                FadingModel::rayleigh(link.omega_r), *gamma);
        j["result"] = solver_json(r);
        j["tau_conv2_pa"] = num(bufrelay::solvers::tau_conv2_pa_rayleigh(link.omega_s, link.omega_r, *gamma));
    } else {
        const auto f = DecisionFunction::from_name(decision);
        j["decision"] = std::string(f.name());
        r = bufrelay::solvers::solve_rho_opt(f, FadingModel::rayleigh(link.omega_s),
                                             FadingModel::rayleigh(link.omega_r), quadrature(g));
        j["result"] = solver_json(r);
        j["tau_conv2"] = num(bufrelay::closed_form::tau_conv2_rayleigh(link.omega_s, link.omega_r));
    }
    emit_json(g, j);
    return r.converged ? 0 : 1;
}

int cmd_delay(const Globals& g, const Link& link, double target)
{
    const auto r = bufrelay::solvers::solve_rho_for_delay(target, link.omega_s, link.omega_r, quadrature(g));
    const auto m = bufrelay::closed_form::delay_moments(r.rho, link.omega_s, link.omega_r, quadrature(g));
    ordered_json j;
    j["omega_s"] = link.omega_s;
    j["omega_r"] = link.omega_r;
    j["target_delay"] = target;
    j["result"] = solver_json(r);
    j["xi"] = num(m.xi);
    j["tau_conv1"] = num(bufrelay::closed_form::tau_conv1_rayleigh(link.omega_s, link.omega_r));
    emit_json(g, j);
    return r.converged ? 0 : 1;
}

struct SimArgs {
    std::string protocol = "adaptive_fixed";
    std::string decision = "log_capacity";
    double rho = 1.0;
    double lambda = 0.0;
    double gamma_bar = 0.0;
    double q_max = std::numeric_limits<double>::infinity();
    std::int64_t conv_frame = 0;
    std::int64_t slots = 1'000'000;
    std::int64_t warmup = 10'000;
    std::string trace;
};

int cmd_simulate(const Globals& g, const Link& link, const SimArgs& a)
{
    bufrelay::sim::SimConfig c;
    c.policy.protocol = bufrelay::policy::protocol_from_name(a.protocol);
    c.policy.decision = DecisionFunction::from_name(a.decision);
    c.policy.rho = a.rho;
    c.policy.lambda = a.lambda;
    c.policy.gamma_bar = a.gamma_bar;
    c.policy.q_max = a.q_max;
    c.policy.conv_frame = a.conv_frame;
    c.model_s = FadingModel::rayleigh(link.omega_s);
    c.model_r = FadingModel::rayleigh(link.omega_r);
    c.slots = a.slots;
    c.warmup_slots = a.warmup;
    c.seed = g.seed;
    c.record_trace = !a.trace.empty();
    const auto run = bufrelay::sim::run_with_trace(c);
    if (!a.trace.empty()) {
        std::ofstream os(a.trace);
        if (!os) {
            throw bufrelay::ConfigError("cannot write trace '" + a.trace + "'");
        }
        bufrelay::sim::write_trace_csv(os, run.trace);
    }
    const auto& m = run.metrics;
    ordered_json j;
    j["protocol"] = a.protocol;
    j["seed"] = g.seed;
    j["slots"] = a.slots;
    j["measured_slots"] = m.measured_slots;
    j["throughput"] = num(m.throughput);
    j["throughput_stderr"] = num(m.throughput_stderr);
    j["arrival_rate"] = num(m.arrival_rate);
    j["offered_rate"] = num(m.offered_rate);
    j["mean_queue"] = num(m.mean_queue);
    j["mean_delay_fifo"] = num(m.mean_delay_fifo);
    j["mean_delay_little"] = num(m.mean_delay_little);
    j["drop_prob"] = num(m.drop_prob);
    j["overflow_event_prob"] = num(m.overflow_event_prob);
    j["mean_power"] = num(m.mean_power);
    j["source_slots"] = m.source_slots;
    j["relay_slots"] = m.relay_slots;
    j["relay_idle_slots"] = m.relay_idle_slots;
    j["idle_slots"] = m.idle_slots;
    emit_json(g, j);
    return 0;
}

int cmd_sweep(const Globals& g, const std::string& config, bool jobs_given, bool tol_given,
              const std::string& golden, double golden_tol)
{
    namespace ex = bufrelay::experiments;
    auto plan = ex::parse_config(config);
    if (jobs_given) {
        plan.jobs = g.jobs;
    }
    if (tol_given) {
        plan.tol = g.tol;
    }
    if (plan.seeds.size() == 1 && g.seed != 1) {
        plan.seeds = {g.seed};
    }
    plan.validate();
    const auto table = ex::run_sweep(plan);
    std::ostringstream os;
    ex::write_csv(os, table, !g.no_timestamp);
    Globals out = g;
    if (out.out.empty()) {
        out.out = plan.output;
    }
    emit(out, os.str());
    int status = 0;
    if (const auto failed = table.failures(); failed > 0) {
        std::fprintf(stderr, "sweep: %zu of %zu grid points failed\n", failed, table.rows.size());
        status = 1;
    }
    if (!golden.empty()) {
        std::ifstream in(golden);
        if (!in) {
            throw bufrelay::ConfigError("cannot open golden file '" + golden + "'");
        }
        const auto diffs = ex::compare_tables(table, ex::read_csv(in), golden_tol);
        for (const auto& d : diffs) {
            std::fprintf(stderr, "golden: %s\n", d.c_str());
        }
        if (!diffs.empty()) {
            status = 1;
        }
    }
    return status;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Buffer-aided relaying: closed forms, solvers, simulation and sweeps"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "master random seed");
    app.add_option("--out", g.out, "output file (default: stdout)");
    app.add_flag("--no-timestamp", g.no_timestamp, "omit the timestamp comment line in CSV output");
    auto* tol_opt = app.add_option("--tol", g.tol, "relative quadrature tolerance")->check(CLI::PositiveNumber);
    auto* jobs_opt = app.add_option("--jobs", g.jobs, "concurrent grid points in a sweep")->check(CLI::PositiveNumber);

    Link link;
    std::string decision = "log_capacity";
    double rho = 1.0;

    auto* analyze = app.add_subcommand("analyze", "closed-form quantities at one operating point");
    add_link(analyze, link);
    analyze->add_option("--decision", decision, "identity or log_capacity");
    analyze->add_option("--rho", rho, "decision threshold")->check(CLI::PositiveNumber);

    std::optional<double> gamma;
    auto* solve = app.add_subcommand("solve", "optimal threshold, or (lambda, rho) with --gamma");
    add_link(solve, link);
    solve->add_option("--decision", decision, "identity or log_capacity");
    solve->add_option("--gamma", gamma, "average power budget (enables power allocation)")
        ->check(CLI::PositiveNumber);

    SimArgs sa;
    auto* simulate = app.add_subcommand("simulate", "single slot-level simulation");
    add_link(simulate, link);
    simulate->add_option("--protocol", sa.protocol, "conv_no_buffer, conv_buffer, adaptive_fixed, adaptive_pa, "
                                                    "starved or queue_limited");
    simulate->add_option("--decision", sa.decision, "identity or log_capacity");
    simulate->add_option("--rho", sa.rho, "decision threshold");
    simulate->add_option("--lambda", sa.lambda, "power-allocation multiplier");
    simulate->add_option("--gamma", sa.gamma_bar, "average power budget");
    simulate->add_option("--q-max", sa.q_max, "buffer size in bits");
    simulate->add_option("--conv-frame", sa.conv_frame, "conv_buffer frame length in slots (0: whole run)");
    simulate->add_option("--slots", sa.slots, "number of slots");
    simulate->add_option("--warmup", sa.warmup, "slots discarded before measuring");
    simulate->add_option("--trace", sa.trace, "write a per-slot trace CSV here");

    std::string config;
    std::string golden;
    double golden_tol = 1e-9;
    auto* sweep = app.add_subcommand("sweep", "run a figure sweep from a YAML config");
    sweep->add_option("config", config, "config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--golden", golden, "compare the table with this CSV");
    sweep->add_option("--golden-tol", golden_tol, "relative tolerance of the golden comparison");

    double target = 10.0;
    auto* delay = app.add_subcommand("delay", "threshold whose delay bound meets a target");
    add_link(delay, link);
    delay->add_option("--target", target, "target mean delay in slots")->required()->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) {
            return cmd_analyze(g, link, decision, rho);
        }
        if (*solve) {
            return cmd_solve(g, link, decision, gamma);
        }
        if (*simulate) {
            return cmd_simulate(g, link, sa);
        }
        if (*sweep) {
            return cmd_sweep(g, config, jobs_opt->count() > 0, tol_opt->count() > 0, golden, golden_tol);
        }
        if (*delay) {
            return cmd_delay(g, link, target);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
