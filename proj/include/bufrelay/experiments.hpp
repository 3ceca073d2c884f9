#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "bufrelay/channel.hpp"
#include "bufrelay/closed_form.hpp"
#include "bufrelay/errors.hpp"
#include "bufrelay/policies.hpp"
#include "bufrelay/simulator.hpp"
#include "bufrelay/solvers.hpp"

namespace bufrelay::experiments {

using channel::FadingModel;
using policy::DecisionFunction;
using policy::Protocol;

inline constexpr std::array<std::string_view, 8> kExperimentIds = {"fig2", "fig3", "fig4", "fig5",
                                                                     "fig6", "fig7", "fig8", "custom"};

/// A figure sweep or a custom grid. Unused axes are ignored by the experiment.
struct SweepPlan {
    std::string experiment = "fig2";

    // fig2/fig3: S-R mean SNRs and R-D/S-R ratios; both decision functions unless restricted.
    std::vector<double> omega_s = {1.0};
    std::vector<double> omega_r;  // fig5-fig8, custom: paired with omega_s (or broadcast)
    std::vector<double> ratio = {0.01, 0.0316227766017, 0.1, 0.316227766017, 1.0, 3.16227766017, 10.0,
                                 31.6227766017, 100.0};
    std::vector<std::string> decision = {"identity", "log_capacity"};

    // fig4: mean channel gains and power budgets in dB.
    double omega_s_bar = 0.1;
    double omega_r_bar = 1.9;
    std::vector<double> gamma_db = {-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0};

    // fig5-fig8: delay targets (slots), buffer sizes (bits), conventional frame lengths (slots).
    std::vector<double> target_delay = {2.0, 5.0, 10.0, 20.0, 50.0, 100.0};
    std::vector<double> q_max = {2.0, 5.0, 10.0, 20.0, 50.0, 100.0};
    std::vector<double> conv_frame = {2.0, 4.0, 10.0, 20.0, 50.0, 100.0};

    // custom
    std::string protocol = "adaptive_fixed";
    std::vector<double> rho; // empty: optimal threshold
    double lambda = 0.0;
    double gamma_bar = 0.0;

    // Simulation (0 slots: analytics only).
    std::int64_t slots = 1'000'000;
    std::int64_t warmup = 10'000;
    std::vector<std::uint64_t> seeds = {1};

    double tol = 1e-8; // quadrature relative tolerance
    int jobs = 1;
    std::string output;

    void validate() const
    {
        if (std::find(kExperimentIds.begin(), kExperimentIds.end(), experiment) == kExperimentIds.end()) {
            throw ConfigError("experiment: unknown id '" + experiment + "'");
        }
        auto positive = [](const std::vector<double>& v, const char* key) {
            for (const double x : v) {
                if (!(x > 0.0) || !std::isfinite(x)) {
                    throw ConfigError(std::string(key) + ": values must be positive and finite");
                }
            }
        };
        auto nonempty = [](const auto& v, const char* key) {
            if (v.empty()) {
                throw ConfigError(std::string(key) + ": grid must be nonempty");
            }
        };
        positive(omega_s, "omega_s");
        positive(omega_r, "omega_r");
        positive(ratio, "ratio");
        positive(target_delay, "target_delay");
        for (const double q : q_max) {
            if (!(q > 0.0)) {
                throw ConfigError("q_max: values must be positive (.inf allowed)");
            }
        }
        positive(conv_frame, "conv_frame");
        positive(rho, "rho");
        if (!(omega_s_bar > 0.0) || !(omega_r_bar > 0.0)) {
            throw ConfigError("omega_s_bar, omega_r_bar: must be positive");
        }
        for (const auto& d : decision) {
            (void)DecisionFunction::from_name(d);
        }
        nonempty(omega_s, "omega_s");
        if (!omega_r.empty() && omega_r.size() != omega_s.size() && omega_r.size() != 1 && omega_s.size() != 1) {
            throw ConfigError("omega_r: must have one entry or as many entries as omega_s");
        }
        if (experiment == "fig2" || experiment == "fig3") {
            nonempty(ratio, "ratio");
            nonempty(decision, "decision");
        } else if (experiment == "fig4") {
            nonempty(gamma_db, "gamma_db");
        } else if (experiment == "fig5" || experiment == "fig6") {
            nonempty(target_delay, "target_delay");
        } else if (experiment == "fig7") {
            nonempty(target_delay, "target_delay");
            nonempty(q_max, "q_max");
        } else if (experiment == "fig8") {
            nonempty(target_delay, "target_delay");
            nonempty(q_max, "q_max");
            nonempty(conv_frame, "conv_frame");
            for (const double n : conv_frame) {
                if (n != std::floor(n) || static_cast<std::int64_t>(n) % 2 != 0) {
                    throw ConfigError("conv_frame: frame lengths must be even integers");
                }
            }
        } else if (experiment == "custom") {
            const Protocol p = policy::protocol_from_name(protocol);
            if (p == Protocol::adaptive_pa && (!(lambda > 0.0) || !(gamma_bar > 0.0) || rho.empty())) {
                throw ConfigError("custom adaptive_pa: lambda, gamma_bar and rho are required");
            }
        }
        if (slots < 0) {
            throw ConfigError("slots: must be >= 0");
        }
        if (slots > 0 && (warmup < 0 || warmup >= slots)) {
            throw ConfigError("warmup: must lie in [0, slots)");
        }
        nonempty(seeds, "seeds");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
            throw ConfigError("seeds: seeds must be distinct per replication");
        }
        if (!(tol > 0.0) || tol >= 1e-2) {
            throw ConfigError("tol: must lie in (0, 1e-2)");
        }
        if (jobs < 1) {
            throw ConfigError("jobs: must be >= 1");
        }
    }

    special::QuadratureSpec quadrature() const
    {
        special::QuadratureSpec spec;
        spec.rel_tol = tol;
        spec.abs_tol = tol / 10.0;
        return spec;
    }

    /// omega_r for the k-th omega_s entry (paired lists or broadcast).
    double omega_r_at(std::size_t k) const
    {
        if (omega_r.empty()) {
            return omega_s[k];
        }
        return omega_r.size() == 1 ? omega_r[0] : omega_r[k];
    }

    std::size_t link_pairs() const { return std::max(omega_s.size(), omega_r.size()); }

    double omega_s_at(std::size_t k) const { return omega_s.size() == 1 ? omega_s[0] : omega_s[k]; }
};

namespace detail {

[[noreturn]] inline void fail_at(const YAML::Node& node, const std::string& msg)
{
    throw ConfigError("line " + std::to_string(node.Mark().line + 1) + ": " + msg);
}

template <class T>
T scalar(const YAML::Node& node, const std::string& key)
{
    if (!node.IsScalar()) {
        fail_at(node, key + ": expected a scalar");
    }
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        fail_at(node, key + ": wrong type for value '" + node.Scalar() + "'");
    }
}

template <class T>
std::vector<T> list(const YAML::Node& node, const std::string& key)
{
    if (node.IsScalar()) {
        return {scalar<T>(node, key)};
    }
    if (!node.IsSequence()) {
        fail_at(node, key + ": expected a value or a list");
    }
    std::vector<T> out;
    for (const auto& item : node) {
        out.push_back(scalar<T>(item, key));
    }
    return out;
}

} // namespace detail

/// Reads a flat YAML mapping of typed keys into a validated plan.
inline SweepPlan parse_config_text(const std::string& text)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("parse error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root.IsMap()) {
        throw ConfigError("config: top level must be a key-value mapping");
    }
    SweepPlan plan;
    bool have_seeds = false;
    std::int64_t replications = -1;
    YAML::Node replications_node;
    for (const auto& kv : root) {
        const std::string key = kv.first.as<std::string>();
        const YAML::Node& v = kv.second;
        using detail::list;
        using detail::scalar;
        if (key == "experiment") {
            plan.experiment = scalar<std::string>(v, key);
        } else if (key == "omega_s") {
            plan.omega_s = list<double>(v, key);
        } else if (key == "omega_r") {
            plan.omega_r = list<double>(v, key);
        } else if (key == "ratio") {
            plan.ratio = list<double>(v, key);
        } else if (key == "decision") {
            plan.decision = list<std::string>(v, key);
        } else if (key == "omega_s_bar") {
            plan.omega_s_bar = scalar<double>(v, key);
        } else if (key == "omega_r_bar") {
            plan.omega_r_bar = scalar<double>(v, key);
        } else if (key == "gamma_db") {
            plan.gamma_db = list<double>(v, key);
        } else if (key == "target_delay") {
            plan.target_delay = list<double>(v, key);
        } else if (key == "q_max") {
            plan.q_max = list<double>(v, key);
        } else if (key == "conv_frame") {
            plan.conv_frame = list<double>(v, key);
        } else if (key == "protocol") {
            plan.protocol = scalar<std::string>(v, key);
        } else if (key == "rho") {
            plan.rho = list<double>(v, key);
        } else if (key == "lambda") {
            plan.lambda = scalar<double>(v, key);
        } else if (key == "gamma_bar") {
            plan.gamma_bar = scalar<double>(v, key);
        } else if (key == "slots") {
            plan.slots = scalar<std::int64_t>(v, key);
        } else if (key == "warmup") {
            plan.warmup = scalar<std::int64_t>(v, key);
        } else if (key == "seeds") {
            plan.seeds = list<std::uint64_t>(v, key);
            have_seeds = true;
        } else if (key == "replications") {
            replications = scalar<std::int64_t>(v, key);
            replications_node = v;
        } else if (key == "tol") {
            plan.tol = scalar<double>(v, key);
        } else if (key == "jobs") {
            plan.jobs = scalar<int>(v, key);
        } else if (key == "output") {
            plan.output = scalar<std::string>(v, key);
        } else {
            detail::fail_at(kv.first, "unknown key '" + key + "'");
        }
    }
    if (replications >= 0) {
        if (replications < 1) {
            detail::fail_at(replications_node, "replications: must be >= 1");
        }
        if (!have_seeds) {
            plan.seeds.clear();
            for (std::int64_t k = 1; k <= replications; ++k) {
                plan.seeds.push_back(static_cast<std::uint64_t>(k));
            }
        } else if (static_cast<std::size_t>(replications) != plan.seeds.size()) {
            detail::fail_at(replications_node, "replications: does not match the number of seeds");
        }
    }
    plan.validate();
    return plan;
}

inline SweepPlan parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Result tables.

inline std::string format_number(double x)
{
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

struct Table {
    std::vector<std::string> columns; // the last column is always "error"
    std::vector<std::vector<std::string>> rows;

    std::size_t failures() const
    {
        return static_cast<std::size_t>(
            std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.back().empty(); }));
    }
};

/// Fills one output row by column name.
class RowBuilder {
public:
    explicit RowBuilder(const std::vector<std::string>& columns) : columns_(&columns), cells_(columns.size()) {}

    void set(const std::string& column, double value) { set_text(column, format_number(value)); }

    void set_text(const std::string& column, std::string value)
    {
        const auto it = std::find(columns_->begin(), columns_->end(), column);
        if (it == columns_->end()) {
            throw std::logic_error("RowBuilder: no column '" + column + "'");
        }
        cells_[static_cast<std::size_t>(it - columns_->begin())] = std::move(value);
    }

    std::vector<std::string> take() { return std::move(cells_); }

private:
    const std::vector<std::string>* columns_;
    std::vector<std::string> cells_;
};

inline std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else if (c == '\n') {
            out += ' ';
        } else {
            out += c;
        }
    }
    return out + "\"";
}

inline void write_csv(std::ostream& os, const Table& t, bool timestamp)
{
    if (timestamp) {
        const std::time_t now = std::time(nullptr);
        char buf[64];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        os << "# generated " << buf << '\n';
    }
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        os << (c ? "," : "") << t.columns[c];
    }
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            os << (c ? "," : "") << csv_escape(row[c]);
        }
        os << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

inline Table read_csv(std::istream& is)
{
    Table t;
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (header) {
            t.columns = std::move(cells);
            header = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

/// Cell-by-cell comparison with a golden table: numbers within rel_tol
/// (relative, with an absolute floor of rel_tol), everything else exactly.
/// Returns human-readable differences; empty means the tables match.
inline std::vector<std::string> compare_tables(const Table& actual, const Table& golden, double rel_tol)
{
    std::vector<std::string> diffs;
    if (actual.columns != golden.columns) {
        diffs.emplace_back("column sets differ");
        return diffs;
    }
    if (actual.rows.size() != golden.rows.size()) {
        diffs.push_back("row count " + std::to_string(actual.rows.size()) + " vs golden "
                        + std::to_string(golden.rows.size()));
        return diffs;
    }
    for (std::size_t r = 0; r < actual.rows.size(); ++r) {
        for (std::size_t c = 0; c < actual.columns.size(); ++c) {
            const std::string& a = actual.rows[r][c];
            const std::string& g = golden.rows[r][c];
            if (a == g) {
                continue;
            }
            char* end_a = nullptr;
            char* end_g = nullptr;
            const double x = std::strtod(a.c_str(), &end_a);
            const double y = std::strtod(g.c_str(), &end_g);
            const bool numeric = !a.empty() && !g.empty() && *end_a == '\0' && *end_g == '\0';
            if (numeric && std::abs(x - y) <= rel_tol * std::max(1.0, std::abs(y))) {
                continue;
            }
            diffs.push_back("row " + std::to_string(r + 1) + " column " + actual.columns[c] + ": " + a
                            + " vs golden " + g);
        }
    }
    return diffs;
}

// ---------------------------------------------------------------------------
// Sweeps.

/// Column set of each experiment; depends only on the id.
inline std::vector<std::string> columns_for(const std::string& experiment)
{
    std::vector<std::string> cols;
    if (experiment == "fig2" || experiment == "fig3") {
        cols = {"omega_s", "ratio", "decision", "rho_opt", "tau_max", "tau_conv2", "gain", "sim_tau", "abs_dev",
                "rel_dev"};
    } else if (experiment == "fig4") {
        cols = {"gamma_db",    "gamma",       "lambda",       "rho",          "tau_pa",  "tau_conv2_pa",
                "gain_pa",     "tau_fixed",   "tau_conv2",    "tau_conv1",    "sim_tau", "sim_power",
                "abs_dev",     "rel_dev"};
    } else if (experiment == "fig5" || experiment == "fig6") {
        cols = {"omega_s", "omega_r",   "target_delay", "rho",       "rho_opt", "xi",       "tau_starve",
                "tau_conv1", "ratio",   "sim_tau",      "sim_delay", "sim_ratio", "delay_within_bound"};
    } else if (experiment == "fig7") {
        cols = {"omega_s",      "omega_r",       "target_delay", "rho",           "q_max",
                "drop_prob",    "overflow_prob", "mean_queue",   "markov_bound",  "within_bound",
                "sim_tau",      "tau_lower_bound"};
    } else if (experiment == "fig8") {
        cols = {"omega_s", "omega_r", "scheme", "parameter", "sim_delay", "sim_tau", "tau_conv1", "tau_max",
                "tau_norm", "tau_max_norm"};
    } else {
        cols = {"protocol", "omega_s", "omega_r", "rho", "q_max", "analytic_tau", "sim_tau", "abs_dev", "rel_dev",
                "sim_arrival", "sim_delay_fifo", "sim_delay_little", "sim_drop", "sim_power"};
    }
    cols.emplace_back("error");
    return cols;
}

namespace detail {

// Seed of replication `rep` at grid point `index`: an independent substream.
inline std::uint64_t point_seed(std::uint64_t master, std::size_t index)
{
    auto rs = channel::RandomStream::substream(master, index);
    return rs.next_u64();
}

// Runs every replication of `base` at grid point `index` and averages.
inline sim::Metrics simulate(const SweepPlan& plan, sim::SimConfig base, std::size_t index)
{
    sim::Metrics acc;
    const double n = static_cast<double>(plan.seeds.size());
    for (const auto seed : plan.seeds) {
        base.seed = point_seed(seed, index);
        const auto m = sim::run(base);
        acc.throughput += m.throughput / n;
        acc.arrival_rate += m.arrival_rate / n;
        acc.mean_queue += m.mean_queue / n;
        acc.mean_delay_fifo = (std::isnan(acc.mean_delay_fifo) ? 0.0 : acc.mean_delay_fifo) + m.mean_delay_fifo / n;
        acc.mean_delay_little
            = (std::isnan(acc.mean_delay_little) ? 0.0 : acc.mean_delay_little) + m.mean_delay_little / n;
        acc.drop_prob += m.drop_prob / n;
        acc.overflow_event_prob += m.overflow_event_prob / n;
        acc.mean_power += m.mean_power / n;
    }
    return acc;
}

inline sim::SimConfig base_config(const SweepPlan& plan, Protocol protocol, double omega_s, double omega_r)
{
    sim::SimConfig c;
    c.policy.protocol = protocol;
    c.model_s = FadingModel::rayleigh(omega_s);
    c.model_r = FadingModel::rayleigh(omega_r);
    c.slots = plan.slots;
    c.warmup_slots = plan.warmup;
    return c;
}

inline void set_deviation(RowBuilder& row, double analytic, double simulated)
{
    row.set("abs_dev", simulated - analytic);
    row.set("rel_dev", (simulated - analytic) / analytic);
}

using Task = std::function<void(RowBuilder&, std::size_t)>;

inline std::vector<Task> tasks_fig2(const SweepPlan& plan)
{
    std::vector<Task> tasks;
    for (const double os : plan.omega_s) {
        for (const double ratio : plan.ratio) {
            for (const auto& name : plan.decision) {
                tasks.push_back([&plan, os, ratio, name](RowBuilder& row, std::size_t index) {
                    row.set("omega_s", os);
                    row.set("ratio", ratio);
                    row.set_text("decision", name);
                    const auto f = DecisionFunction::from_name(name);
                    const double orr = os * ratio;
                    const auto res = solvers::solve_rho_opt(f, FadingModel::rayleigh(os), FadingModel::rayleigh(orr),
                                                            plan.quadrature());
                    if (!res.converged) {
                        throw ConvergenceError("rho_opt did not converge");
                    }
                    const double conv2 = closed_form::tau_conv2_rayleigh(os, orr);
                    row.set("rho_opt", res.rho);
                    row.set("tau_max", res.tau);
                    row.set("tau_conv2", conv2);
                    row.set("gain", res.tau / conv2);
                    if (plan.slots > 0) {
                        auto c = base_config(plan, Protocol::adaptive_fixed, os, orr);
                        c.policy.rho = res.rho;
                        c.policy.decision = f;
                        const auto m = simulate(plan, c, index);
                        row.set("sim_tau", m.throughput);
                        set_deviation(row, res.tau, m.throughput);
                    }
                });
            }
        }
    }
    return tasks;
}

inline std::vector<Task> tasks_fig4(const SweepPlan& plan)
{
    std::vector<Task> tasks;
    for (const double gdb : plan.gamma_db) {
        tasks.push_back([&plan, gdb](RowBuilder& row, std::size_t index) {
            const double gamma = std::pow(10.0, gdb / 10.0);
            const double a = plan.omega_s_bar;
            const double b = plan.omega_r_bar;
            row.set("gamma_db", gdb);
            row.set("gamma", gamma);
            // Without power allocation every slot uses power gamma: SNR means gamma * gain means.
            const auto fixed = solvers::solve_rho_opt(DecisionFunction::log_capacity(), FadingModel::rayleigh(gamma * a),
                                                      FadingModel::rayleigh(gamma * b), plan.quadrature());
            row.set("tau_fixed", fixed.tau);
            row.set("tau_conv2", closed_form::tau_conv2_rayleigh(gamma * a, gamma * b));
            row.set("tau_conv1", closed_form::tau_conv1_rayleigh(gamma * a, gamma * b));
            const double conv_pa = solvers::tau_conv2_pa_rayleigh(a, b, gamma);
            row.set("tau_conv2_pa", conv_pa);
            const auto pa = solvers::solve_lambda_rho(FadingModel::rayleigh(a), FadingModel::rayleigh(b), gamma);
            row.set("lambda", pa.lambda);
            row.set("rho", pa.rho);
            row.set("tau_pa", pa.tau);
            row.set("gain_pa", pa.tau / conv_pa);
            if (plan.slots > 0) {
                auto c = base_config(plan, Protocol::adaptive_pa, a, b);
                c.policy.lambda = pa.lambda;
                c.policy.rho = pa.rho;
                c.policy.gamma_bar = gamma;
                const auto m = simulate(plan, c, index);
                row.set("sim_tau", m.throughput);
                row.set("sim_power", m.mean_power);
                set_deviation(row, pa.tau, m.throughput);
            }
        });
    }
    return tasks;
}

inline std::vector<Task> tasks_fig5(const SweepPlan& plan)
{
    std::vector<Task> tasks;
    for (std::size_t k = 0; k < plan.link_pairs(); ++k) {
        for (const double target : plan.target_delay) {
            tasks.push_back([&plan, k, target](RowBuilder& row, std::size_t index) {
                const double os = plan.omega_s_at(k);
                const double orr = plan.omega_r_at(k);
                row.set("omega_s", os);
                row.set("omega_r", orr);
                row.set("target_delay", target);
                const double conv1 = closed_form::tau_conv1_rayleigh(os, orr);
                row.set("tau_conv1", conv1);
                const auto opt = solvers::solve_rho_opt(DecisionFunction::identity(), FadingModel::rayleigh(os),
                                                        FadingModel::rayleigh(orr), plan.quadrature());
                row.set("rho_opt", opt.rho);
                const auto res = solvers::solve_rho_for_delay(target, os, orr, plan.quadrature());
                const auto m = closed_form::delay_moments(res.rho, os, orr, plan.quadrature());
                row.set("rho", res.rho);
                row.set("xi", m.xi);
                row.set("tau_starve", res.tau);
                row.set("ratio", res.tau / conv1);
                if (plan.slots > 0) {
                    auto c = base_config(plan, Protocol::starved, os, orr);
                    c.policy.rho = res.rho;
                    c.policy.decision = DecisionFunction::identity();
                    const auto sm = simulate(plan, c, index);
                    row.set("sim_tau", sm.throughput);
                    row.set("sim_delay", sm.mean_delay_fifo);
                    row.set("sim_ratio", sm.throughput / conv1);
                    row.set_text("delay_within_bound", sm.mean_delay_fifo <= target ? "1" : "0");
                }
            });
        }
    }
    return tasks;
}

inline std::vector<Task> tasks_fig7(const SweepPlan& plan)
{
    std::vector<Task> tasks;
    for (std::size_t k = 0; k < plan.link_pairs(); ++k) {
        for (const double target : plan.target_delay) {
            for (const double qmax : plan.q_max) {
                tasks.push_back([&plan, k, target, qmax](RowBuilder& row, std::size_t index) {
                    const double os = plan.omega_s_at(k);
                    const double orr = plan.omega_r_at(k);
                    row.set("omega_s", os);
                    row.set("omega_r", orr);
                    row.set("target_delay", target);
                    row.set("q_max", qmax);
                    const auto res = solvers::solve_rho_for_delay(target, os, orr, plan.quadrature());
                    row.set("rho", res.rho);
                    if (plan.slots == 0) {
                        return;
                    }
                    auto c = base_config(plan, Protocol::starved, os, orr);
                    c.policy.rho = res.rho;
                    c.policy.decision = DecisionFunction::identity();
                    // Unlimited buffer: overflow frequency of the level q_max and E{Q}.
                    c.overflow_threshold = qmax;
                    const auto open = simulate(plan, c, index);
                    const double bound = closed_form::drop_probability_bound(open.mean_queue, qmax);
                    row.set("overflow_prob", open.overflow_event_prob);
                    row.set("mean_queue", open.mean_queue);
                    row.set("markov_bound", bound);
                    row.set_text("within_bound", open.overflow_event_prob <= bound ? "1" : "0");
                    row.set("tau_lower_bound", closed_form::finite_buffer_throughput(res.tau, bound));
                    // Buffer of q_max bits: fraction of bits dropped.
                    c.policy.q_max = qmax;
                    c.overflow_threshold = std::numeric_limits<double>::quiet_NaN();
                    const auto finite = simulate(plan, c, index);
                    row.set("drop_prob", finite.drop_prob);
                    row.set("sim_tau", finite.throughput);
                });
            }
        }
    }
    return tasks;
}

inline std::vector<Task> tasks_fig8(const SweepPlan& plan)
{
    std::vector<Task> tasks;
    auto common = [&plan](RowBuilder& row, std::size_t k, const char* scheme, double parameter) {
        const double os = plan.omega_s_at(k);
        const double orr = plan.omega_r_at(k);
        row.set("omega_s", os);
        row.set("omega_r", orr);
        row.set_text("scheme", scheme);
        row.set("parameter", parameter);
        const double conv1 = closed_form::tau_conv1_rayleigh(os, orr);
        const auto opt = solvers::solve_rho_opt(DecisionFunction::identity(), FadingModel::rayleigh(os),
                                                FadingModel::rayleigh(orr), plan.quadrature());
        row.set("tau_conv1", conv1);
        row.set("tau_max", opt.tau);
        row.set("tau_max_norm", opt.tau / conv1);
        return std::array<double, 3>{conv1, opt.rho, opt.tau};
    };
    auto finish = [&plan](RowBuilder& row, const sim::SimConfig& c, std::size_t index, double conv1) {
        if (plan.slots == 0) {
            return;
        }
        const auto m = simulate(plan, c, index);
        row.set("sim_delay", m.mean_delay_fifo);
        row.set("sim_tau", m.throughput);
        row.set("tau_norm", m.throughput / conv1);
    };
    for (std::size_t k = 0; k < plan.link_pairs(); ++k) {
        for (const double target : plan.target_delay) {
            tasks.push_back([&plan, k, target, common, finish](RowBuilder& row, std::size_t index) {
                const auto base = common(row, k, "starved", target);
                const auto res = solvers::solve_rho_for_delay(target, plan.omega_s_at(k), plan.omega_r_at(k),
                                                              plan.quadrature());
                auto c = base_config(plan, Protocol::starved, plan.omega_s_at(k), plan.omega_r_at(k));
                c.policy.rho = res.rho;
                c.policy.decision = DecisionFunction::identity();
                finish(row, c, index, base[0]);
            });
        }
        for (const double qmax : plan.q_max) {
            tasks.push_back([&plan, k, qmax, common, finish](RowBuilder& row, std::size_t index) {
                const auto base = common(row, k, "queue_limited", qmax);
                auto c = base_config(plan, Protocol::queue_limited, plan.omega_s_at(k), plan.omega_r_at(k));
                c.policy.rho = base[1];
                c.policy.q_max = qmax;
                c.policy.decision = DecisionFunction::identity();
                finish(row, c, index, base[0]);
            });
        }
        for (const double frame : plan.conv_frame) {
            tasks.push_back([&plan, k, frame, common, finish](RowBuilder& row, std::size_t index) {
                const auto base = common(row, k, "conv_buffer", frame);
                auto c = base_config(plan, Protocol::conv_buffer, plan.omega_s_at(k), plan.omega_r_at(k));
                c.policy.conv_frame = static_cast<std::int64_t>(frame);
                const auto n = static_cast<std::int64_t>(frame);
                c.slots = std::max<std::int64_t>(n, plan.slots / n * n);
                finish(row, c, index, base[0]);
            });
        }
        tasks.push_back([&plan, k, common, finish](RowBuilder& row, std::size_t index) {
            const auto base = common(row, k, "conv_no_buffer", 2.0);
            auto c = base_config(plan, Protocol::conv_no_buffer, plan.omega_s_at(k), plan.omega_r_at(k));
            c.slots -= c.slots % 2;
            finish(row, c, index, base[0]);
        });
    }
    return tasks;
}

inline std::vector<Task> tasks_custom(const SweepPlan& plan)
{
    std::vector<Task> tasks;
    const std::vector<double> rhos = plan.rho.empty() ? std::vector<double>{std::nan("")} : plan.rho;
    const Protocol p = policy::protocol_from_name(plan.protocol);
    // Buffer size applies only to the protocols that have one.
    const bool finite = p == Protocol::queue_limited || p == Protocol::starved || p == Protocol::conv_buffer;
    const std::vector<double> qs = finite ? plan.q_max : std::vector<double>{std::numeric_limits<double>::infinity()};
    for (std::size_t k = 0; k < plan.link_pairs(); ++k) {
        for (const double q : qs) {
            for (const double rho_in : rhos) {
                tasks.push_back([&plan, p, k, q, rho_in](RowBuilder& row, std::size_t index) {
                    const double os = plan.omega_s_at(k);
                    const double orr = plan.omega_r_at(k);
                    const auto f = DecisionFunction::from_name(plan.decision.front());
                    const auto ms = FadingModel::rayleigh(os);
                    const auto mr = FadingModel::rayleigh(orr);
                    row.set_text("protocol", plan.protocol);
                    row.set("omega_s", os);
                    row.set("omega_r", orr);
                    const double q_max = q;
                    row.set("q_max", q_max);
                    double rho = rho_in;
                    if (std::isnan(rho) && !policy::is_conventional(p)) {
                        rho = solvers::solve_rho_opt(f, ms, mr, plan.quadrature()).rho;
                    }
                    row.set("rho", rho);
                    double analytic = std::nan("");
                    switch (p) {
                    case Protocol::conv_no_buffer:
                        analytic = closed_form::tau_conv1_rayleigh(os, orr);
                        break;
                    case Protocol::conv_buffer:
                        analytic = std::isinf(q_max) ? closed_form::tau_conv2_rayleigh(os, orr) : std::nan("");
                        break;
                    case Protocol::adaptive_fixed:
                    case Protocol::starved: {
                        const auto lr = closed_form::link_rates(f, rho, ms, mr, plan.quadrature());
                        analytic = std::isinf(q_max) ? std::min(lr.arrival, lr.departure) : std::nan("");
                        break;
                    }
                    case Protocol::adaptive_pa:
                        analytic = closed_form::pa_residuals(plan.lambda, rho, ms, mr, plan.gamma_bar,
                                                             plan.quadrature())
                                       .tau;
                        break;
                    case Protocol::queue_limited:
                        break;
                    }
                    row.set("analytic_tau", analytic);
                    if (plan.slots > 0) {
                        auto c = base_config(plan, p, os, orr);
                        c.policy.rho = std::isnan(rho) ? 1.0 : rho;
                        c.policy.q_max = q_max;
                        c.policy.decision = f;
                        c.policy.lambda = plan.lambda;
                        c.policy.gamma_bar = plan.gamma_bar;
                        if (policy::is_conventional(p)) {
                            c.slots -= c.slots % 2;
                        }
                        const auto m = simulate(plan, c, index);
                        row.set("sim_tau", m.throughput);
                        if (!std::isnan(analytic)) {
                            set_deviation(row, analytic, m.throughput);
                        }
                        row.set("sim_arrival", m.arrival_rate);
                        row.set("sim_delay_fifo", m.mean_delay_fifo);
                        row.set("sim_delay_little", m.mean_delay_little);
                        row.set("sim_drop", m.drop_prob);
                        row.set("sim_power", m.mean_power);
                    }
                });
            }
        }
    }
    return tasks;
}

} // namespace detail

/// Evaluates every grid point of the plan, up to plan.jobs at a time. Rows
/// come out in grid order; a failing point records its message in the
/// error column and the sweep continues.
inline Table run_sweep(const SweepPlan& plan)
{
    plan.validate();
    Table table;
    table.columns = columns_for(plan.experiment);
    std::vector<detail::Task> tasks;
    const auto& id = plan.experiment;
    if (id == "fig2" || id == "fig3") {
        tasks = detail::tasks_fig2(plan);
    } else if (id == "fig4") {
        tasks = detail::tasks_fig4(plan);
    } else if (id == "fig5" || id == "fig6") {
        tasks = detail::tasks_fig5(plan);
    } else if (id == "fig7") {
        tasks = detail::tasks_fig7(plan);
    } else if (id == "fig8") {
        tasks = detail::tasks_fig8(plan);
    } else {
        tasks = detail::tasks_custom(plan);
    }
    table.rows.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            RowBuilder row(table.columns);
            try {
                tasks[i](row, i);
            } catch (const std::exception& e) {
                row.set_text("error", e.what());
            }
            table.rows[i] = row.take();
        }
    };
    const auto n_workers = static_cast<std::size_t>(std::min<std::size_t>(plan.jobs, std::max<std::size_t>(1, tasks.size())));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    return table;
}

} // namespace bufrelay::experiments
