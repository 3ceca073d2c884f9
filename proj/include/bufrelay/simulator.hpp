#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "bufrelay/channel.hpp"
#include "bufrelay/errors.hpp"
#include "bufrelay/policies.hpp"
#include "bufrelay/relay_buffer.hpp"

namespace bufrelay::sim {

using channel::FadingModel;
using policy::PolicySpec;
using policy::Protocol;
using policy::Selection;

inline constexpr std::size_t kMaxTraceRows = 1'000'000;

struct SimConfig {
    PolicySpec policy;
    /// Link SNRs for fixed-power protocols, channel gains for adaptive_pa.
    FadingModel model_s;
    FadingModel model_r;
    std::int64_t slots = 1'000'000;
    std::uint64_t seed = 1;
    /// Ignored by the conventional protocols, whose schedules start stationary.
    std::int64_t warmup_slots = 10'000;
    bool record_trace = false;
    /// Queue level whose crossing counts as an overflow event; NaN means policy.q_max.
    double overflow_threshold = std::numeric_limits<double>::quiet_NaN();
    /// Number of batches for the batch-means standard error of the throughput.
    int batches = 20;

    void validate() const
    {
        policy.validate();
        if (slots < 1) {
            throw ConfigError("SimConfig: slots must be >= 1");
        }
        if (warmup_slots < 0 || effective_warmup() >= slots) {
            throw ConfigError("SimConfig: warmup_slots must lie in [0, slots)");
        }
        if (policy::is_conventional(policy.protocol)) {
            if (slots % 2 != 0) {
                throw ConfigError("SimConfig: conventional protocols need an even number of slots");
            }
            if (policy.protocol == Protocol::conv_buffer && policy.conv_frame > 0 && slots % policy.conv_frame != 0) {
                throw ConfigError("SimConfig: slots must be a multiple of conv_frame");
            }
        }
        if (batches < 1) {
            throw ConfigError("SimConfig: batches must be >= 1");
        }
    }

    std::int64_t effective_warmup() const
    {
        return policy::is_conventional(policy.protocol) ? 0 : warmup_slots;
    }

    double effective_overflow_threshold() const
    {
        return std::isnan(overflow_threshold) ? policy.q_max : overflow_threshold;
    }
};

/// Measured over the slots after warmup, except the `total_*` fields, which
/// cover the whole run and close the bit balance:
/// total_admitted = total_departed + total_flushed + final_queue.
struct Metrics {
    double throughput = 0.0;     // bits leaving the relay per slot
    double throughput_stderr = 0.0;
    double arrival_rate = 0.0;   // bits admitted to the buffer per slot
    double offered_rate = 0.0;   // bits sent by the source per slot (admitted + dropped)
    double departure_rate = 0.0; // equals throughput
    double mean_queue = 0.0;     // end-of-slot queue, bits
    double mean_delay_fifo = std::numeric_limits<double>::quiet_NaN();
    double mean_delay_little = std::numeric_limits<double>::quiet_NaN();
    double drop_prob = 0.0;           // dropped / offered bits
    double overflow_event_prob = 0.0; // fraction of slots whose queue would exceed the threshold
    double mean_power = 0.0;          // adaptive_pa only
    std::int64_t measured_slots = 0;
    std::int64_t source_slots = 0;
    std::int64_t relay_slots = 0;
    std::int64_t relay_idle_slots = 0;      // relay selected with an empty queue
    std::int64_t relay_underflow_slots = 0; // relay selected with R(i) > Q(i-1)
    std::int64_t idle_slots = 0;            // adaptive_pa: both links below cutoff
    double total_admitted = 0.0;
    double total_departed = 0.0;
    double total_dropped = 0.0;
    double total_flushed = 0.0;
    double final_queue = 0.0;
};

struct TraceRow {
    std::int64_t slot = 0;
    double s = 0.0;
    double r = 0.0;
    int d = 0;
    double source_bits = 0.0; // S(i) sent by the source (0 in relay slots)
    double relay_bits = 0.0;  // bits actually sent by the relay
    double queue = 0.0;       // Q(i) at the end of the slot
};

struct RunOutput {
    Metrics metrics;
    std::vector<TraceRow> trace;
};

namespace detail {

struct Window {
    buffer::BufferCounters start;
    std::int64_t overflow_events = 0;
};

} // namespace detail

/// Slot-by-slot simulation of the configured protocol.
inline RunOutput run_with_trace(const SimConfig& config)
{
    config.validate();
    const PolicySpec& pol = config.policy;
    if (pol.protocol == Protocol::adaptive_pa) {
        policy::ensure_threshold_branches_validated();
    }
    auto rng = channel::RandomStream(config.seed);
    buffer::RelayBuffer buf(pol.q_max);
    const std::int64_t n = config.slots;
    const std::int64_t warmup = config.effective_warmup();
    const std::int64_t frame = pol.protocol == Protocol::conv_buffer && pol.conv_frame > 0 ? pol.conv_frame : n;
    const double threshold = config.effective_overflow_threshold();
    const std::int64_t measured = n - warmup;
    const int batches = static_cast<int>(std::min<std::int64_t>(config.batches, measured));

    Metrics m;
    RunOutput out;
    detail::Window win;
    buffer::CompensatedSum queue_sum;
    buffer::CompensatedSum energy;
    buffer::CompensatedSum offered;
    std::vector<double> batch_departures(static_cast<std::size_t>(batches), 0.0);

    for (std::int64_t i = 1; i <= n; ++i) {
        if (i == warmup + 1) {
            win.start = buf.counters();
        }
        const bool measuring = i > warmup;
        const auto snap = channel::draw_snapshot(config.model_s, config.model_r, rng, i);
        const double q_prev = buf.bits();

        Selection d = Selection::source;
        double source_rate = 0.0;
        double relay_rate = 0.0;
        double power = 0.0;
        bool idle = false;
        switch (pol.protocol) {
        case Protocol::conv_no_buffer:
            d = policy::conventional_schedule(pol.protocol, (i - 1) % 2 + 1, 2);
            break;
        case Protocol::conv_buffer:
            d = policy::conventional_schedule(pol.protocol, (i - 1) % frame + 1, frame);
            break;
        case Protocol::adaptive_fixed:
        case Protocol::starved:
            d = policy::select_fixed_power(snap.s, snap.r, pol.rho, pol.decision);
            break;
        case Protocol::queue_limited:
            d = policy::select_queue_limited(snap.s, snap.r, pol.rho, pol.decision, q_prev, pol.q_max);
            break;
        case Protocol::adaptive_pa: {
            d = policy::select_with_power(snap.s, snap.r, pol.lambda, pol.rho);
            const auto alloc = policy::allocate_power(snap.s, snap.r, pol.lambda, pol.rho);
            if (d == Selection::source) {
                power = alloc.source;
                idle = alloc.source == 0.0;
                source_rate = std::log2(1.0 + alloc.source * snap.s);
            } else {
                power = alloc.relay;
                relay_rate = std::log2(1.0 + alloc.relay * snap.r);
            }
            break;
        }
        }
        if (pol.protocol != Protocol::adaptive_pa) {
            source_rate = std::log2(1.0 + snap.s);
            relay_rate = std::log2(1.0 + snap.r);
        }

        double sent_by_source = 0.0;
        double sent_by_relay = 0.0;
        double dropped_now = 0.0;
        if (d == Selection::source) {
            sent_by_source = source_rate;
            dropped_now = buf.enqueue(source_rate, i).dropped;
        } else {
            sent_by_relay = buf.dequeue(relay_rate, i);
        }
        // Conventional relaying keeps nothing across its frame boundary.
        const bool frame_end = (pol.protocol == Protocol::conv_no_buffer && i % 2 == 0)
                               || (pol.protocol == Protocol::conv_buffer && i % frame == 0);
        if (frame_end) {
            dropped_now += buf.flush();
        }

        if (measuring) {
            const double q = buf.bits();
            queue_sum.add(q);
            offered.add(sent_by_source);
            energy.add(power);
            if (q + dropped_now > threshold) {
                ++win.overflow_events;
            }
            if (d == Selection::source) {
                ++m.source_slots;
                if (idle) {
                    ++m.idle_slots;
                }
            } else {
                ++m.relay_slots;
                if (q_prev <= 0.0) {
                    ++m.relay_idle_slots;
                }
                if (relay_rate > q_prev) {
                    ++m.relay_underflow_slots;
                }
            }
            const std::int64_t k = i - warmup - 1;
            batch_departures[static_cast<std::size_t>(k * batches / measured)] += sent_by_relay;
        }
        if (config.record_trace && out.trace.size() < kMaxTraceRows) {
            out.trace.push_back(TraceRow{i, snap.s, snap.r, policy::as_int(d), sent_by_source, sent_by_relay,
                                         buf.bits()});
        }
    }

    const auto end = buf.counters();
    const double slots = static_cast<double>(measured);
    const double admitted = end.admitted - win.start.admitted;
    const double departed = end.departed - win.start.departed;
    const double dropped = end.dropped - win.start.dropped;
    const double delay = end.delay_bit_slots - win.start.delay_bit_slots;

    m.measured_slots = measured;
    m.throughput = departed / slots;
    m.departure_rate = m.throughput;
    m.arrival_rate = admitted / slots;
    m.offered_rate = offered.value() / slots;
    m.mean_queue = queue_sum.value() / slots;
    if (departed > 0.0) {
        m.mean_delay_fifo = delay / departed;
    }
    if (m.arrival_rate > 0.0) {
        m.mean_delay_little = buffer::mean_delay_little(m.mean_queue, m.arrival_rate);
    }
    m.drop_prob = offered.value() > 0.0 ? std::min(1.0, dropped / offered.value()) : 0.0;
    m.overflow_event_prob = static_cast<double>(win.overflow_events) / slots;
    m.mean_power = energy.value() / slots;

    if (batches > 1) {
        double mean = 0.0;
        std::vector<double> rates(batch_departures.size());
        for (int b = 0; b < batches; ++b) {
            const std::int64_t lo = b * measured / batches;
            const std::int64_t hi = (b + 1) * measured / batches;
            rates[static_cast<std::size_t>(b)] = batch_departures[static_cast<std::size_t>(b)] / static_cast<double>(hi - lo);
            mean += rates[static_cast<std::size_t>(b)];
        }
        mean /= batches;
        double var = 0.0;
        for (const double r : rates) {
            var += (r - mean) * (r - mean);
        }
        var /= (batches - 1);
        m.throughput_stderr = std::sqrt(var / batches);
    }

    m.total_admitted = end.admitted;
    m.total_departed = end.departed;
    m.total_dropped = end.dropped;
    m.total_flushed = buf.flushed_bits();
    m.final_queue = buf.bits();
    out.metrics = m;
    return out;
}

inline Metrics run(const SimConfig& config)
{
    SimConfig c = config;
    c.record_trace = false;
    return run_with_trace(c).metrics;
}

/// Conventional buffered relaying (receive for half a frame, transmit for the
/// other half) with a buffer of q_max bits. Receive-phase bits beyond the
/// capacity and bits left at the end of each frame are dropped.
inline Metrics run_conventional_finite(const SimConfig& config, double q_max)
{
    if (config.policy.protocol != Protocol::conv_buffer) {
        throw ConfigError("run_conventional_finite: protocol must be conv_buffer");
    }
    SimConfig c = config;
    c.policy.q_max = q_max;
    return run(c);
}

/// Writes a trace as comma-separated values with a header row.
inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows)
{
    os << "slot,s,r,d,S,R,Q\n";
    char line[256];
    for (const auto& row : rows) {
        std::snprintf(line, sizeof line, "%lld,%.12g,%.12g,%d,%.12g,%.12g,%.12g\n",
                      static_cast<long long>(row.slot), row.s, row.r, row.d, row.source_bits, row.relay_bits,
                      row.queue);
        os << line;
    }
}

} // namespace bufrelay::sim
