#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>

#include "bufrelay/errors.hpp"

namespace bufrelay::buffer {

/// Neumaier-compensated running sum; keeps long bit tallies exact to a few ulp.
class CompensatedSum {
public:
    void add(double x)
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            compensation_ += (sum_ - t) + x;
        } else {
            compensation_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + compensation_; }
    void reset() { sum_ = compensation_ = 0.0; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

/// Bits admitted together in one slot.
struct Batch {
    double bits;
    std::int64_t arrival_slot;
};

struct Admission {
    double admitted = 0.0;
    double dropped = 0.0;
};

/// Cumulative tallies; differences of two snapshots give per-window figures.
struct BufferCounters {
    double admitted = 0.0;
    double departed = 0.0;
    double dropped = 0.0;
    double delay_bit_slots = 0.0; // sum over departed bits of (departure - arrival slot)
};

/// The relay queue Q(i) as a FIFO of arrival batches, so that every departing
/// bit knows its own delay. Fluid model: bits are real-valued and an overflowing
/// arrival is admitted partially.
class RelayBuffer {
public:
    explicit RelayBuffer(double capacity = std::numeric_limits<double>::infinity())
        : capacity_(capacity)
    {
        if (!(capacity >= 0.0)) {
            throw ConfigError("RelayBuffer: capacity must be >= 0");
        }
    }

    Admission enqueue(double bits, std::int64_t slot)
    {
        if (!(bits >= 0.0)) {
            throw DomainError("RelayBuffer::enqueue: bits must be >= 0");
        }
        if (!batches_.empty() && slot < batches_.back().arrival_slot) {
            throw DomainError("RelayBuffer::enqueue: arrival slots must be nondecreasing");
        }
        Admission out;
        out.admitted = std::min(bits, std::max(0.0, capacity_ - bits_.value()));
        out.dropped = bits - out.admitted;
        if (out.admitted > 0.0) {
            if (!batches_.empty() && batches_.back().arrival_slot == slot) {
                batches_.back().bits += out.admitted;
            } else {
                batches_.push_back(Batch{out.admitted, slot});
            }
            bits_.add(out.admitted);
            admitted_.add(out.admitted);
        }
        if (out.dropped > 0.0) {
            dropped_.add(out.dropped);
        }
        return out;
    }

    /// Sends min(link_capacity_bits, Q) oldest-first and returns the bits sent.
    double dequeue(double link_capacity_bits, std::int64_t slot)
    {
        if (!(link_capacity_bits >= 0.0)) {
            throw DomainError("RelayBuffer::dequeue: link capacity must be >= 0");
        }
        double remaining = std::min(link_capacity_bits, bits_.value());
        double sent = 0.0;
        while (remaining > 0.0 && !batches_.empty()) {
            Batch& head = batches_.front();
            const double take = std::min(head.bits, remaining);
            delay_.add(take * static_cast<double>(slot - head.arrival_slot));
            sent += take;
            remaining -= take;
            if (take >= head.bits) {
                batches_.pop_front();
            } else {
                head.bits -= take;
            }
        }
        bits_.add(-sent);
        departed_.add(sent);
        if (batches_.empty()) {
            bits_.reset();
        }
        return sent;
    }

    /// Discards everything still queued (end of a conventional frame); returns
    /// the discarded bits, which are counted as dropped.
    double flush()
    {
        const double discarded = batch_bits();
        batches_.clear();
        bits_.reset();
        if (discarded > 0.0) {
            dropped_.add(discarded);
            flushed_.add(discarded);
        }
        return discarded;
    }

    double bits() const { return batches_.empty() ? 0.0 : std::max(0.0, bits_.value()); }
    double capacity() const { return capacity_; }
    double headroom() const { return capacity_ - bits(); }
    bool empty() const { return batches_.empty(); }
    std::size_t batch_count() const { return batches_.size(); }
    const std::deque<Batch>& batches() const { return batches_; }

    /// Direct sum over the FIFO; O(n), for invariant checks.
    double batch_bits() const
    {
        CompensatedSum s;
        for (const auto& b : batches_) {
            s.add(b.bits);
        }
        return s.value();
    }

    double dropped_bits() const { return dropped_.value(); }
    double flushed_bits() const { return flushed_.value(); }

    BufferCounters counters() const
    {
        return BufferCounters{admitted_.value(), departed_.value(), dropped_.value(), delay_.value()};
    }

private:
    double capacity_;
    std::deque<Batch> batches_;
    CompensatedSum bits_;
    CompensatedSum admitted_;
    CompensatedSum departed_;
    CompensatedSum dropped_;
    CompensatedSum flushed_;
    CompensatedSum delay_;
};

/// Mean delay in slots from Little's law, E{T} = E{Q} / A.
inline double mean_delay_little(double mean_queue, double arrival_rate)
{
    if (!(arrival_rate > 0.0)) {
        throw DomainError("mean_delay_little: arrival rate must be > 0");
    }
    return mean_queue / arrival_rate;
}

} // namespace bufrelay::buffer
