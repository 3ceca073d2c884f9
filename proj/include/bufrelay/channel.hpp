#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>

#include "bufrelay/errors.hpp"
#include "bufrelay/quadrature.hpp"

namespace bufrelay::channel {

/// Per-run random stream. mt19937_64 and seed_seq are fully specified by the
/// standard, and uniforms are built from raw engine bits, so a (seed, index)
/// pair reproduces the same draws on every conforming platform.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Independent substream for sweep point `index` of a run seeded with `master_seed`.
    static RandomStream substream(std::uint64_t master_seed, std::uint64_t index)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                          static_cast<std::uint32_t>(master_seed >> 32),
                          static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(index >> 32), 0x9e3779b9u};
        return RandomStream(seq);
    }

    /// Uniform on (0, 1]: never returns 0, so -ln(U) is always finite.
    double uniform_open_closed()
    {
        constexpr double scale = 1.0 / 9007199254740992.0; // 2^-53
        return 1.0 - static_cast<double>(engine_() >> 11) * scale;
    }

    std::uint64_t next_u64() { return engine_(); }

private:
    explicit RandomStream(std::seed_seq& seq) : engine_(seq) {}

    std::mt19937_64 engine_;
};

enum class FadingKind { rayleigh, custom };

/// Statistics of one link's instantaneous SNR (fixed power) or channel gain
/// (power allocation). Immutable after construction.
class FadingModel {
public:
    using Pdf = std::function<double(double)>;
    using Sampler = std::function<double(RandomStream&)>;

    /// Default: Rayleigh fading with unit mean.
    FadingModel() : FadingModel(rayleigh(1.0)) {}

    /// Exponentially distributed SNR/gain with the given mean.
    static FadingModel rayleigh(double mean)
    {
        if (!(mean > 0.0) || !std::isfinite(mean)) {
            throw ConfigError("rayleigh fading: mean must be positive and finite, got "
                              + std::to_string(mean));
        }
        return FadingModel(FadingKind::rayleigh, mean, nullptr);
    }

    /// Arbitrary density on [0, inf) with a matching sampler. The density must
    /// integrate to one within 1e-9.
    static FadingModel custom(double mean, Pdf pdf, Sampler sampler)
    {
        if (!(mean > 0.0) || !std::isfinite(mean)) {
            throw ConfigError("custom fading: mean must be positive and finite");
        }
        if (!pdf || !sampler) {
            throw ConfigError("custom fading: pdf and sampler callbacks are required");
        }
        special::QuadratureSpec spec;
        spec.abs_tol = 1e-12;
        spec.rel_tol = 1e-12;
        spec.max_subdivisions = 5000;
        spec.tail_scale = mean;
        const double mass = special::integrate_semi_infinite(pdf, 0.0, spec);
        if (std::abs(mass - 1.0) > 1e-9) {
            throw ConfigError("custom fading: pdf integrates to " + std::to_string(mass)
                              + ", not 1");
        }
        auto callbacks = std::make_shared<const Callbacks>(Callbacks{std::move(pdf), std::move(sampler)});
        return FadingModel(FadingKind::custom, mean, std::move(callbacks));
    }

    FadingKind kind() const { return kind_; }
    bool is_rayleigh() const { return kind_ == FadingKind::rayleigh; }
    double mean() const { return mean_; }

    double pdf(double x) const
    {
        if (!(x >= 0.0)) {
            throw DomainError("fading pdf: x must be >= 0, got " + std::to_string(x));
        }
        if (kind_ == FadingKind::rayleigh) {
            return std::exp(-x / mean_) / mean_;
        }
        return callbacks_->pdf(x);
    }

    /// Pr{X <= x}.
    double cdf(double x, const special::QuadratureSpec& spec = {}) const
    {
        if (!(x >= 0.0)) {
            throw DomainError("fading cdf: x must be >= 0");
        }
        if (kind_ == FadingKind::rayleigh) {
            return -std::expm1(-x / mean_);
        }
        if (std::isinf(x)) {
            return 1.0;
        }
        return special::integrate_interval([this](double t) { return callbacks_->pdf(t); }, 0.0, x, spec);
    }

    double sample(RandomStream& rng) const
    {
        if (kind_ == FadingKind::rayleigh) {
            return -mean_ * std::log(rng.uniform_open_closed());
        }
        return callbacks_->sampler(rng);
    }

private:
    struct Callbacks {
        Pdf pdf;
        Sampler sampler;
    };

    FadingModel(FadingKind kind, double mean, std::shared_ptr<const Callbacks> callbacks)
        : kind_(kind), mean_(mean), callbacks_(std::move(callbacks))
    {
    }

    FadingKind kind_;
    double mean_;
    std::shared_ptr<const Callbacks> callbacks_;
};

/// Instantaneous link qualities of one slot.
struct LinkSnapshot {
    double s = 0.0;
    double r = 0.0;
    std::int64_t slot_index = 0;
};

inline double sample(const FadingModel& model, RandomStream& rng) { return model.sample(rng); }

inline double pdf_at(const FadingModel& model, double x) { return model.pdf(x); }

/// Draws the S-R value first, then the R-D value; simulations rely on this order.
inline LinkSnapshot draw_snapshot(const FadingModel& source_link, const FadingModel& relay_link,
                                  RandomStream& rng, std::int64_t slot)
{
    LinkSnapshot snap;
    snap.s = source_link.sample(rng);
    snap.r = relay_link.sample(rng);
    snap.slot_index = slot;
    return snap;
}

} // namespace bufrelay::channel
