#include "streammem/segmenter.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace streammem {

double pearson_correlation(const Histogram& a, const Histogram& b)
{
    const std::size_t n = a.bin_count();
    if (n != b.bin_count()) {
        throw DimensionError(fmt::format("histogram bin counts differ: {} vs {}", n, b.bin_count()));
    }
    if (n < 2) {
        throw DimensionError("correlation needs at least two bins");
    }
    double mean_a = 0.0;
    double mean_b = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mean_a += a.bins[k];
        mean_b += b.bins[k];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);

    double cov = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double da = a.bins[k] - mean_a;
        const double db = b.bins[k] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    // The 1/n factors of population statistics cancel in the ratio.
    const double denom = std::sqrt(var_a) * std::sqrt(var_b);
    if (denom < 1e-12) {
        for (std::size_t k = 0; k < n; ++k) {
            if (std::abs(a.bins[k] - b.bins[k]) > 1e-12) {
                return 0.0;
            }
        }
        return 1.0;
    }
    return std::clamp(cov / denom, -1.0, 1.0);
}

bool should_split(const EventState& state, const Histogram& h_new, double delta, std::size_t min_len)
{
    if (state.frames_processed <= min_len) {
        return false;
    }
    return pearson_correlation(state.mean_histogram, h_new) < delta;
}

Histogram average_histogram(std::span<const Histogram> held)
{
    if (held.empty()) {
        throw DegenerateInputError("mean of zero histograms");
    }
    Histogram mean;
    mean.bins.assign(held.front().bin_count(), 0.0);
    for (const auto& h : held) {
        if (h.bin_count() != mean.bin_count()) {
            throw DimensionError("held histograms disagree on bin count");
        }
        for (std::size_t k = 0; k < h.bin_count(); ++k) {
            mean.bins[k] += h.bins[k];
        }
    }
    const double count = static_cast<double>(held.size());
    for (auto& v : mean.bins) {
        v /= count;
    }
    return mean;
}

void update_running_mean(EventState& state, std::span<const Histogram> held)
{
    state.mean_histogram = average_histogram(held);
}

EventCentricPolicy::EventCentricPolicy(double delta, std::size_t min_len) : delta_(delta), min_len_(min_len)
{
    if (!(delta > 0.0 && delta <= 1.0)) {
        throw ConfigError(fmt::format("delta must lie in (0, 1], got {}", delta));
    }
    if (min_len < 1) {
        throw ConfigError("min_len must be at least 1");
    }
}

bool EventCentricPolicy::should_split(const EventState& active, const Frame&, const Histogram& h) const
{
    return streammem::should_split(active, h, delta_, min_len_);
}

FixedLengthPolicy::FixedLengthPolicy(double interval_s) : interval_s_(interval_s)
{
    if (!(interval_s > 0.0)) {
        throw ConfigError(fmt::format("fixed interval must be positive, got {}", interval_s));
    }
}

bool FixedLengthPolicy::should_split(const EventState& active, const Frame& frame, const Histogram&) const
{
    const auto segment = [this](double t) { return std::floor(t / interval_s_ + 1e-9); };
    return segment(frame.timestamp_s) > segment(active.start_timestamp_s);
}

std::string FixedLengthPolicy::name() const
{
    return fmt::format("fixed:{}", interval_s_);
}

std::shared_ptr<const BoundaryPolicy> make_boundary_policy(const std::string& spec, double delta,
                                                           std::size_t min_len)
{
    if (spec == "event") {
        return std::make_shared<EventCentricPolicy>(delta, min_len);
    }
    if (spec == "fixed") {
        return std::make_shared<FixedLengthPolicy>(30.0);
    }
    if (spec.rfind("fixed:", 0) == 0) {
        double interval = 0.0;
        try {
            std::size_t used = 0;
            interval = std::stod(spec.substr(6), &used);
            if (used != spec.size() - 6) {
                throw std::invalid_argument("trailing characters");
            }
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("bad segmentation policy '{}'", spec));
        }
        return std::make_shared<FixedLengthPolicy>(interval);
    }
    throw ConfigError(fmt::format("unknown segmentation policy '{}' (expected event or fixed:<s>)", spec));
}

} // namespace streammem
