#pragma once

#include "streammem/frame.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>

namespace streammem {

inline constexpr double kDefaultDelta = 0.2;
inline constexpr std::size_t kDefaultMinEventLength = 8;

// Online bookkeeping for one event.
struct EventState {
    std::int64_t event_id = 0;
    // Frames routed to the event since it opened, reservoir rejections included.
    std::size_t frames_processed = 0;
    // Exact mean over the histograms of frames currently held.
    Histogram mean_histogram;
    double start_timestamp_s = 0.0;
    double last_timestamp_s = 0.0;
};

// Population Pearson correlation over histogram bins, clamped to [-1, 1].
// When either side has zero variance the result is 1.0 if the bin vectors are
// equal within 1e-12 and 0.0 otherwise.
double pearson_correlation(const Histogram& a, const Histogram& b);

// True iff the event has processed more than `min_len` frames and the new
// histogram correlates with the event mean below `delta`.
bool should_split(const EventState& state, const Histogram& h_new, double delta = kDefaultDelta,
                  std::size_t min_len = kDefaultMinEventLength);

Histogram average_histogram(std::span<const Histogram> held);

// Recomputes state.mean_histogram from scratch over `held`; never updated
// incrementally so replacement cannot drift.
void update_running_mean(EventState& state, std::span<const Histogram> held);

// Decides event boundaries. The short-term memory asks the policy once per
// incoming frame, before routing it.
class BoundaryPolicy {
public:
    virtual ~BoundaryPolicy() = default;

    virtual bool should_split(const EventState& active, const Frame& frame, const Histogram& h) const = 0;
    virtual std::string name() const = 0;
};

class EventCentricPolicy final : public BoundaryPolicy {
public:
    explicit EventCentricPolicy(double delta = kDefaultDelta, std::size_t min_len = kDefaultMinEventLength);

    bool should_split(const EventState& active, const Frame& frame, const Histogram& h) const override;
    std::string name() const override { return "event"; }

    double delta() const { return delta_; }
    std::size_t min_len() const { return min_len_; }

private:
    double delta_;
    std::size_t min_len_;
};

// Content-blind baseline: a boundary at every multiple of `interval_s`.
class FixedLengthPolicy final : public BoundaryPolicy {
public:
    explicit FixedLengthPolicy(double interval_s = 30.0);

    bool should_split(const EventState& active, const Frame& frame, const Histogram& h) const override;
    std::string name() const override;

    double interval_s() const { return interval_s_; }

private:
    double interval_s_;
};

// Parses "event" or "fixed:<seconds>" (bare "fixed" means 30 s).
std::shared_ptr<const BoundaryPolicy> make_boundary_policy(const std::string& spec, double delta,
                                                           std::size_t min_len);

} // namespace streammem
