#pragma once

#include "streammem/frame.hpp"
#include "streammem/segmenter.hpp"

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace streammem {

inline constexpr std::size_t kDefaultCapacity = 32;

// An event inside the short-term buffer. `frames` and `histograms` are
// parallel and sorted by timestamp.
struct StmEvent {
    EventState state;
    std::vector<FrameRef> frames;
    std::vector<Histogram> histograms;
    bool finalized = false;

    std::size_t held() const { return frames.size(); }
};

enum class AdmitOutcome {
    appended,
    reservoir_replaced,
    reservoir_rejected,
    boundary_started_new_event,
};

std::string to_string(AdmitOutcome outcome);

struct AdmitResult {
    AdmitOutcome outcome = AdmitOutcome::appended;
    std::optional<std::size_t> replaced_slot;
    // Whole events pushed out of the buffer, oldest first, ready for archival.
    std::vector<StmEvent> evicted_events;
};

struct ReservoirDecision {
    bool accepted = false;
    std::size_t slot = 0;
};

// Accepts the n-th frame of an event with probability capacity/n and, on
// accept, picks a uniformly random slot in [0, capacity). One draw from `rng`.
// Requires n > capacity.
ReservoirDecision reservoir_decide(std::size_t n, std::size_t capacity, std::mt19937_64& rng);

struct StmConfig {
    std::size_t capacity = kDefaultCapacity;
    std::size_t bin_count = kDefaultBinCount;
    std::uint64_t seed = 0;
    // Hand finalized events to long-term memory at the boundary instead of
    // waiting for budget pressure.
    bool archive_on_boundary = false;
};

struct StmStats {
    std::size_t frames_admitted = 0;
    std::size_t events_created = 0;
    std::size_t events_evicted = 0;
    std::size_t boundaries = 0;
    std::size_t reservoir_offers = 0;
    std::size_t reservoir_accepts = 0;

    double reservoir_accept_rate() const
    {
        return reservoir_offers == 0 ? 0.0
                                     : static_cast<double>(reservoir_accepts) / static_cast<double>(reservoir_offers);
    }
};

struct SnapshotFrame {
    std::string label;
    FrameRef frame;
};

// Held frames in global timestamp order, relabeled "Frame j | t s" from 0.
using StmSnapshot = std::vector<SnapshotFrame>;

// K-frame event-structured buffer. Single writer; snapshot() copies out an
// immutable view for readers.
class ShortTermMemory {
public:
    using FrameLoader = std::function<FrameRef(std::size_t source_position, std::size_t stream_index)>;

    explicit ShortTermMemory(StmConfig config = {},
                             std::shared_ptr<const BoundaryPolicy> policy = std::make_shared<EventCentricPolicy>());

    AdmitResult admit(Frame frame);
    AdmitResult admit(FrameRef frame);

    // Removes the oldest event. The active event is never evicted this way.
    StmEvent evict_oldest();

    StmSnapshot snapshot() const;

    const std::deque<StmEvent>& events() const { return events_; }
    std::size_t total_held() const { return total_held_; }
    const StmConfig& config() const { return config_; }
    const BoundaryPolicy& policy() const { return *policy_; }
    const StmStats& stats() const { return stats_; }
    std::optional<double> last_timestamp() const { return last_timestamp_; }

    // {capacity, events: [{event_id, n, start_s, end_s, held: [frame indices]}]}
    nlohmann::json debug_json() const;

    // Everything needed to resume bit-identically, including the rng state.
    // Pixels are not stored; restore() reloads held frames through `loader`.
    nlohmann::json checkpoint_json() const;
    void restore(const nlohmann::json& checkpoint, const FrameLoader& loader);

private:
    void open_event(FrameRef frame, Histogram h);
    void evict_over_budget(std::vector<StmEvent>& out);

    StmConfig config_;
    std::shared_ptr<const BoundaryPolicy> policy_;
    std::mt19937_64 rng_;
    std::deque<StmEvent> events_;
    std::size_t total_held_ = 0;
    std::int64_t next_event_id_ = 0;
    std::optional<double> last_timestamp_;
    StmStats stats_;
};

} // namespace streammem
