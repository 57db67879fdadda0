#include "streammem/short_term_memory.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <sstream>

namespace streammem {

std::string to_string(AdmitOutcome outcome)
{
    switch (outcome) {
    case AdmitOutcome::appended:
        return "appended";
    case AdmitOutcome::reservoir_replaced:
        return "reservoir_replaced";
    case AdmitOutcome::reservoir_rejected:
        return "reservoir_rejected";
    case AdmitOutcome::boundary_started_new_event:
        return "boundary_started_new_event";
    }
    return "unknown";
}

ReservoirDecision reservoir_decide(std::size_t n, std::size_t capacity, std::mt19937_64& rng)
{
    if (capacity == 0 || n <= capacity) {
        throw ArgumentError(fmt::format("reservoir needs n > capacity (n={}, capacity={})", n, capacity));
    }
    // Draw j uniformly from [0, n); j < capacity happens with probability
    // capacity/n and, conditioned on that, j is uniform over the slots.
    std::uniform_int_distribution<std::uint64_t> draw(0, n - 1);
    const auto j = draw(rng);
    if (j < capacity) {
        return {true, static_cast<std::size_t>(j)};
    }
    return {false, 0};
}

ShortTermMemory::ShortTermMemory(StmConfig config, std::shared_ptr<const BoundaryPolicy> policy)
    : config_(config), policy_(std::move(policy)), rng_(config.seed)
{
    if (config_.capacity == 0) {
        throw ConfigError("short-term capacity must be positive");
    }
    if (config_.bin_count < 2 || config_.bin_count > 256 || 256 % config_.bin_count != 0) {
        throw ConfigError(fmt::format("bin count {} must divide 256 and be at least 2", config_.bin_count));
    }
    if (!policy_) {
        throw ConfigError("short-term memory needs a boundary policy");
    }
}

AdmitResult ShortTermMemory::admit(Frame frame)
{
    return admit(std::make_shared<const Frame>(std::move(frame)));
}

void ShortTermMemory::open_event(FrameRef frame, Histogram h)
{
    StmEvent ev;
    ev.state.event_id = next_event_id_++;
    ev.state.frames_processed = 1;
    ev.state.start_timestamp_s = frame->timestamp_s;
    ev.state.last_timestamp_s = frame->timestamp_s;
    ev.state.mean_histogram = h;
    ev.frames.push_back(std::move(frame));
    ev.histograms.push_back(std::move(h));
    events_.push_back(std::move(ev));
    ++total_held_;
    ++stats_.events_created;
}

void ShortTermMemory::evict_over_budget(std::vector<StmEvent>& out)
{
    while (total_held_ > config_.capacity) {
        out.push_back(evict_oldest());
    }
}

AdmitResult ShortTermMemory::admit(FrameRef frame)
{
    if (!frame) {
        throw ArgumentError("admit of a null frame");
    }
    if (last_timestamp_ && !(frame->timestamp_s > *last_timestamp_)) {
        throw StreamOrderError(fmt::format("frame at {}s does not follow last admitted frame at {}s",
                                           frame->timestamp_s, *last_timestamp_));
    }
    Histogram h = compute_histogram(*frame, config_.bin_count);
    last_timestamp_ = frame->timestamp_s;
    ++stats_.frames_admitted;

    AdmitResult result;
    if (events_.empty()) {
        open_event(std::move(frame), std::move(h));
        result.outcome = AdmitOutcome::appended;
        return result;
    }

    StmEvent& active = events_.back();
    if (policy_->should_split(active.state, *frame, h)) {
        active.finalized = true;
        ++stats_.boundaries;
        if (config_.archive_on_boundary) {
            StmEvent done = std::move(events_.back());
            events_.pop_back();
            total_held_ -= done.held();
            ++stats_.events_evicted;
            result.evicted_events.push_back(std::move(done));
        }
        open_event(std::move(frame), std::move(h));
        evict_over_budget(result.evicted_events);
        result.outcome = AdmitOutcome::boundary_started_new_event;
        return result;
    }

    ++active.state.frames_processed;
    active.state.last_timestamp_s = frame->timestamp_s;
    if (active.state.frames_processed <= config_.capacity) {
        active.frames.push_back(std::move(frame));
        active.histograms.push_back(std::move(h));
        ++total_held_;
        update_running_mean(active.state, active.histograms);
        evict_over_budget(result.evicted_events);
        result.outcome = AdmitOutcome::appended;
        return result;
    }

    // The active event has seen more than K frames; by now it is the sole
    // occupant and holds exactly K of them.
    ++stats_.reservoir_offers;
    const auto decision = reservoir_decide(active.state.frames_processed, config_.capacity, rng_);
    if (!decision.accepted) {
        result.outcome = AdmitOutcome::reservoir_rejected;
        return result;
    }
    ++stats_.reservoir_accepts;
    // Drop the chosen slot and append the newcomer so held frames stay in
    // timestamp order.
    const auto slot = static_cast<std::ptrdiff_t>(decision.slot);
    active.frames.erase(active.frames.begin() + slot);
    active.histograms.erase(active.histograms.begin() + slot);
    active.frames.push_back(std::move(frame));
    active.histograms.push_back(std::move(h));
    update_running_mean(active.state, active.histograms);
    result.outcome = AdmitOutcome::reservoir_replaced;
    result.replaced_slot = decision.slot;
    return result;
}

StmEvent ShortTermMemory::evict_oldest()
{
    if (events_.size() < 2) {
        throw Error("cannot evict: only the active event is held");
    }
    StmEvent ev = std::move(events_.front());
    events_.pop_front();
    ev.finalized = true;
    total_held_ -= ev.held();
    ++stats_.events_evicted;
    return ev;
}

StmSnapshot ShortTermMemory::snapshot() const
{
    std::vector<FrameRef> frames;
    frames.reserve(total_held_);
    for (const auto& ev : events_) {
        frames.insert(frames.end(), ev.frames.begin(), ev.frames.end());
    }
    std::stable_sort(frames.begin(), frames.end(),
                     [](const FrameRef& a, const FrameRef& b) { return a->timestamp_s < b->timestamp_s; });
    StmSnapshot out;
    out.reserve(frames.size());
    for (std::size_t j = 0; j < frames.size(); ++j) {
        out.push_back({frame_label(j, frames[j]->timestamp_s), frames[j]});
    }
    return out;
}

nlohmann::json ShortTermMemory::debug_json() const
{
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : events_) {
        nlohmann::json held = nlohmann::json::array();
        for (const auto& f : ev.frames) {
            held.push_back(f->stream_index);
        }
        events.push_back({{"event_id", ev.state.event_id},
                          {"n", ev.state.frames_processed},
                          {"start_s", ev.state.start_timestamp_s},
                          {"end_s", ev.state.last_timestamp_s},
                          {"held", std::move(held)}});
    }
    return {{"capacity", config_.capacity}, {"events", std::move(events)}};
}

nlohmann::json ShortTermMemory::checkpoint_json() const
{
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : events_) {
        nlohmann::json held = nlohmann::json::array();
        for (const auto& f : ev.frames) {
            held.push_back({{"stream_index", f->stream_index},
                            {"source_position", f->source_position},
                            {"timestamp_s", f->timestamp_s}});
        }
        events.push_back({{"event_id", ev.state.event_id},
                          {"n", ev.state.frames_processed},
                          {"start_s", ev.state.start_timestamp_s},
                          {"end_s", ev.state.last_timestamp_s},
                          {"finalized", ev.finalized},
                          {"held", std::move(held)}});
    }
    std::ostringstream rng;
    rng << rng_;
    const nlohmann::json stats = {{"frames_admitted", stats_.frames_admitted},
                                  {"events_created", stats_.events_created},
                                  {"events_evicted", stats_.events_evicted},
                                  {"boundaries", stats_.boundaries},
                                  {"reservoir_offers", stats_.reservoir_offers},
                                  {"reservoir_accepts", stats_.reservoir_accepts}};
    nlohmann::json out = {{"capacity", config_.capacity},
                          {"bin_count", config_.bin_count},
                          {"policy", policy_->name()},
                          {"next_event_id", next_event_id_},
                          {"rng", rng.str()},
                          {"stats", stats},
                          {"events", std::move(events)}};
    out["last_timestamp_s"] = last_timestamp_ ? nlohmann::json(*last_timestamp_) : nlohmann::json(nullptr);
    return out;
}

void ShortTermMemory::restore(const nlohmann::json& cp, const FrameLoader& loader)
{
    try {
        if (cp.at("capacity").get<std::size_t>() != config_.capacity ||
            cp.at("bin_count").get<std::size_t>() != config_.bin_count ||
            cp.at("policy").get<std::string>() != policy_->name()) {
            throw ConfigError("checkpoint was taken with a different memory configuration");
        }
        std::deque<StmEvent> events;
        std::size_t total = 0;
        for (const auto& je : cp.at("events")) {
            StmEvent ev;
            ev.state.event_id = je.at("event_id").get<std::int64_t>();
            ev.state.frames_processed = je.at("n").get<std::size_t>();
            ev.state.start_timestamp_s = je.at("start_s").get<double>();
            ev.state.last_timestamp_s = je.at("end_s").get<double>();
            ev.finalized = je.at("finalized").get<bool>();
            for (const auto& jf : je.at("held")) {
                FrameRef f = loader(jf.at("source_position").get<std::size_t>(),
                                    jf.at("stream_index").get<std::size_t>());
                ev.histograms.push_back(compute_histogram(*f, config_.bin_count));
                ev.frames.push_back(std::move(f));
            }
            if (ev.frames.empty()) {
                throw FormatError("checkpoint event without held frames");
            }
            update_running_mean(ev.state, ev.histograms);
            total += ev.held();
            events.push_back(std::move(ev));
        }
        std::istringstream rng(cp.at("rng").get<std::string>());
        std::mt19937_64 restored_rng;
        rng >> restored_rng;
        if (!rng) {
            throw FormatError("checkpoint rng state is unreadable");
        }
        const auto& js = cp.at("stats");
        StmStats stats;
        stats.frames_admitted = js.at("frames_admitted").get<std::size_t>();
        stats.events_created = js.at("events_created").get<std::size_t>();
        stats.events_evicted = js.at("events_evicted").get<std::size_t>();
        stats.boundaries = js.at("boundaries").get<std::size_t>();
        stats.reservoir_offers = js.at("reservoir_offers").get<std::size_t>();
        stats.reservoir_accepts = js.at("reservoir_accepts").get<std::size_t>();

        events_ = std::move(events);
        total_held_ = total;
        rng_ = restored_rng;
        stats_ = stats;
        next_event_id_ = cp.at("next_event_id").get<std::int64_t>();
        last_timestamp_.reset();
        if (!cp.at("last_timestamp_s").is_null()) {
            last_timestamp_ = cp.at("last_timestamp_s").get<double>();
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(fmt::format("malformed checkpoint: {}", ex.what()));
    }
}

} // namespace streammem
