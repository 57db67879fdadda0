#pragma once

#include "streammem/backend.hpp"
#include "streammem/short_term_memory.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace streammem {

inline constexpr std::size_t kDefaultTopK = 3;
inline constexpr double kDefaultMinSimilarity = 0.3;

// One archived event: anchor image, caption, caption embedding, change logs
// and the time range it covered.
struct ArchivedEvent {
    std::int64_t event_id = 0;
    // Fixture/wire identifier of the anchor frame (the first held frame).
    std::string anchor_image_id;
    // Relative to the store root: "anchors/{event_id}.png".
    std::string anchor_path;
    bool anchor_missing = false;
    std::string caption;
    std::vector<double> embedding;
    double start_s = 0.0;
    double end_s = 0.0;
    std::optional<std::string> change_from_previous;
    std::optional<std::string> change_to_next;
    std::size_t frame_count = 0;
    // Set while the caption/embedding backends were unavailable; pending
    // entries are found by time but never by semantics.
    bool pending = false;

    bool operator==(const ArchivedEvent&) const = default;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Entries whose closed time range overlaps [start_s, end_s], in time order.
// `entries` must be ordered and non-overlapping, as a store keeps them.
std::vector<const ArchivedEvent*> search_temporal(std::span<const ArchivedEvent> entries, double start_s, double end_s);

struct SemanticHit {
    const ArchivedEvent* event = nullptr;
    double similarity = 0.0;
};

// Up to k entries with similarity strictly above min_sim, best first, ties
// going to the smaller event id. Pending or zero-norm entries are skipped; a
// zero-norm query matches nothing.
std::vector<SemanticHit> search_semantic(std::span<const ArchivedEvent> entries, std::span<const double> query,
                                         std::size_t k = kDefaultTopK, double min_sim = kDefaultMinSimilarity);
std::vector<SemanticHit> search_semantic(std::span<const ArchivedEvent> entries, const std::string& query,
                                         Embedder& embedder, std::size_t k = kDefaultTopK,
                                         double min_sim = kDefaultMinSimilarity);

// Append-only archive of evicted events. Persisted as
//   {root}/entries.jsonl   one ArchivedEvent per line
//   {root}/anchors/{event_id}.png
class LtmStore {
public:
    // dimension 0 adopts the size of the first embedding seen.
    explicit LtmStore(std::size_t dimension = 0, std::optional<std::filesystem::path> root = std::nullopt);

    // Captions the event, embeds the caption, links change logs with the
    // predecessor and appends. Backend failures leave the entry pending and
    // queue it for retry_pending(). Persists when the store has a root.
    const ArchivedEvent& archive(const StmEvent& event, Captioner& captioner, Embedder& embedder);

    // Inserts a fully formed entry, checking ordering and dimension.
    void append(ArchivedEvent entry, FrameRef anchor = nullptr);

    // Re-attempts pending entries in order; returns how many were resolved.
    std::size_t retry_pending(Captioner& captioner, Embedder& embedder);
    bool has_pending() const { return !retry_queue_.empty(); }

    const std::vector<ArchivedEvent>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t dimension() const { return dimension_; }
    const std::optional<std::filesystem::path>& root() const { return root_; }
    // With autopersist off, archive() leaves the files under root() alone; the
    // root is still used to read anchors back.
    void set_autopersist(bool on) { autopersist_ = on; }

    // Entries that ended at or before `horizon_s`. Always a prefix.
    std::span<const ArchivedEvent> visible_until(double horizon_s) const;

    const ArchivedEvent* find(std::int64_t event_id) const;

    // In-memory anchor if present, else decoded from disk; null when missing.
    FrameRef anchor_image(std::int64_t event_id) const;
    ImageRef anchor_ref(const ArchivedEvent& entry) const;

    // Drops entries past `count` and clears the dangling change_to_next, giving
    // the store as it was when it held `count` entries.
    void truncate(std::size_t count);

    void persist() const;
    void persist_to(const std::filesystem::path& root) const;
    static LtmStore load(const std::filesystem::path& root);

private:
    void link_with_predecessor(std::size_t index, Captioner& captioner);
    bool try_describe(std::size_t index, Captioner& captioner, Embedder& embedder);

    std::size_t dimension_;
    std::optional<std::filesystem::path> root_;
    bool autopersist_ = true;
    std::vector<ArchivedEvent> entries_;
    std::map<std::int64_t, FrameRef> anchors_;
    std::map<std::int64_t, CaptionRequest> retry_queue_;
};

} // namespace streammem
