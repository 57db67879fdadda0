#include "streammem/long_term_memory.hpp"

#include "streammem/error.hpp"
#include "streammem/image_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace streammem {

namespace fs = std::filesystem;

double cosine_similarity(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw DimensionError(fmt::format("cosine of vectors with {} and {} dims", a.size(), b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw DegenerateInputError("cosine similarity of a zero vector");
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<const ArchivedEvent*> search_temporal(std::span<const ArchivedEvent> entries, double start_s, double end_s)
{
    if (start_s > end_s) {
        throw ArgumentError(fmt::format("inverted time range [{}, {}]", start_s, end_s));
    }
    // Ranges are ordered and disjoint, so both endpoints are sorted and the
    // overlapping entries form one contiguous run.
    auto first = std::partition_point(entries.begin(), entries.end(),
                                      [&](const ArchivedEvent& e) { return e.end_s < start_s; });
    auto last = std::partition_point(first, entries.end(),
                                     [&](const ArchivedEvent& e) { return e.start_s <= end_s; });
    std::vector<const ArchivedEvent*> out;
    for (auto it = first; it != last; ++it) {
        out.push_back(&*it);
    }
    return out;
}

namespace {

bool searchable(const ArchivedEvent& e)
{
    if (e.pending || e.embedding.empty()) {
        return false;
    }
    return std::any_of(e.embedding.begin(), e.embedding.end(), [](double x) { return x != 0.0; });
}

} // namespace

std::vector<SemanticHit> search_semantic(std::span<const ArchivedEvent> entries, std::span<const double> query,
                                         std::size_t k, double min_sim)
{
    if (k == 0) {
        throw ArgumentError("k must be at least 1");
    }
    std::vector<SemanticHit> hits;
    if (std::all_of(query.begin(), query.end(), [](double x) { return x == 0.0; })) {
        return hits;
    }
    for (const auto& e : entries) {
        if (!searchable(e)) {
            continue;
        }
        const double sim = cosine_similarity(e.embedding, query);
        if (sim > min_sim) {
            hits.push_back({&e, sim});
        }
    }
    const auto better = [](const SemanticHit& a, const SemanticHit& b) {
        if (a.similarity != b.similarity) {
            return a.similarity > b.similarity;
        }
        return a.event->event_id < b.event->event_id;
    };
    const auto keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
    hits.resize(keep);
    return hits;
}

std::vector<SemanticHit> search_semantic(std::span<const ArchivedEvent> entries, const std::string& query,
                                         Embedder& embedder, std::size_t k, double min_sim)
{
    if (entries.empty()) {
        return {};
    }
    const auto q = embedder.embed(query);
    return search_semantic(entries, std::span<const double>(q), k, min_sim);
}

LtmStore::LtmStore(std::size_t dimension, std::optional<fs::path> root)
    : dimension_(dimension), root_(std::move(root))
{
}

void LtmStore::append(ArchivedEvent entry, FrameRef anchor)
{
    if (entry.start_s > entry.end_s) {
        throw ArgumentError(fmt::format("event {} has start {} after end {}", entry.event_id, entry.start_s, entry.end_s));
    }
    if (!entries_.empty()) {
        const auto& last = entries_.back();
        if (entry.event_id <= last.event_id) {
            throw ArgumentError(fmt::format("event id {} does not follow {}", entry.event_id, last.event_id));
        }
        if (entry.start_s <= last.end_s) {
            throw ArgumentError(fmt::format("event {} starts at {} inside its predecessor ending at {}",
                                            entry.event_id, entry.start_s, last.end_s));
        }
    }
    if (!entry.pending) {
        if (dimension_ == 0) {
            dimension_ = entry.embedding.size();
        }
        if (entry.embedding.size() != dimension_) {
            throw DimensionError(fmt::format("embedding of {} dims in a {}-dim store", entry.embedding.size(), dimension_));
        }
    }
    if (anchor) {
        anchors_[entry.event_id] = std::move(anchor);
    }
    entries_.push_back(std::move(entry));
}

bool LtmStore::try_describe(std::size_t index, Captioner& captioner, Embedder& embedder)
{
    auto& e = entries_[index];
    const auto& request = retry_queue_.at(e.event_id);
    try {
        std::string caption = captioner.caption(request);
        std::vector<double> embedding = embedder.embed(caption);
        if (dimension_ == 0) {
            dimension_ = embedding.size();
        }
        if (embedding.size() != dimension_) {
            throw DimensionError(fmt::format("embedder returned {} dims for a {}-dim store", embedding.size(), dimension_));
        }
        if (caption.empty()) {
            throw BackendError("captioner returned an empty caption");
        }
        e.caption = std::move(caption);
        e.embedding = std::move(embedding);
        e.pending = false;
        retry_queue_.erase(e.event_id);
        return true;
    } catch (const BackendError&) {
        return false;
    }
}

void LtmStore::link_with_predecessor(std::size_t index, Captioner& captioner)
{
    if (index == 0) {
        return;
    }
    auto& prev = entries_[index - 1];
    auto& cur = entries_[index];
    if (prev.pending || cur.pending || cur.change_from_previous) {
        return;
    }
    try {
        const auto change = captioner.describe_change(prev.caption, cur.caption);
        cur.change_from_previous = change;
        prev.change_to_next = change;
    } catch (const BackendError&) {
        // Left unlinked; retry_pending() tries again.
    }
}

const ArchivedEvent& LtmStore::archive(const StmEvent& event, Captioner& captioner, Embedder& embedder)
{
    if (event.frames.empty()) {
        throw ArgumentError(fmt::format("event {} has no held frames to archive", event.state.event_id));
    }
    ArchivedEvent entry;
    entry.event_id = event.state.event_id;
    entry.anchor_image_id = image_id(*event.frames.front());
    entry.anchor_path = fmt::format("anchors/{}.png", entry.event_id);
    entry.start_s = event.state.start_timestamp_s;
    entry.end_s = event.state.last_timestamp_s;
    entry.frame_count = event.frames.size();
    entry.pending = true;
    append(entry, event.frames.front());

    retry_queue_[entry.event_id] = CaptionRequest{entry.event_id, event.frames, entry.start_s, entry.end_s};
    const std::size_t index = entries_.size() - 1;
    if (try_describe(index, captioner, embedder)) {
        link_with_predecessor(index, captioner);
    }
    if (root_ && autopersist_) {
        persist();
    }
    return entries_.back();
}

std::size_t LtmStore::retry_pending(Captioner& captioner, Embedder& embedder)
{
    std::size_t resolved = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].pending && retry_queue_.count(entries_[i].event_id) != 0 &&
            try_describe(i, captioner, embedder)) {
            ++resolved;
        }
    }
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        link_with_predecessor(i, captioner);
    }
    if (resolved > 0 && root_ && autopersist_) {
        persist();
    }
    return resolved;
}

std::span<const ArchivedEvent> LtmStore::visible_until(double horizon_s) const
{
    auto end = std::partition_point(entries_.begin(), entries_.end(),
                                    [&](const ArchivedEvent& e) { return e.end_s <= horizon_s; });
    return {entries_.data(), static_cast<std::size_t>(end - entries_.begin())};
}

const ArchivedEvent* LtmStore::find(std::int64_t event_id) const
{
    auto it = std::lower_bound(entries_.begin(), entries_.end(), event_id,
                               [](const ArchivedEvent& e, std::int64_t id) { return e.event_id < id; });
    if (it == entries_.end() || it->event_id != event_id) {
        return nullptr;
    }
    return &*it;
}

FrameRef LtmStore::anchor_image(std::int64_t event_id) const
{
    if (auto it = anchors_.find(event_id); it != anchors_.end()) {
        return it->second;
    }
    const auto* e = find(event_id);
    if (e == nullptr || !root_ || e->anchor_path.empty()) {
        return nullptr;
    }
    const auto path = *root_ / e->anchor_path;
    if (!fs::exists(path)) {
        return nullptr;
    }
    auto img = read_png_gray(path);
    auto frame = std::make_shared<Frame>();
    frame->timestamp_s = e->start_s;
    frame->width = img.width;
    frame->height = img.height;
    frame->pixels = std::move(img.pixels);
    frame->source_path = path.string();
    return frame;
}

ImageRef LtmStore::anchor_ref(const ArchivedEvent& entry) const
{
    ImageRef ref;
    ref.image_id = entry.anchor_image_id;
    ref.frame = anchor_image(entry.event_id);
    if (ref.frame) {
        ref.path = ref.frame->source_path;
    }
    return ref;
}

void LtmStore::truncate(std::size_t count)
{
    if (count >= entries_.size()) {
        return;
    }
    for (std::size_t i = count; i < entries_.size(); ++i) {
        anchors_.erase(entries_[i].event_id);
        retry_queue_.erase(entries_[i].event_id);
    }
    entries_.resize(count);
    if (!entries_.empty()) {
        entries_.back().change_to_next.reset();
    }
}

namespace {

nlohmann::json optional_text(const std::optional<std::string>& s)
{
    return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}

std::optional<std::string> read_optional_text(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<std::string>();
}

} // namespace

void LtmStore::persist() const
{
    if (!root_) {
        throw ConfigError("long-term store has no persistence root");
    }
    persist_to(*root_);
}

void LtmStore::persist_to(const fs::path& root) const
{
    fs::create_directories(root / "anchors");
    for (const auto& [id, frame] : anchors_) {
        const auto* e = find(id);
        if (e == nullptr) {
            continue;
        }
        const auto path = root / e->anchor_path;
        if (!fs::exists(path)) {
            write_png_gray(path, {frame->width, frame->height, frame->pixels});
        }
    }
    const auto tmp = root / "entries.jsonl.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw DataError(fmt::format("{}: cannot write", tmp.string()));
        }
        for (const auto& e : entries_) {
            const nlohmann::json j = {{"event_id", e.event_id},
                                      {"anchor_path", e.anchor_path},
                                      {"anchor_image_id", e.anchor_image_id},
                                      {"caption", e.caption},
                                      {"embedding", e.embedding},
                                      {"start_s", e.start_s},
                                      {"end_s", e.end_s},
                                      {"change_from_previous", optional_text(e.change_from_previous)},
                                      {"change_to_next", optional_text(e.change_to_next)},
                                      {"frame_count", e.frame_count},
                                      {"pending", e.pending}};
            out << j.dump() << '\n';
        }
    }
    fs::rename(tmp, root / "entries.jsonl");
}

LtmStore LtmStore::load(const fs::path& root)
{
    const auto path = root / "entries.jsonl";
    std::ifstream in(path);
    if (!in) {
        throw FormatError(fmt::format("{}: cannot open", path.string()));
    }
    LtmStore store(0, root);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        ArchivedEvent e;
        try {
            const auto j = nlohmann::json::parse(line);
            e.event_id = j.at("event_id").get<std::int64_t>();
            e.anchor_path = j.at("anchor_path").get<std::string>();
            e.anchor_image_id = j.value("anchor_image_id", std::string());
            e.caption = j.at("caption").get<std::string>();
            e.embedding = j.at("embedding").get<std::vector<double>>();
            e.start_s = j.at("start_s").get<double>();
            e.end_s = j.at("end_s").get<double>();
            e.change_from_previous = read_optional_text(j, "change_from_previous");
            e.change_to_next = read_optional_text(j, "change_to_next");
            e.frame_count = j.value("frame_count", std::size_t{0});
            e.pending = j.value("pending", false);
            e.anchor_missing = e.anchor_path.empty() || !fs::exists(root / e.anchor_path);
            store.append(std::move(e));
        } catch (const std::exception& ex) {
            throw FormatError(fmt::format("{}:{}: {}", path.string(), line_no, ex.what()));
        }
    }
    // Pending entries can only be re-captioned from their anchor after a reload.
    for (const auto& e : store.entries_) {
        if (e.pending) {
            if (auto anchor = store.anchor_image(e.event_id)) {
                store.retry_queue_[e.event_id] = CaptionRequest{e.event_id, {anchor}, e.start_s, e.end_s};
            }
        }
    }
    return store;
}

} // namespace streammem
