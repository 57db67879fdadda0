#pragma once

#include "streammem/frame.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace streammem {

// A raw, unsampled source frame as delivered by a source.
struct SourceFrame {
    double timestamp_s = 0.0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> gray;
    std::optional<std::string> source_path;
};

// Ordered source of frames with native timestamps. Timestamps are cheap to
// query, pixels are decoded on demand, so the sampler only pays for frames it
// keeps.
class FrameSource {
public:
    virtual ~FrameSource() = default;

    virtual std::size_t size() const = 0;
    virtual double timestamp(std::size_t position) const = 0;
    virtual SourceFrame load(std::size_t position) const = 0;
};

class VectorFrameSource : public FrameSource {
public:
    VectorFrameSource() = default;
    explicit VectorFrameSource(std::vector<SourceFrame> frames) : frames_(std::move(frames)) {}

    void push(SourceFrame frame) { frames_.push_back(std::move(frame)); }

    std::size_t size() const override { return frames_.size(); }
    double timestamp(std::size_t position) const override { return frames_.at(position).timestamp_s; }
    SourceFrame load(std::size_t position) const override { return frames_.at(position); }

private:
    std::vector<SourceFrame> frames_;
};

// `frames/{%06d}.png` plus `frames/meta.jsonl` with one
// {"index": int, "timestamp_s": float} object per line.
class DirectoryFrameSource : public FrameSource {
public:
    struct Entry {
        std::int64_t index;
        double timestamp_s;
        std::filesystem::path path;
    };

    DirectoryFrameSource(std::filesystem::path root, std::vector<Entry> entries)
        : root_(std::move(root)), entries_(std::move(entries))
    {
    }

    const std::filesystem::path& root() const { return root_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::size_t size() const override { return entries_.size(); }
    double timestamp(std::size_t position) const override { return entries_.at(position).timestamp_s; }
    SourceFrame load(std::size_t position) const override;

private:
    std::filesystem::path root_;
    std::vector<Entry> entries_;
};

inline constexpr const char* kDefaultFramePattern = "{:06d}.png";

// Reads meta.jsonl (authoritative for timestamps) and orders frames by index.
// Images are not decoded until loaded.
DirectoryFrameSource load_frame_directory(const std::filesystem::path& root,
                                          const std::string& pattern = kDefaultFramePattern);

// `dir` itself when it holds meta.jsonl, else `dir/frames` when that does, so
// a synthetic output directory can be passed directly.
std::filesystem::path resolve_frames_dir(const std::filesystem::path& dir);

struct SamplerState {
    std::size_t cursor = 0;
    std::size_t next_index = 0;
    std::int64_t last_window = -1;
    double last_source_timestamp = -std::numeric_limits<double>::infinity();

    bool operator==(const SamplerState&) const = default;
};

// Lazily samples a source at `fps`: emits the first source frame whose
// timestamp enters each 1/fps-second window.
class StreamSampler {
public:
    explicit StreamSampler(const FrameSource& source, double fps = 1.0);

    // Timestamp of the next frame next() would return, without consuming it.
    std::optional<double> peek_timestamp();
    std::optional<Frame> next();

    const SamplerState& state() const { return state_; }
    void restore(const SamplerState& state);

    double fps() const { return fps_; }

    // Rebuilds the sampled frame for a known (source position, stream index)
    // pair, e.g. when restoring a checkpoint.
    Frame materialize(std::size_t source_position, std::size_t stream_index) const;

private:
    std::int64_t window_of(double t) const;
    std::optional<std::size_t> scan();

    const FrameSource* source_;
    double fps_;
    SamplerState state_;
    std::optional<std::size_t> pending_;
};

std::vector<Frame> sample_stream(const FrameSource& source, double fps = 1.0);

} // namespace streammem
