#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace streammem {

inline constexpr std::size_t kDefaultBinCount = 64;

// Normalized grayscale histogram. Bins sum to 1 and are non-negative.
struct Histogram {
    std::vector<double> bins;

    std::size_t bin_count() const { return bins.size(); }
    bool operator==(const Histogram&) const = default;
};

// One sampled frame. Pixels are 8-bit grayscale, row-major, converted on
// ingest; `source_path` keeps the original (possibly color) image around so
// perception tools can reopen it.
struct Frame {
    std::size_t stream_index = 0;
    double timestamp_s = 0.0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
    std::optional<std::string> source_path;
    // Position of the frame in the unsampled source; lets checkpoints reload
    // held frames without keeping pixels around.
    std::size_t source_position = 0;
    std::string label;
};

using FrameRef = std::shared_ptr<const Frame>;

// BT.601 luma: round(0.299 R + 0.587 G + 0.114 B).
std::vector<std::uint8_t> to_grayscale(std::span<const std::uint8_t> rgb, int width, int height);

Histogram compute_histogram(const Frame& frame, std::size_t bin_count = kDefaultBinCount);
Histogram compute_histogram(std::span<const std::uint8_t> gray, std::size_t bin_count = kDefaultBinCount);

// Shortest round-trip decimal with at least one fractional digit: 12.5 -> "12.5", 13 -> "13.0".
std::string format_seconds(double seconds);

// "Frame {i} | {t}s"
std::string frame_label(std::size_t index, double timestamp_s);

// Identifier used to look an image up in fixture files and to name it on the
// wire: the file name of `source_path` when present, else "frame-{index}".
std::string image_id(const Frame& frame);

// Mean pixel intensity over all frames, rounded to the nearest integer.
int mean_intensity(std::span<const FrameRef> frames);

} // namespace streammem
