#include "streammem/frame.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <numeric>

namespace streammem {

std::vector<std::uint8_t> to_grayscale(std::span<const std::uint8_t> rgb, int width, int height)
{
    if (width < 0 || height < 0 ||
        rgb.size() != 3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw DimensionError(fmt::format("rgb buffer of {} bytes does not match {}x{}x3",
                                         rgb.size(), width, height));
    }
    std::vector<std::uint8_t> gray(rgb.size() / 3);
    for (std::size_t i = 0; i < gray.size(); ++i) {
        const double luma = 0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2];
        gray[i] = static_cast<std::uint8_t>(std::clamp(std::lround(luma), 0L, 255L));
    }
    return gray;
}

Histogram compute_histogram(std::span<const std::uint8_t> gray, std::size_t bin_count)
{
    if (bin_count == 0 || bin_count > 256 || 256 % bin_count != 0) {
        throw ArgumentError(fmt::format("bin count {} must divide 256", bin_count));
    }
    if (gray.empty()) {
        throw DegenerateInputError("cannot histogram a frame with no pixels");
    }
    const std::size_t width = 256 / bin_count;
    std::vector<std::size_t> counts(bin_count, 0);
    for (auto v : gray) {
        ++counts[v / width];
    }
    Histogram h;
    h.bins.resize(bin_count);
    const double total = static_cast<double>(gray.size());
    for (std::size_t k = 0; k < bin_count; ++k) {
        h.bins[k] = static_cast<double>(counts[k]) / total;
    }
    return h;
}

Histogram compute_histogram(const Frame& frame, std::size_t bin_count)
{
    return compute_histogram(std::span<const std::uint8_t>(frame.pixels), bin_count);
}

std::string format_seconds(double seconds)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), seconds);
    std::string s(buf, ec == std::errc() ? end : buf);
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string frame_label(std::size_t index, double timestamp_s)
{
    return fmt::format("Frame {} | {}s", index, format_seconds(timestamp_s));
}

std::string image_id(const Frame& frame)
{
    if (frame.source_path && !frame.source_path->empty()) {
        return std::filesystem::path(*frame.source_path).filename().string();
    }
    return fmt::format("frame-{}", frame.stream_index);
}

int mean_intensity(std::span<const FrameRef> frames)
{
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : frames) {
        sum += std::accumulate(f->pixels.begin(), f->pixels.end(), 0.0);
        count += f->pixels.size();
    }
    if (count == 0) {
        return 0;
    }
    return static_cast<int>(std::lround(sum / static_cast<double>(count)));
}

} // namespace streammem
