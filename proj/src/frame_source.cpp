#include "streammem/frame_source.hpp"

#include "streammem/error.hpp"
#include "streammem/image_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace streammem {

SourceFrame DirectoryFrameSource::load(std::size_t position) const
{
    const auto& e = entries_.at(position);
    GrayImage img;
    try {
        img = read_png_gray(e.path);
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& ex) {
        throw FormatError(fmt::format("{}: {}", e.path.string(), ex.what()));
    }
    SourceFrame f;
    f.timestamp_s = e.timestamp_s;
    f.width = img.width;
    f.height = img.height;
    f.gray = std::move(img.pixels);
    f.source_path = e.path.string();
    return f;
}

DirectoryFrameSource load_frame_directory(const std::filesystem::path& root, const std::string& pattern)
{
    const auto meta_path = root / "meta.jsonl";
    std::ifstream in(meta_path);
    if (!in) {
        throw FormatError(fmt::format("{}: missing frame metadata sidecar", meta_path.string()));
    }
    std::vector<DirectoryFrameSource::Entry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            DirectoryFrameSource::Entry e;
            e.index = j.at("index").get<std::int64_t>();
            e.timestamp_s = j.at("timestamp_s").get<double>();
            if (e.index < 0 || !(e.timestamp_s >= 0.0)) {
                throw FormatError("negative index or timestamp");
            }
            e.path = root / fmt::format(fmt::runtime(pattern), e.index);
            entries.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw FormatError(fmt::format("{}:{}: {}", meta_path.string(), line_no, ex.what()));
        }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.index < b.index; });
    return DirectoryFrameSource(root, std::move(entries));
}

StreamSampler::StreamSampler(const FrameSource& source, double fps) : source_(&source), fps_(fps)
{
    if (!(fps > 0.0)) {
        throw ArgumentError(fmt::format("fps must be positive, got {}", fps));
    }
}

std::int64_t StreamSampler::window_of(double t) const
{
    // The epsilon absorbs representation error in timestamps like i/30.
    return static_cast<std::int64_t>(std::floor(t * fps_ + 1e-9));
}

std::optional<std::size_t> StreamSampler::scan()
{
    if (pending_) {
        return pending_;
    }
    double prev = state_.last_source_timestamp;
    for (std::size_t pos = state_.cursor; pos < source_->size(); ++pos) {
        const double t = source_->timestamp(pos);
        if (t < prev) {
            throw StreamOrderError(
                fmt::format("source timestamp {} at position {} precedes {}", t, pos, prev));
        }
        prev = t;
        if (window_of(t) > state_.last_window) {
            pending_ = pos;
            return pending_;
        }
    }
    return std::nullopt;
}

std::optional<double> StreamSampler::peek_timestamp()
{
    if (auto pos = scan()) {
        return source_->timestamp(*pos);
    }
    return std::nullopt;
}

std::optional<Frame> StreamSampler::next()
{
    const auto pos = scan();
    if (!pos) {
        return std::nullopt;
    }
    Frame frame = materialize(*pos, state_.next_index);
    state_.cursor = *pos + 1;
    state_.last_window = window_of(frame.timestamp_s);
    state_.last_source_timestamp = frame.timestamp_s;
    ++state_.next_index;
    pending_.reset();
    return frame;
}

void StreamSampler::restore(const SamplerState& state)
{
    state_ = state;
    pending_.reset();
}

Frame StreamSampler::materialize(std::size_t source_position, std::size_t stream_index) const
{
    SourceFrame src = source_->load(source_position);
    if (src.gray.size() != static_cast<std::size_t>(src.width) * static_cast<std::size_t>(src.height)) {
        throw DimensionError(fmt::format("source frame {} has {} pixels for {}x{}", source_position,
                                         src.gray.size(), src.width, src.height));
    }
    Frame f;
    f.stream_index = stream_index;
    f.timestamp_s = src.timestamp_s;
    f.width = src.width;
    f.height = src.height;
    f.pixels = std::move(src.gray);
    f.source_path = std::move(src.source_path);
    f.source_position = source_position;
    f.label = frame_label(stream_index, f.timestamp_s);
    return f;
}

std::vector<Frame> sample_stream(const FrameSource& source, double fps)
{
    StreamSampler sampler(source, fps);
    std::vector<Frame> out;
    while (auto f = sampler.next()) {
        out.push_back(std::move(*f));
    }
    return out;
}

std::filesystem::path resolve_frames_dir(const std::filesystem::path& dir)
{
    if (std::filesystem::exists(dir / "meta.jsonl") || !std::filesystem::exists(dir / "frames" / "meta.jsonl")) {
        return dir;
    }
    return dir / "frames";
}

} // namespace streammem
