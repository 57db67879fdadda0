#include "streammem/mock_backend.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>

namespace streammem {

ImageRef image_ref(const FrameRef& frame)
{
    return ImageRef{image_id(*frame), frame, frame->source_path};
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (c < 128 && std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension)
{
    if (dimension_ == 0) {
        throw ConfigError("embedding dimension must be positive");
    }
}

std::vector<double> HashEmbedder::embed(const std::string& text)
{
    std::vector<double> v(dimension_, 0.0);
    for (const auto& tok : tokenize(text)) {
        v[fnv1a64(tok) % dimension_] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) {
            x /= norm;
        }
    }
    return v;
}

std::string MockCaptioner::caption(const CaptionRequest& request)
{
    return fmt::format("mock-event e{}: mean-intensity {}, {} frames, {}s-{}s", request.event_id,
                       mean_intensity(request.frames), request.frames.size(), format_seconds(request.start_s),
                       format_seconds(request.end_s));
}

std::string MockCaptioner::describe_change(const std::string& previous, const std::string& current)
{
    static const std::regex intensity(R"(mean-intensity (-?\d+))");
    const auto grab = [](const std::string& caption) -> std::string {
        std::smatch m;
        if (std::regex_search(caption, m, intensity)) {
            return m[1].str();
        }
        return "?";
    };
    return fmt::format("intensity {} -> {}", grab(previous), grab(current));
}

FixtureSet FixtureSet::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError(fmt::format("{}: cannot open fixture file", path.string()));
    }
    FixtureSet out;
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.contains("ocr")) {
            for (const auto& [id, lines] : j.at("ocr").items()) {
                out.ocr[id] = lines.get<std::vector<std::string>>();
            }
        }
        if (j.contains("detect")) {
            for (const auto& [id, dets] : j.at("detect").items()) {
                auto& list = out.detect[id];
                for (const auto& d : dets) {
                    const auto box = d.at("box").get<std::vector<double>>();
                    if (box.size() != 4) {
                        throw FormatError(fmt::format("detection box for '{}' needs 4 numbers", id));
                    }
                    list.push_back({d.at("label").get<std::string>(), {box[0], box[1], box[2], box[3]},
                                    d.at("score").get<double>()});
                }
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(fmt::format("{}: {}", path.string(), ex.what()));
    }
    return out;
}

void FixtureSet::save(const std::filesystem::path& path) const
{
    nlohmann::json j = {{"ocr", nlohmann::json::object()}, {"detect", nlohmann::json::object()}};
    for (const auto& [id, lines] : ocr) {
        j["ocr"][id] = lines;
    }
    for (const auto& [id, dets] : detect) {
        auto& arr = j["detect"][id] = nlohmann::json::array();
        for (const auto& d : dets) {
            arr.push_back({{"label", d.label}, {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}}, {"score", d.score}});
        }
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError(fmt::format("{}: cannot write fixture file", path.string()));
    }
    out << j.dump(2) << '\n';
}

std::vector<std::string> MockOcr::ocr(const ImageRef& image)
{
    if (auto it = fixtures_->ocr.find(image.image_id); it != fixtures_->ocr.end()) {
        return it->second;
    }
    return {};
}

std::vector<Detection> MockDetector::detect(const ImageRef& image, const std::vector<std::string>& labels)
{
    std::vector<Detection> out;
    auto it = fixtures_->detect.find(image.image_id);
    if (it == fixtures_->detect.end()) {
        return out;
    }
    const auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    for (const auto& d : it->second) {
        const auto want = lower(d.label);
        if (std::any_of(labels.begin(), labels.end(), [&](const std::string& l) { return lower(l) == want; })) {
            out.push_back(d);
        }
    }
    return out;
}

} // namespace streammem
