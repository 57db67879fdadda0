#include "streammem/harness/synthetic.hpp"

#include "streammem/error.hpp"
#include "streammem/image_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace streammem {

namespace fs = std::filesystem;

namespace {

constexpr double kEps = 1e-9;

std::string frame_file(std::size_t position)
{
    return fmt::format("{:06d}.png", position);
}

} // namespace

double SyntheticSpec::duration_s() const
{
    double total = 0.0;
    for (const auto& s : scenes) {
        total += s.duration_s;
    }
    return total;
}

std::size_t SyntheticSpec::frame_count() const
{
    return static_cast<std::size_t>(std::floor(duration_s() * fps + kEps));
}

std::vector<double> SyntheticSpec::boundaries_s() const
{
    std::vector<double> out;
    double t = 0.0;
    for (std::size_t i = 0; i + 1 < scenes.size(); ++i) {
        t += scenes[i].duration_s;
        out.push_back(t);
    }
    return out;
}

std::size_t SyntheticSpec::scene_at(double t) const
{
    double end = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        end += scenes[i].duration_s;
        if (t + kEps < end) {
            return i;
        }
    }
    return scenes.empty() ? 0 : scenes.size() - 1;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j)
{
    SyntheticSpec spec;
    try {
        spec.width = j.value("width", spec.width);
        spec.height = j.value("height", spec.height);
        spec.fps = j.value("fps", spec.fps);
        spec.seed = j.value("seed", spec.seed);
        for (const auto& js : j.at("scenes")) {
            SceneSpec s;
            s.duration_s = js.at("duration_s").get<double>();
            s.intensity = js.value("intensity", s.intensity);
            s.noise = js.value("noise", s.noise);
            if (js.contains("ocr")) {
                s.ocr = js.at("ocr").get<std::vector<std::string>>();
            }
            if (js.contains("objects")) {
                for (const auto& o : js.at("objects")) {
                    const auto box = o.at("box").get<std::vector<double>>();
                    if (box.size() != 4) {
                        throw ConfigError("object box must have 4 coordinates");
                    }
                    s.objects.push_back({o.at("label").get<std::string>(), {box[0], box[1], box[2], box[3]},
                                         o.value("score", 1.0)});
                }
            }
            spec.scenes.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(fmt::format("synthetic spec: {}", ex.what()));
    }
    if (spec.width <= 0 || spec.height <= 0) {
        throw ConfigError(fmt::format("synthetic spec: bad frame size {}x{}", spec.width, spec.height));
    }
    if (!(spec.fps > 0.0)) {
        throw ConfigError("synthetic spec: fps must be positive");
    }
    if (spec.scenes.empty()) {
        throw ConfigError("synthetic spec: no scenes");
    }
    for (const auto& s : spec.scenes) {
        if (!(s.duration_s > 0.0)) {
            throw ConfigError("synthetic spec: scene duration must be positive");
        }
        if (s.intensity < 0 || s.intensity > 255 || s.noise < 0 || s.noise > 255) {
            throw ConfigError("synthetic spec: intensity and noise must lie in [0, 255]");
        }
    }
    return spec;
}

SyntheticSpec SyntheticSpec::load(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("{}: cannot open synthetic spec", path.string()));
    }
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw ConfigError(fmt::format("{}: not valid JSON", path.string()));
    }
    return from_json(j);
}

nlohmann::json SyntheticSpec::to_json() const
{
    nlohmann::json scenes_j = nlohmann::json::array();
    for (const auto& s : scenes) {
        nlohmann::json objects = nlohmann::json::array();
        for (const auto& o : s.objects) {
            objects.push_back({{"label", o.label}, {"box", {o.box.x0, o.box.y0, o.box.x1, o.box.y1}}, {"score", o.score}});
        }
        scenes_j.push_back({{"duration_s", s.duration_s},
                            {"intensity", s.intensity},
                            {"noise", s.noise},
                            {"ocr", s.ocr},
                            {"objects", std::move(objects)}});
    }
    return {{"width", width}, {"height", height}, {"fps", fps}, {"seed", seed}, {"scenes", std::move(scenes_j)}};
}

SyntheticFrameSource::SyntheticFrameSource(SyntheticSpec spec) : spec_(std::move(spec)), count_(spec_.frame_count()) {}

double SyntheticFrameSource::timestamp(std::size_t position) const
{
    return static_cast<double>(position) / spec_.fps;
}

SourceFrame SyntheticFrameSource::load(std::size_t position) const
{
    if (position >= count_) {
        throw ArgumentError(fmt::format("synthetic frame {} out of range ({} frames)", position, count_));
    }
    SourceFrame f;
    f.timestamp_s = timestamp(position);
    f.width = spec_.width;
    f.height = spec_.height;
    f.source_path = frame_file(position);
    const auto& scene = spec_.scenes[spec_.scene_at(f.timestamp_s)];
    f.gray.assign(static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height),
                  static_cast<std::uint8_t>(scene.intensity));
    if (scene.noise > 0) {
        std::seed_seq seq{spec_.seed, static_cast<std::uint64_t>(position)};
        std::mt19937_64 rng(seq);
        std::uniform_int_distribution<int> noise(-scene.noise, scene.noise);
        for (auto& p : f.gray) {
            p = static_cast<std::uint8_t>(std::clamp(scene.intensity + noise(rng), 0, 255));
        }
    }
    return f;
}

FixtureSet SyntheticFrameSource::fixtures() const
{
    FixtureSet set;
    for (std::size_t i = 0; i < count_; ++i) {
        const auto& scene = spec_.scenes[spec_.scene_at(timestamp(i))];
        if (!scene.ocr.empty()) {
            set.ocr[frame_file(i)] = scene.ocr;
        }
        if (!scene.objects.empty()) {
            set.detect[frame_file(i)] = scene.objects;
        }
    }
    return set;
}

void write_synthetic(const SyntheticSpec& spec, const fs::path& out_dir)
{
    const SyntheticFrameSource source(spec);
    const auto frames_dir = out_dir / "frames";
    fs::create_directories(frames_dir);
    fs::create_directories(out_dir / "fixtures");
    {
        std::ofstream meta(frames_dir / "meta.jsonl", std::ios::trunc);
        if (!meta) {
            throw DataError(fmt::format("{}: cannot write", (frames_dir / "meta.jsonl").string()));
        }
        for (std::size_t i = 0; i < source.size(); ++i) {
            const auto f = source.load(i);
            write_png_gray(frames_dir / frame_file(i), {f.width, f.height, f.gray});
            meta << nlohmann::json{{"index", i}, {"timestamp_s", f.timestamp_s}}.dump() << '\n';
        }
    }
    source.fixtures().save(out_dir / "fixtures" / "perception.json");

    nlohmann::json scenes = nlohmann::json::array();
    double start = 0.0;
    for (const auto& s : spec.scenes) {
        scenes.push_back(
            {{"start_s", start}, {"end_s", start + s.duration_s}, {"intensity", s.intensity}, {"noise", s.noise}});
        start += s.duration_s;
    }
    std::ofstream gt(out_dir / "boundaries.json", std::ios::trunc);
    gt << nlohmann::json{{"boundaries_s", spec.boundaries_s()}, {"scenes", std::move(scenes)}}.dump(2) << '\n';
}

} // namespace streammem
