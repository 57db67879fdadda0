#pragma once

#include "streammem/backend.hpp"
#include "streammem/frame_source.hpp"
#include "streammem/mock_backend.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace streammem {

struct SceneSpec {
    double duration_s = 0.0;
    // Base gray level; pixels are intensity + uniform noise in [-noise, noise].
    int intensity = 128;
    int noise = 0;
    // Fixtures attached to every frame of the scene.
    std::vector<std::string> ocr;
    std::vector<Detection> objects;
};

// {"width": 32, "height": 32, "fps": 1.0, "seed": 7,
//  "scenes": [{"duration_s": 20, "intensity": 40, "noise": 4,
//              "ocr": ["EXIT 42"],
//              "objects": [{"label": "cat", "box": [2, 2, 12, 12], "score": 0.9}]}]}
struct SyntheticSpec {
    int width = 32;
    int height = 32;
    // Native frame rate of the generated source.
    double fps = 1.0;
    std::uint64_t seed = 0;
    std::vector<SceneSpec> scenes;

    double duration_s() const;
    std::size_t frame_count() const;
    // Scene starts after the first one.
    std::vector<double> boundaries_s() const;
    std::size_t scene_at(double t) const;

    static SyntheticSpec from_json(const nlohmann::json& j);
    static SyntheticSpec load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

// Generates frames on demand, deterministically per (seed, position). Frames
// carry the file name they get from write_synthetic ("000012.png") so image
// ids agree between in-memory and on-disk streams.
class SyntheticFrameSource final : public FrameSource {
public:
    explicit SyntheticFrameSource(SyntheticSpec spec);

    std::size_t size() const override { return count_; }
    double timestamp(std::size_t position) const override;
    SourceFrame load(std::size_t position) const override;

    const SyntheticSpec& spec() const { return spec_; }
    // Fixture set keyed by image id, covering every frame of fixture scenes.
    FixtureSet fixtures() const;

private:
    SyntheticSpec spec_;
    std::size_t count_;
};

// Writes DIR/frames/{%06d}.png, DIR/frames/meta.jsonl,
// DIR/fixtures/perception.json and DIR/boundaries.json.
void write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

} // namespace streammem
