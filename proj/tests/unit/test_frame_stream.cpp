#include "streammem/error.hpp"
#include "streammem/frame.hpp"
#include "streammem/frame_source.hpp"
#include "streammem/image_io.hpp"

#include "../support/frames.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>
#include <fmt/format.h>
#include <png.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

using namespace streammem;
using testing_support::constant_source;

namespace {

std::vector<double> timestamps_of(const std::vector<Frame>& frames)
{
    std::vector<double> out;
    for (const auto& f : frames) {
        out.push_back(f.timestamp_s);
    }
    return out;
}

} // namespace

TEST_CASE("sample_stream keeps the first frame of each one-second window")
{
    VectorFrameSource src;
    for (double t : {0.0, 0.5, 1.0, 1.5, 2.0}) {
        src.push(constant_source(t, 10));
    }
    const auto frames = sample_stream(src, 1.0);
    CHECK(timestamps_of(frames) == std::vector<double>{0.0, 1.0, 2.0});
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(frames[i].stream_index == i);
        CHECK(frames[i].label == frame_label(i, frames[i].timestamp_s));
    }
}

TEST_CASE("sample_stream passes a 1 fps source through unchanged")
{
    VectorFrameSource src;
    for (int i = 0; i < 12; ++i) {
        src.push(constant_source(i, static_cast<std::uint8_t>(i)));
    }
    const auto frames = sample_stream(src, 1.0);
    REQUIRE(frames.size() == 12);
    for (int i = 0; i < 12; ++i) {
        CHECK(frames[i].timestamp_s == static_cast<double>(i));
        CHECK(frames[i].pixels.front() == i);
    }
}

TEST_CASE("30 fps for 10 s sampled at 1 fps matches the window oracle")
{
    VectorFrameSource src;
    for (int i = 0; i < 300; ++i) {
        src.push(constant_source(static_cast<double>(i) / 30.0, 0));
    }
    const auto frames = sample_stream(src, 1.0);
    const auto expected = oracle::sampled_positions(300, 30, 1);
    REQUIRE(expected.size() == 10);
    REQUIRE(frames.size() == expected.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(frames[i].stream_index == i);
        CHECK(frames[i].source_position == expected[i]);
    }
}

TEST_CASE("sample_stream frame count lies within floor(N) and ceil(N)+1")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> step(0.01, 0.9);
    for (int trial = 0; trial < 50; ++trial) {
        VectorFrameSource src;
        double t = 0.0;
        while (t < 20.0) {
            src.push(constant_source(t, 0));
            t += step(rng);
        }
        const double span = src.timestamp(src.size() - 1) - src.timestamp(0);
        const auto frames = sample_stream(src, 1.0);
        CHECK(frames.size() >= static_cast<std::size_t>(std::floor(span)));
        CHECK(frames.size() <= static_cast<std::size_t>(std::ceil(span)) + 1);
        for (std::size_t i = 1; i < frames.size(); ++i) {
            CHECK(std::floor(frames[i].timestamp_s) > std::floor(frames[i - 1].timestamp_s));
        }
    }
}

TEST_CASE("sample_stream on an empty source is empty")
{
    VectorFrameSource src;
    CHECK(sample_stream(src, 1.0).empty());
}

TEST_CASE("sample_stream rejects decreasing source timestamps")
{
    VectorFrameSource src;
    src.push(constant_source(0.0, 0));
    src.push(constant_source(2.0, 0));
    src.push(constant_source(1.5, 0));
    src.push(constant_source(3.0, 0));
    CHECK_THROWS_AS(sample_stream(src, 1.0), StreamOrderError);
    CHECK_THROWS_AS(StreamSampler(src, 0.0), ArgumentError);
}

TEST_CASE("sampler state restores to the same continuation")
{
    VectorFrameSource src;
    for (int i = 0; i < 40; ++i) {
        src.push(constant_source(i * 0.25, static_cast<std::uint8_t>(i)));
    }
    StreamSampler a(src, 1.0);
    a.next();
    a.next();
    a.peek_timestamp();
    const auto saved = a.state();
    const auto rest_a = [&] {
        std::vector<double> ts;
        while (auto f = a.next()) {
            ts.push_back(f->timestamp_s);
        }
        return ts;
    }();
    StreamSampler b(src, 1.0);
    b.restore(saved);
    std::vector<double> rest_b;
    while (auto f = b.next()) {
        rest_b.push_back(f->timestamp_s);
    }
    CHECK(rest_a == rest_b);
    CHECK(rest_a.front() == 2.0);
}

TEST_CASE("to_grayscale uses BT.601 luma")
{
    const std::vector<std::uint8_t> rgb{255, 255, 255, 0, 0, 0, 255, 0, 0};
    const auto gray = to_grayscale(rgb, 3, 1);
    CHECK(gray[0] == 255);
    CHECK(gray[1] == 0);
    // Independent evaluation: 0.299 * 255 = 76.245.
    CHECK(gray[2] == static_cast<int>(std::lround(0.299 * 255.0)));
    CHECK(gray[2] == 76);
}

TEST_CASE("to_grayscale is the identity on gray triplets")
{
    for (int v = 0; v < 256; ++v) {
        const std::vector<std::uint8_t> rgb(3, static_cast<std::uint8_t>(v));
        CHECK(to_grayscale(rgb, 1, 1).front() == v);
    }
}

TEST_CASE("to_grayscale rejects a buffer of the wrong size")
{
    const std::vector<std::uint8_t> rgb(10, 0);
    CHECK_THROWS_AS(to_grayscale(rgb, 2, 2), DimensionError);
}

TEST_CASE("compute_histogram on constant and two-tone frames")
{
    const auto zero = testing_support::constant_frame(0, 0.0, 0);
    const auto h = compute_histogram(zero, 64);
    REQUIRE(h.bin_count() == 64);
    CHECK(h.bins[0] == 1.0);
    CHECK(std::accumulate(h.bins.begin() + 1, h.bins.end(), 0.0) == 0.0);

    std::vector<std::uint8_t> two_tone(64, 0);
    std::fill(two_tone.begin() + 32, two_tone.end(), 255);
    const auto h2 = compute_histogram(two_tone, 64);
    CHECK(h2.bins[0] == 0.5);
    CHECK(h2.bins[63] == 0.5);
}

TEST_CASE("compute_histogram on a seed 7 random 8x8 frame matches a pixel count")
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> px(0, 255);
    std::vector<std::uint8_t> gray(64);
    for (auto& p : gray) {
        p = static_cast<std::uint8_t>(px(rng));
    }
    CHECK(compute_histogram(gray, 64).bins == oracle::histogram(gray, 64));
}

TEST_CASE("compute_histogram sums to one and matches the oracle on random frames")
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 64);
    std::uniform_int_distribution<int> px(0, 255);
    for (std::size_t bins : {2u, 4u, 16u, 64u, 256u}) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::uint8_t> gray(static_cast<std::size_t>(dim(rng) * dim(rng)));
            for (auto& p : gray) {
                p = static_cast<std::uint8_t>(px(rng));
            }
            const auto h = compute_histogram(gray, bins);
            CHECK(std::abs(std::accumulate(h.bins.begin(), h.bins.end(), 0.0) - 1.0) <= 1e-9);
            const auto expected = oracle::histogram(gray, bins);
            for (std::size_t k = 0; k < bins; ++k) {
                CHECK(h.bins[k] == doctest::Approx(expected[k]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("compute_histogram errors")
{
    const std::vector<std::uint8_t> empty;
    CHECK_THROWS_AS(compute_histogram(empty, 64), DegenerateInputError);
    const std::vector<std::uint8_t> one(4, 1);
    CHECK_THROWS_AS(compute_histogram(one, 3), ArgumentError);
}

TEST_CASE("frame labels and seconds formatting")
{
    CHECK(format_seconds(12.5) == "12.5");
    CHECK(format_seconds(13.0) == "13.0");
    CHECK(format_seconds(0.0) == "0.0");
    CHECK(frame_label(0, 12.5) == "Frame 0 | 12.5s");
    CHECK(frame_label(1, 13.0) == "Frame 1 | 13.0s");
}

TEST_CASE("load_frame_directory reads the sidecar and decodes frames")
{
    testing_support::TempDir dir;
    std::ofstream meta(dir.path() / "meta.jsonl");
    // Sidecar order differs from index order; index order wins for output.
    for (int i : {2, 0, 1}) {
        const std::vector<std::uint8_t> px(6, static_cast<std::uint8_t>(i * 50));
        write_png_gray(dir.path() / fmt::format("{:06d}.png", i), {3, 2, px});
        meta << nlohmann::json{{"index", i}, {"timestamp_s", i * 1.0}}.dump() << '\n';
    }
    meta.close();
    const auto src = load_frame_directory(dir.path());
    REQUIRE(src.size() == 3);
    const auto frames = sample_stream(src, 1.0);
    REQUIRE(frames.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(frames[i].width == 3);
        CHECK(frames[i].height == 2);
        CHECK(frames[i].pixels == std::vector<std::uint8_t>(6, static_cast<std::uint8_t>(i * 50)));
        CHECK(image_id(frames[i]) == fmt::format("{:06d}.png", i));
    }
}

TEST_CASE("load_frame_directory errors")
{
    testing_support::TempDir dir;
    CHECK_THROWS_AS(load_frame_directory(dir.path()), FormatError);

    {
        std::ofstream meta(dir.path() / "meta.jsonl");
        meta << R"({"index": 0, "timestamp_s": 0.0})" << '\n' << "not json\n";
    }
    try {
        load_frame_directory(dir.path());
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }

    {
        std::ofstream meta(dir.path() / "meta.jsonl", std::ios::trunc);
        meta << R"({"index": 0, "timestamp_s": 0.0})" << '\n';
    }
    const auto src = load_frame_directory(dir.path());
    try {
        src.load(0);
        FAIL("expected an error for the missing image");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("000000.png") != std::string::npos);
    }
}

TEST_CASE("read_png_gray converts color images with luma weights")
{
    testing_support::TempDir dir;
    // Encode a 1x1 pure red RGB PNG through libpng's simplified API.
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = 1;
    img.height = 1;
    img.format = PNG_FORMAT_RGB;
    const std::uint8_t red[3] = {255, 0, 0};
    const auto path = dir.path() / "red.png";
    REQUIRE(png_image_write_to_file(&img, path.c_str(), 0, red, 0, nullptr) != 0);
    const auto gray = read_png_gray(path);
    CHECK(gray.pixels == std::vector<std::uint8_t>{76});
}
