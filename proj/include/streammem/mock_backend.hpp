#pragma once

#include "streammem/backend.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace streammem {

inline constexpr std::size_t kMockEmbeddingDimension = 64;

std::uint64_t fnv1a64(std::string_view bytes);

// Lowercased maximal runs of ASCII letters and digits.
std::vector<std::string> tokenize(std::string_view text);

// Bag-of-tokens embedding: each token adds 1 to bucket fnv1a64(token) % D,
// then the vector is L2-normalized. Text without tokens embeds to zeros.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dimension = kMockEmbeddingDimension);

    std::vector<double> embed(const std::string& text) override;
    std::size_t dimension() const { return dimension_; }

private:
    std::size_t dimension_;
};

// "mock-event e{id}: mean-intensity {m}, {n} frames, {start}s-{end}s" and
// "intensity {m_prev} -> {m_curr}".
class MockCaptioner final : public Captioner {
public:
    std::string caption(const CaptionRequest& request) override;
    std::string describe_change(const std::string& previous, const std::string& current) override;
};

// Canned OCR lines and detections keyed by image id, read from
// fixtures/perception.json:
//   {"ocr": {"<id>": ["line", ...]},
//    "detect": {"<id>": [{"label": "cat", "box": [x0, y0, x1, y1], "score": 0.9}]}}
struct FixtureSet {
    std::map<std::string, std::vector<std::string>> ocr;
    std::map<std::string, std::vector<Detection>> detect;

    static FixtureSet load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

// Unknown images yield empty results rather than errors.
class MockOcr final : public OcrEngine {
public:
    explicit MockOcr(std::shared_ptr<const FixtureSet> fixtures) : fixtures_(std::move(fixtures)) {}
    std::vector<std::string> ocr(const ImageRef& image) override;

private:
    std::shared_ptr<const FixtureSet> fixtures_;
};

// Returns the planted detections whose label matches one of the requested
// labels (case-insensitive).
class MockDetector final : public ObjectDetector {
public:
    explicit MockDetector(std::shared_ptr<const FixtureSet> fixtures) : fixtures_(std::move(fixtures)) {}
    std::vector<Detection> detect(const ImageRef& image, const std::vector<std::string>& labels) override;

private:
    std::shared_ptr<const FixtureSet> fixtures_;
};

} // namespace streammem
