#pragma once

#include "streammem/frame.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace streammem {

// An image handed to a perception backend. `image_id` keys fixture lookups;
// `path` points at the original (color) file when one exists, otherwise the
// grayscale pixels in `frame` are encoded on demand.
struct ImageRef {
    std::string image_id;
    FrameRef frame;
    std::optional<std::string> path;
};

ImageRef image_ref(const FrameRef& frame);

struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool operator==(const Box&) const = default;
};

struct Detection {
    std::string label;
    Box box;
    double score = 0.0;
    bool operator==(const Detection&) const = default;
};

struct CaptionRequest {
    std::int64_t event_id = 0;
    std::vector<FrameRef> frames;
    double start_s = 0.0;
    double end_s = 0.0;
};

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string caption(const CaptionRequest& request) = 0;
    // Describes how `current` differs from `previous`; stored on both sides of
    // the transition.
    virtual std::string describe_change(const std::string& previous, const std::string& current) = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

class OcrEngine {
public:
    virtual ~OcrEngine() = default;
    virtual std::vector<std::string> ocr(const ImageRef& image) = 0;
};

class ObjectDetector {
public:
    virtual ~ObjectDetector() = default;
    virtual std::vector<Detection> detect(const ImageRef& image, const std::vector<std::string>& labels) = 0;
};

struct PolicyMessage {
    std::string role;
    std::string content;
};

struct ContextFrame {
    std::string label;
    FrameRef frame;
};

// What a policy model sees for one generation.
struct PolicyRequest {
    std::string question_id;
    std::string system_prompt;
    std::vector<ContextFrame> frames;
    std::vector<PolicyMessage> messages;
};

class PolicyModel {
public:
    virtual ~PolicyModel() = default;
    virtual std::string generate(const PolicyRequest& request) = 0;
};

} // namespace streammem
