#pragma once

#include "streammem/backend.hpp"

#include <json.hpp>

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

namespace streammem {

inline constexpr const char* kBackendUrlEnv = "STREAMMEM_BACKEND_URL";

struct HttpBackendConfig {
    std::string base_url = "http://127.0.0.1:8000";
    std::chrono::seconds timeout{30};
    // Upper bound on concurrent requests from this client.
    std::ptrdiff_t max_in_flight = 4;
};

// Reads STREAMMEM_BACKEND_URL, falling back to the default base URL.
HttpBackendConfig http_config_from_env();

// Client for the JSON backend protocol:
//   POST /caption {images: [b64 png], start_s, end_s, event_id} -> {caption}
//   POST /embed   {text}                                       -> {embedding: [..]}
//   POST /ocr     {image}                                      -> {lines: [..]}
//   POST /detect  {image, labels: [..]}                        -> {detections: [{label, box, score}]}
//   POST /chat    {messages: [{role, content}], images: [..], image_labels: [..]} -> {text}
// Transport failures, timeouts, non-200 replies and malformed bodies all
// surface as BackendError.
class HttpBackend final : public Captioner, public Embedder, public OcrEngine, public ObjectDetector, public PolicyModel {
public:
    explicit HttpBackend(HttpBackendConfig config = http_config_from_env());

    std::string caption(const CaptionRequest& request) override;
    std::string describe_change(const std::string& previous, const std::string& current) override;
    std::vector<double> embed(const std::string& text) override;
    std::vector<std::string> ocr(const ImageRef& image) override;
    std::vector<Detection> detect(const ImageRef& image, const std::vector<std::string>& labels) override;
    std::string generate(const PolicyRequest& request) override;

    // GET /healthz must answer 200 {"ok": true}; throws BackendError otherwise.
    void check_health();

    // Raw request/response exchange; exposed for protocol tests.
    nlohmann::json post(const std::string& endpoint, const nlohmann::json& body);

    const HttpBackendConfig& config() const { return config_; }

private:
    HttpBackendConfig config_;
    std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

// Base64 PNG for an image: the original file bytes when available, else the
// grayscale pixels re-encoded.
std::string encode_image_b64(const ImageRef& image);

// Request bodies, split out so the exact wire shape is testable without a server.
nlohmann::json chat_request_body(const PolicyRequest& request);
nlohmann::json caption_request_body(const CaptionRequest& request);

} // namespace streammem
