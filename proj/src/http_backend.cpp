#include "streammem/http_backend.hpp"

#include "streammem/error.hpp"
#include "streammem/image_io.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>
#include <filesystem>

namespace streammem {

namespace {

std::string frame_b64(const FrameRef& frame)
{
    return encode_image_b64(image_ref(frame));
}

} // namespace

HttpBackendConfig http_config_from_env()
{
    HttpBackendConfig cfg;
    if (const char* url = std::getenv(kBackendUrlEnv); url != nullptr && *url != '\0') {
        cfg.base_url = url;
    }
    return cfg;
}

std::string encode_image_b64(const ImageRef& image)
{
    if (image.path && std::filesystem::exists(*image.path)) {
        return base64_encode(read_file_bytes(*image.path));
    }
    if (!image.frame) {
        throw BackendError(fmt::format("image '{}' has neither a file nor pixels", image.image_id));
    }
    return base64_encode(encode_png_gray({image.frame->width, image.frame->height, image.frame->pixels}));
}

nlohmann::json chat_request_body(const PolicyRequest& request)
{
    nlohmann::json messages = nlohmann::json::array();
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    for (const auto& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    nlohmann::json images = nlohmann::json::array();
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& f : request.frames) {
        images.push_back(frame_b64(f.frame));
        labels.push_back(f.label);
    }
    return {{"messages", std::move(messages)}, {"images", std::move(images)}, {"image_labels", std::move(labels)}};
}

nlohmann::json caption_request_body(const CaptionRequest& request)
{
    nlohmann::json images = nlohmann::json::array();
    for (const auto& f : request.frames) {
        images.push_back(frame_b64(f));
    }
    return {{"images", std::move(images)},
            {"start_s", request.start_s},
            {"end_s", request.end_s},
            {"event_id", request.event_id}};
}

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)),
      in_flight_(std::make_unique<std::counting_semaphore<>>(std::max<std::ptrdiff_t>(1, config_.max_in_flight)))
{
}

nlohmann::json HttpBackend::post(const std::string& endpoint, const nlohmann::json& body)
{
    in_flight_->acquire();
    struct Release {
        std::counting_semaphore<>* s;
        ~Release() { s->release(); }
    } release{in_flight_.get()};

    httplib::Client client(config_.base_url);
    const auto secs = static_cast<time_t>(config_.timeout.count());
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    auto res = client.Post(endpoint, body.dump(), "application/json");
    if (!res) {
        throw BackendError(fmt::format("POST {}{} failed: {}", config_.base_url, endpoint, httplib::to_string(res.error())));
    }
    if (res->status != 200) {
        throw BackendError(fmt::format("POST {} returned {}: {}", endpoint, res->status, res->body));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& ex) {
        throw BackendError(fmt::format("POST {} returned malformed json: {}", endpoint, ex.what()));
    }
}

void HttpBackend::check_health()
{
    httplib::Client client(config_.base_url);
    const auto secs = static_cast<time_t>(config_.timeout.count());
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    auto res = client.Get("/healthz");
    if (!res) {
        throw BackendError(fmt::format("GET {}/healthz failed: {}", config_.base_url, httplib::to_string(res.error())));
    }
    bool ok = false;
    try {
        const auto j = nlohmann::json::parse(res->body);
        ok = res->status == 200 && j.is_object() && j.value("ok", false) == true;
    } catch (const nlohmann::json::exception&) {
    }
    if (!ok) {
        throw BackendError(fmt::format("GET /healthz returned {}: {}", res->status, res->body));
    }
}

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* key, const char* endpoint)
{
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& ex) {
        throw BackendError(fmt::format("{} reply lacks a valid '{}': {}", endpoint, key, ex.what()));
    }
}

} // namespace

std::string HttpBackend::caption(const CaptionRequest& request)
{
    return field<std::string>(post("/caption", caption_request_body(request)), "caption", "/caption");
}

std::string HttpBackend::describe_change(const std::string& previous, const std::string& current)
{
    nlohmann::json body = {
        {"messages",
         {{{"role", "system"},
           {"content", "You maintain a video memory. In one sentence, describe how the current event differs "
                       "from the previous event."}},
          {{"role", "user"}, {"content", fmt::format("Previous event: {}\nCurrent event: {}", previous, current)}}}},
        {"images", nlohmann::json::array()},
        {"image_labels", nlohmann::json::array()}};
    return field<std::string>(post("/chat", body), "text", "/chat");
}

std::vector<double> HttpBackend::embed(const std::string& text)
{
    return field<std::vector<double>>(post("/embed", {{"text", text}}), "embedding", "/embed");
}

std::vector<std::string> HttpBackend::ocr(const ImageRef& image)
{
    return field<std::vector<std::string>>(post("/ocr", {{"image", encode_image_b64(image)}}), "lines", "/ocr");
}

std::vector<Detection> HttpBackend::detect(const ImageRef& image, const std::vector<std::string>& labels)
{
    const auto reply = post("/detect", {{"image", encode_image_b64(image)}, {"labels", labels}});
    std::vector<Detection> out;
    try {
        for (const auto& d : reply.at("detections")) {
            const auto box = d.at("box").get<std::vector<double>>();
            if (box.size() != 4) {
                throw BackendError("/detect box must have 4 numbers");
            }
            out.push_back({d.at("label").get<std::string>(), {box[0], box[1], box[2], box[3]}, d.at("score").get<double>()});
        }
    } catch (const nlohmann::json::exception& ex) {
        throw BackendError(fmt::format("/detect reply malformed: {}", ex.what()));
    }
    return out;
}

std::string HttpBackend::generate(const PolicyRequest& request)
{
    return field<std::string>(post("/chat", chat_request_body(request)), "text", "/chat");
}

} // namespace streammem
