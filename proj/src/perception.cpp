#include "streammem/perception.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace streammem {

namespace {

void reject_unknown_keys(const nlohmann::json& args, std::initializer_list<const char*> allowed)
{
    if (!args.is_object()) {
        throw ToolError("invalid_arguments", "arguments must be a JSON object");
    }
    for (const auto& [key, value] : args.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ToolError("invalid_arguments", fmt::format("unexpected argument '{}'", key));
        }
    }
}

bool has(const nlohmann::json& args, const char* key)
{
    return args.contains(key) && !args.at(key).is_null();
}

double number_arg(const nlohmann::json& args, const char* key)
{
    const auto& v = args.at(key);
    if (!v.is_number()) {
        throw ToolError("invalid_arguments", fmt::format("'{}' must be a number", key));
    }
    return v.get<double>();
}

std::int64_t integer_arg(const nlohmann::json& args, const char* key)
{
    const auto& v = args.at(key);
    if (v.is_number_integer() || v.is_number_unsigned()) {
        return v.get<std::int64_t>();
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e18) {
            return static_cast<std::int64_t>(d);
        }
    }
    throw ToolError("invalid_arguments", fmt::format("'{}' must be an integer", key));
}

std::string text_or_none(const std::optional<std::string>& s)
{
    return s ? *s : std::string("none");
}

nlohmann::json event_payload(const ArchivedEvent& e)
{
    return {{"event_id", e.event_id},
            {"start_s", e.start_s},
            {"end_s", e.end_s},
            {"caption", e.caption},
            {"pending", e.pending},
            {"change_from_previous", e.change_from_previous ? nlohmann::json(*e.change_from_previous) : nlohmann::json(nullptr)},
            {"change_to_next", e.change_to_next ? nlohmann::json(*e.change_to_next) : nlohmann::json(nullptr)}};
}

void render_event(std::string& out, const ArchivedEvent& e, std::optional<double> similarity)
{
    out += fmt::format("Event {} [{}s - {}s]", e.event_id, format_seconds(e.start_s), format_seconds(e.end_s));
    if (similarity) {
        out += fmt::format(" (similarity {:.3f})", *similarity);
    }
    out += '\n';
    out += fmt::format("  caption: {}\n", e.pending ? std::string("(pending)") : e.caption);
    out += fmt::format("  change_from_previous: {}\n", text_or_none(e.change_from_previous));
    out += fmt::format("  change_to_next: {}\n", text_or_none(e.change_to_next));
}

struct Target {
    ImageRef image;
    std::string description;
    nlohmann::json payload;
    int width = 0;
    int height = 0;
};

Target resolve_event(const nlohmann::json& args, const ToolContext& ctx)
{
    const auto id = integer_arg(args, "event_id");
    const auto it = std::find_if(ctx.memory.begin(), ctx.memory.end(),
                                 [&](const ArchivedEvent& e) { return e.event_id == id; });
    if (it == ctx.memory.end()) {
        throw ToolError("target_not_found", fmt::format("no event {} in long-term memory", id));
    }
    Target t;
    if (ctx.store != nullptr) {
        t.image = ctx.store->anchor_ref(*it);
    } else {
        t.image.image_id = it->anchor_image_id;
    }
    if (t.image.frame) {
        t.width = t.image.frame->width;
        t.height = t.image.frame->height;
    }
    t.description = fmt::format("event {}", id);
    t.payload = {{"event_id", id}};
    return t;
}

Target resolve_frame(std::int64_t index, const ToolContext& ctx)
{
    const std::size_t count = ctx.snapshot ? ctx.snapshot->size() : 0;
    if (index < 0 || static_cast<std::size_t>(index) >= count) {
        throw ToolError("target_not_found",
                        fmt::format("frame_index {} outside short-term memory of {} frames", index, count));
    }
    const auto& sf = (*ctx.snapshot)[static_cast<std::size_t>(index)];
    Target t;
    t.image = image_ref(sf.frame);
    t.width = sf.frame->width;
    t.height = sf.frame->height;
    t.description = fmt::format("frame {} ({})", index, sf.label);
    t.payload = {{"frame_index", index}};
    return t;
}

} // namespace

Observation error_observation(std::string tool_name, std::string code, const std::string& message)
{
    Observation o;
    o.rendered_text = fmt::format("Error [{}]: {}", code, message);
    o.tool_name = std::move(tool_name);
    o.status = ObservationStatus::error;
    o.payload = {{"code", code}, {"message", message}};
    o.error_code = std::move(code);
    return o;
}

Observation search_memory_tool(const PerceptionBackends& backends, const nlohmann::json& args, const ToolContext& ctx)
{
    reject_unknown_keys(args, {"query", "start_time", "end_time"});
    const bool by_query = has(args, "query");
    const bool has_start = has(args, "start_time");
    const bool has_end = has(args, "end_time");
    if (by_query && (has_start || has_end)) {
        throw ToolError("invalid_arguments", "use either query or start_time/end_time, not both");
    }
    if (!by_query && !(has_start && has_end)) {
        throw ToolError("invalid_arguments", "provide query, or both start_time and end_time");
    }

    Observation o;
    o.tool_name = "search_memory";
    nlohmann::json events = nlohmann::json::array();
    std::string body;
    if (by_query) {
        const auto& q = args.at("query");
        if (!q.is_string() || q.get<std::string>().empty()) {
            throw ToolError("invalid_arguments", "query must be a non-empty string");
        }
        if (!backends.embedder) {
            throw ToolError("backend_error", "no embedder configured");
        }
        const auto hits = search_semantic(ctx.memory, q.get<std::string>(), *backends.embedder, backends.top_k,
                                          backends.min_similarity);
        for (const auto& h : hits) {
            auto p = event_payload(*h.event);
            p["similarity"] = h.similarity;
            events.push_back(std::move(p));
            render_event(body, *h.event, h.similarity);
        }
        o.payload = {{"mode", "semantic"}, {"query", q}};
    } else {
        const double start = number_arg(args, "start_time");
        const double end = number_arg(args, "end_time");
        if (start > end) {
            throw ToolError("invalid_arguments", fmt::format("start_time {} is after end_time {}", start, end));
        }
        auto hits = search_temporal(ctx.memory, start, end);
        if (hits.size() > backends.top_k) {
            hits.resize(backends.top_k);
        }
        for (const auto* e : hits) {
            events.push_back(event_payload(*e));
            render_event(body, *e, std::nullopt);
        }
        o.payload = {{"mode", "temporal"}, {"start_time", start}, {"end_time", end}};
    }
    o.rendered_text = fmt::format("search_memory returned {} event(s).\n", events.size()) + body;
    o.payload["events"] = std::move(events);
    return o;
}

Observation ocr_tool(const PerceptionBackends& backends, const nlohmann::json& args, const ToolContext& ctx)
{
    reject_unknown_keys(args, {"event_id", "frame_index"});
    const bool by_event = has(args, "event_id");
    const bool by_frame = has(args, "frame_index");
    if (by_event == by_frame) {
        throw ToolError("invalid_arguments", "provide exactly one of event_id or frame_index");
    }
    const Target t = by_event ? resolve_event(args, ctx) : resolve_frame(integer_arg(args, "frame_index"), ctx);
    if (!backends.ocr) {
        throw ToolError("backend_error", "no OCR backend configured");
    }
    const auto lines = backends.ocr->ocr(t.image);
    Observation o;
    o.tool_name = "ocr";
    o.payload = {{"target", t.payload}, {"lines", lines}};
    o.rendered_text = fmt::format("OCR on {}: {} line(s).\n", t.description, lines.size());
    for (const auto& l : lines) {
        o.rendered_text += l;
        o.rendered_text += '\n';
    }
    return o;
}

Observation detect_objects_tool(const PerceptionBackends& backends, const nlohmann::json& args, const ToolContext& ctx)
{
    reject_unknown_keys(args, {"labels", "event_id", "frame_index"});
    if (!has(args, "labels") || !args.at("labels").is_array() || args.at("labels").empty()) {
        throw ToolError("invalid_arguments", "labels must be a non-empty list of strings");
    }
    std::vector<std::string> labels;
    for (const auto& l : args.at("labels")) {
        if (!l.is_string() || l.get<std::string>().empty()) {
            throw ToolError("invalid_arguments", "labels must be a non-empty list of strings");
        }
        labels.push_back(l.get<std::string>());
    }
    const bool by_event = has(args, "event_id");
    const bool by_frame = has(args, "frame_index");
    if (by_event && by_frame) {
        throw ToolError("invalid_arguments", "provide at most one of event_id or frame_index");
    }
    Target t;
    if (by_event) {
        t = resolve_event(args, ctx);
    } else if (by_frame) {
        t = resolve_frame(integer_arg(args, "frame_index"), ctx);
    } else {
        const std::size_t count = ctx.snapshot ? ctx.snapshot->size() : 0;
        if (count == 0) {
            throw ToolError("target_not_found", "short-term memory is empty");
        }
        t = resolve_frame(static_cast<std::int64_t>(count - 1), ctx);
    }
    if (!backends.detector) {
        throw ToolError("backend_error", "no detection backend configured");
    }
    auto detections = backends.detector->detect(t.image, labels);
    // Keep only well-formed boxes; clip to the image when its size is known.
    std::vector<Detection> valid;
    for (auto d : detections) {
        if (t.width > 0 && t.height > 0) {
            d.box.x0 = std::clamp(d.box.x0, 0.0, static_cast<double>(t.width));
            d.box.x1 = std::clamp(d.box.x1, 0.0, static_cast<double>(t.width));
            d.box.y0 = std::clamp(d.box.y0, 0.0, static_cast<double>(t.height));
            d.box.y1 = std::clamp(d.box.y1, 0.0, static_cast<double>(t.height));
        }
        if (d.box.x0 < d.box.x1 && d.box.y0 < d.box.y1) {
            d.score = std::clamp(d.score, 0.0, 1.0);
            valid.push_back(d);
        }
    }
    std::stable_sort(valid.begin(), valid.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });

    Observation o;
    o.tool_name = "detect_objects";
    nlohmann::json dets = nlohmann::json::array();
    std::string body;
    for (const auto& d : valid) {
        dets.push_back({{"label", d.label}, {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}}, {"score", d.score}});
        body += fmt::format("{} [{}, {}, {}, {}] score {:.3f}\n", d.label, d.box.x0, d.box.y0, d.box.x1, d.box.y1, d.score);
    }
    o.payload = {{"target", t.payload}, {"labels", labels}, {"detections", std::move(dets)}};
    o.rendered_text = fmt::format("detect_objects on {} for [{}]: {} detection(s).\n", t.description,
                                  fmt::join(labels, ", "), valid.size()) +
                      body;
    return o;
}

void ToolRegistry::register_tool(const std::string& name, Handler handler)
{
    tools_[name] = std::move(handler);
}

std::vector<std::string> ToolRegistry::names() const
{
    std::vector<std::string> out;
    for (const auto& [name, handler] : tools_) {
        out.push_back(name);
    }
    return out;
}

Observation ToolRegistry::dispatch(const ToolCall& call, const ToolContext& ctx) const noexcept
{
    try {
        const auto it = tools_.find(call.tool_name);
        if (it == tools_.end()) {
            return error_observation(call.tool_name, "unknown_tool", fmt::format("unknown tool '{}'", call.tool_name));
        }
        Observation o = it->second(call.arguments, ctx);
        o.tool_name = call.tool_name;
        return o;
    } catch (const ToolError& ex) {
        return error_observation(call.tool_name, ex.code(), ex.what());
    } catch (const BackendError& ex) {
        return error_observation(call.tool_name, "backend_error", ex.what());
    } catch (const ArgumentError& ex) {
        return error_observation(call.tool_name, "invalid_arguments", ex.what());
    } catch (const std::exception& ex) {
        return error_observation(call.tool_name, "internal_error", ex.what());
    } catch (...) {
        return error_observation(call.tool_name, "internal_error", "unknown failure");
    }
}

ToolRegistry make_default_registry(PerceptionBackends backends)
{
    auto shared = std::make_shared<const PerceptionBackends>(std::move(backends));
    ToolRegistry registry;
    registry.register_tool("search_memory", [shared](const nlohmann::json& a, const ToolContext& c) {
        return search_memory_tool(*shared, a, c);
    });
    registry.register_tool("ocr", [shared](const nlohmann::json& a, const ToolContext& c) { return ocr_tool(*shared, a, c); });
    registry.register_tool("detect_objects", [shared](const nlohmann::json& a, const ToolContext& c) {
        return detect_objects_tool(*shared, a, c);
    });
    return registry;
}

} // namespace streammem
