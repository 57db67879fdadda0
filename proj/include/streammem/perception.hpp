#pragma once

#include "streammem/backend.hpp"
#include "streammem/long_term_memory.hpp"
#include "streammem/short_term_memory.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace streammem {

struct ToolCall {
    std::string tool_name;
    nlohmann::json arguments = nlohmann::json::object();
};

enum class ObservationStatus { ok, error };

struct Observation {
    std::string tool_name;
    ObservationStatus status = ObservationStatus::ok;
    // Machine-readable code for errors: unknown_tool, invalid_arguments,
    // target_not_found, backend_error, unparseable_action, internal_error.
    std::string error_code;
    nlohmann::json payload = nlohmann::json::object();
    // Exactly what the agent sees. Formats are documented in docs/observations.md.
    std::string rendered_text;

    bool ok() const { return status == ObservationStatus::ok; }
};

Observation error_observation(std::string tool_name, std::string code, const std::string& message);

// What a tool may look at: the agent's STM snapshot and the visible prefix of
// long-term memory. `store` resolves anchor images.
struct ToolContext {
    const StmSnapshot* snapshot = nullptr;
    std::span<const ArchivedEvent> memory;
    const LtmStore* store = nullptr;
};

struct PerceptionBackends {
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<OcrEngine> ocr;
    std::shared_ptr<ObjectDetector> detector;
    std::size_t top_k = kDefaultTopK;
    double min_similarity = kDefaultMinSimilarity;
};

// Thrown inside tool handlers; dispatch() turns it into an error observation.
class ToolError : public std::runtime_error {
public:
    ToolError(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

// {query} XOR {start_time, end_time}.
Observation search_memory_tool(const PerceptionBackends& backends, const nlohmann::json& args, const ToolContext& ctx);
// Exactly one of {event_id, frame_index}.
Observation ocr_tool(const PerceptionBackends& backends, const nlohmann::json& args, const ToolContext& ctx);
// Non-empty labels and at most one target; defaults to the last snapshot frame.
Observation detect_objects_tool(const PerceptionBackends& backends, const nlohmann::json& args, const ToolContext& ctx);

class ToolRegistry {
public:
    using Handler = std::function<Observation(const nlohmann::json& args, const ToolContext& ctx)>;

    void register_tool(const std::string& name, Handler handler);
    bool contains(const std::string& name) const { return tools_.count(name) != 0; }
    std::vector<std::string> names() const;

    // Total: every call yields one observation, failures included.
    Observation dispatch(const ToolCall& call, const ToolContext& ctx) const noexcept;

private:
    std::map<std::string, Handler> tools_;
};

// search_memory, ocr and detect_objects wired to `backends`.
ToolRegistry make_default_registry(PerceptionBackends backends);

} // namespace streammem
