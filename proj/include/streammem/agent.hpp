#pragma once

#include "streammem/backend.hpp"
#include "streammem/long_term_memory.hpp"
#include "streammem/perception.hpp"
#include "streammem/short_term_memory.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace streammem {

inline constexpr std::size_t kDefaultMaxTurns = 8;

struct FinalAnswer {
    std::string text;
};

// Policy output with neither a tool call nor a boxed answer. Costs a turn and
// is answered with a corrective error observation.
struct Unparseable {
    std::string reason;
};

using ParsedAction = std::variant<ToolCall, FinalAnswer, Unparseable>;

// Content of the last balanced \boxed{...}, if any.
std::optional<std::string> last_boxed(std::string_view text);

// Priority: last \boxed{} answer, then the first tool-call block (a fenced
// JSON object {"tool": name, "arguments": {...}}, or the same inside
// <tool_call></tool_call>), else Unparseable. Never throws.
ParsedAction parse_action(std::string_view text);

// The "Thought:" line when present, else the prose before the action.
std::string extract_thought(std::string_view text);

struct Turn {
    std::string response;
    std::string thought;
    ParsedAction action;
    // Absent iff the action is a FinalAnswer.
    std::optional<Observation> observation;
};

enum class Termination { answer, max_turns, policy_error };

std::string to_string(Termination t);

struct Trajectory {
    std::string question_id;
    std::string question;
    double asked_at_s = 0.0;
    std::vector<Turn> turns;
    std::optional<std::string> final_answer;
    Termination terminated_by = Termination::max_turns;
    std::optional<std::string> error;
    // Latest timestamp of anything placed in the agent's reach.
    std::optional<double> max_visible_timestamp_s;
};

nlohmann::json to_json(const Trajectory& trajectory);
// One compact JSON line, no trailing newline. Stable across runs.
std::string serialize_trajectory(const Trajectory& trajectory);

struct EpisodeQuestion {
    std::string id;
    std::string text;
    double asked_at_s = 0.0;
};

const std::string& default_system_prompt();

// System prompt, labeled snapshot frames, the question, then every prior
// response and observation in order.
PolicyRequest build_context(std::string_view system_prompt, const StmSnapshot& snapshot, const EpisodeQuestion& question,
                            std::span<const Turn> prior_turns);

struct EpisodeConfig {
    std::size_t max_turns = kDefaultMaxTurns;
    std::string system_prompt = default_system_prompt();
};

// Runs one ReAct episode. Only frames and archived events at or before
// asked_at_s are visible, whatever the caller passes in.
Trajectory run_episode(const EpisodeQuestion& question, const StmSnapshot& snapshot, const LtmStore& store,
                       PolicyModel& policy, const ToolRegistry& registry, const EpisodeConfig& config = {});

// Replays canned responses. The script is JSONL, one object per question:
//   {"question_id": "q1", "responses": ["...", "..."]}
// with "*" as the fallback id. Turn i gets responses[i]; past the end the
// policy fails unless the line sets "cycle": true.
class ScriptedPolicy final : public PolicyModel {
public:
    struct Script {
        std::vector<std::string> responses;
        bool cycle = false;
    };

    ScriptedPolicy() = default;
    explicit ScriptedPolicy(std::map<std::string, Script> scripts) : scripts_(std::move(scripts)) {}

    static ScriptedPolicy load(const std::filesystem::path& path);

    void set(const std::string& question_id, Script script) { scripts_[question_id] = std::move(script); }
    std::string generate(const PolicyRequest& request) override;

private:
    std::map<std::string, Script> scripts_;
};

} // namespace streammem
