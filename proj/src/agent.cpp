#include "streammem/agent.hpp"

#include "streammem/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>

namespace streammem {

namespace resources {
extern const char* const kSystemPrompt;
}

namespace {

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Candidate tool-call payloads in order of appearance: fenced blocks and
// <tool_call> tags.
std::vector<std::pair<std::size_t, std::string>> tool_blocks(std::string_view text)
{
    std::vector<std::pair<std::size_t, std::string>> out;
    std::size_t pos = 0;
    while ((pos = text.find("```", pos)) != std::string_view::npos) {
        auto body_start = text.find('\n', pos + 3);
        if (body_start == std::string_view::npos) {
            break;
        }
        const auto close = text.find("```", body_start);
        if (close == std::string_view::npos) {
            break;
        }
        out.emplace_back(pos, std::string(text.substr(body_start + 1, close - body_start - 1)));
        pos = close + 3;
    }
    pos = 0;
    while ((pos = text.find("<tool_call>", pos)) != std::string_view::npos) {
        const auto body = pos + 11;
        const auto close = text.find("</tool_call>", body);
        if (close == std::string_view::npos) {
            break;
        }
        out.emplace_back(pos, std::string(text.substr(body, close - body)));
        pos = close + 12;
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

std::optional<ToolCall> to_tool_call(const std::string& block)
{
    const auto j = nlohmann::json::parse(block, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return std::nullopt;
    }
    const char* name_key = j.contains("tool") ? "tool" : (j.contains("name") ? "name" : nullptr);
    if (name_key == nullptr || !j.at(name_key).is_string()) {
        return std::nullopt;
    }
    ToolCall call;
    call.tool_name = j.at(name_key).get<std::string>();
    if (j.contains("arguments")) {
        const auto& args = j.at("arguments");
        if (args.is_string()) {
            // Some chat APIs ship arguments as an encoded JSON string.
            auto inner = nlohmann::json::parse(args.get<std::string>(), nullptr, false);
            if (inner.is_discarded() || !inner.is_object()) {
                return std::nullopt;
            }
            call.arguments = std::move(inner);
        } else if (args.is_object()) {
            call.arguments = args;
        } else {
            return std::nullopt;
        }
    }
    return call;
}

nlohmann::json action_json(const ParsedAction& action)
{
    return std::visit(
        [](const auto& a) -> nlohmann::json {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, ToolCall>) {
                return {{"type", "tool_call"}, {"tool", a.tool_name}, {"arguments", a.arguments}};
            } else if constexpr (std::is_same_v<T, FinalAnswer>) {
                return {{"type", "final_answer"}, {"text", a.text}};
            } else {
                return {{"type", "unparseable"}, {"reason", a.reason}};
            }
        },
        action);
}

nlohmann::json observation_json(const Observation& o)
{
    nlohmann::json j = {{"tool", o.tool_name},
                        {"status", o.ok() ? "ok" : "error"},
                        {"payload", o.payload},
                        {"rendered_text", o.rendered_text}};
    if (!o.ok()) {
        j["error_code"] = o.error_code;
    }
    return j;
}

} // namespace

std::optional<std::string> last_boxed(std::string_view text)
{
    static constexpr std::string_view kOpen = "\\boxed{";
    std::optional<std::string> found;
    std::size_t pos = 0;
    while ((pos = text.find(kOpen, pos)) != std::string_view::npos) {
        const std::size_t body = pos + kOpen.size();
        int depth = 1;
        std::size_t i = body;
        for (; i < text.size() && depth > 0; ++i) {
            if (text[i] == '{') {
                ++depth;
            } else if (text[i] == '}') {
                --depth;
            }
        }
        if (depth == 0) {
            found = trim(text.substr(body, i - 1 - body));
        }
        pos = body;
    }
    return found;
}

ParsedAction parse_action(std::string_view text)
{
    if (auto answer = last_boxed(text)) {
        return FinalAnswer{std::move(*answer)};
    }
    const auto blocks = tool_blocks(text);
    for (const auto& [pos, block] : blocks) {
        if (auto call = to_tool_call(block)) {
            return std::move(*call);
        }
    }
    if (!blocks.empty()) {
        return Unparseable{"tool-call block is not a JSON object with \"tool\" and \"arguments\""};
    }
    return Unparseable{"no tool call or \\boxed{} answer found"};
}

std::string extract_thought(std::string_view text)
{
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        const std::string line = trim(text.substr(pos, eol - pos));
        if (line.size() >= 8) {
            std::string head = line.substr(0, 8);
            std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::tolower(c); });
            if (head == "thought:") {
                return trim(std::string_view(line).substr(8));
            }
        }
        pos = eol + 1;
    }
    std::size_t cut = text.size();
    for (std::string_view marker : {"```", "\\boxed{", "<tool_call>"}) {
        cut = std::min(cut, text.find(marker));
    }
    return trim(text.substr(0, cut));
}

std::string to_string(Termination t)
{
    switch (t) {
    case Termination::answer:
        return "answer";
    case Termination::max_turns:
        return "max_turns";
    case Termination::policy_error:
        return "policy_error";
    }
    return "unknown";
}

nlohmann::json to_json(const Trajectory& tr)
{
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : tr.turns) {
        nlohmann::json jt = {{"response", t.response}, {"thought", t.thought}, {"action", action_json(t.action)}};
        jt["observation"] = t.observation ? observation_json(*t.observation) : nlohmann::json(nullptr);
        turns.push_back(std::move(jt));
    }
    nlohmann::json j = {{"question_id", tr.question_id},
                        {"question", tr.question},
                        {"asked_at_s", tr.asked_at_s},
                        {"turns", std::move(turns)},
                        {"terminated_by", to_string(tr.terminated_by)}};
    j["final_answer"] = tr.final_answer ? nlohmann::json(*tr.final_answer) : nlohmann::json(nullptr);
    j["error"] = tr.error ? nlohmann::json(*tr.error) : nlohmann::json(nullptr);
    j["max_visible_timestamp_s"] =
        tr.max_visible_timestamp_s ? nlohmann::json(*tr.max_visible_timestamp_s) : nlohmann::json(nullptr);
    return j;
}

std::string serialize_trajectory(const Trajectory& trajectory)
{
    return to_json(trajectory).dump();
}

const std::string& default_system_prompt()
{
    static const std::string prompt = resources::kSystemPrompt;
    return prompt;
}

PolicyRequest build_context(std::string_view system_prompt, const StmSnapshot& snapshot, const EpisodeQuestion& question,
                            std::span<const Turn> prior_turns)
{
    PolicyRequest req;
    req.question_id = question.id;
    req.system_prompt = std::string(system_prompt);
    std::string intro = fmt::format("Short-term memory: {} frame(s) attached.\n", snapshot.size());
    for (const auto& f : snapshot) {
        req.frames.push_back({f.label, f.frame});
        intro += f.label;
        intro += '\n';
    }
    intro += fmt::format("Question (asked at {}s): {}", format_seconds(question.asked_at_s), question.text);
    req.messages.push_back({"user", std::move(intro)});
    for (const auto& t : prior_turns) {
        req.messages.push_back({"assistant", t.response});
        if (t.observation) {
            req.messages.push_back({"tool", t.observation->rendered_text});
        }
    }
    return req;
}

Trajectory run_episode(const EpisodeQuestion& question, const StmSnapshot& snapshot, const LtmStore& store,
                       PolicyModel& policy, const ToolRegistry& registry, const EpisodeConfig& config)
{
    if (config.max_turns < 1) {
        throw ArgumentError("max_turns must be at least 1");
    }
    Trajectory tr;
    tr.question_id = question.id;
    tr.question = question.text;
    tr.asked_at_s = question.asked_at_s;

    // Online constraint: nothing stamped after the question is reachable.
    StmSnapshot visible;
    for (const auto& f : snapshot) {
        if (f.frame->timestamp_s <= question.asked_at_s) {
            visible.push_back(f);
        }
    }
    const auto memory = store.visible_until(question.asked_at_s);
    if (!visible.empty()) {
        tr.max_visible_timestamp_s = visible.back().frame->timestamp_s;
    }
    if (!memory.empty()) {
        const double end = memory.back().end_s;
        tr.max_visible_timestamp_s = std::max(tr.max_visible_timestamp_s.value_or(end), end);
    }

    const ToolContext ctx{&visible, memory, &store};
    for (std::size_t i = 0; i < config.max_turns; ++i) {
        const auto request = build_context(config.system_prompt, visible, question, tr.turns);
        std::string response;
        try {
            response = policy.generate(request);
        } catch (const std::exception& ex) {
            tr.terminated_by = Termination::policy_error;
            tr.error = ex.what();
            return tr;
        }
        Turn turn;
        turn.thought = extract_thought(response);
        turn.response = std::move(response);
        turn.action = parse_action(turn.response);
        if (const auto* answer = std::get_if<FinalAnswer>(&turn.action)) {
            tr.final_answer = answer->text;
            tr.terminated_by = Termination::answer;
            tr.turns.push_back(std::move(turn));
            return tr;
        }
        if (const auto* call = std::get_if<ToolCall>(&turn.action)) {
            turn.observation = registry.dispatch(*call, ctx);
        } else {
            const auto& bad = std::get<Unparseable>(turn.action);
            turn.observation = error_observation(
                "", "unparseable_action",
                bad.reason + ". Reply with a fenced JSON tool call {\"tool\": name, \"arguments\": {...}} "
                             "or a final answer in \\boxed{}.");
        }
        tr.turns.push_back(std::move(turn));
    }
    tr.terminated_by = Termination::max_turns;
    return tr;
}

ScriptedPolicy ScriptedPolicy::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError(fmt::format("{}: cannot open policy script", path.string()));
    }
    std::map<std::string, Script> scripts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            Script s;
            s.responses = j.at("responses").get<std::vector<std::string>>();
            s.cycle = j.value("cycle", false);
            if (s.responses.empty()) {
                throw FormatError("empty responses");
            }
            scripts[j.at("question_id").get<std::string>()] = std::move(s);
        } catch (const std::exception& ex) {
            throw FormatError(fmt::format("{}:{}: {}", path.string(), line_no, ex.what()));
        }
    }
    return ScriptedPolicy(std::move(scripts));
}

std::string ScriptedPolicy::generate(const PolicyRequest& request)
{
    auto it = scripts_.find(request.question_id);
    if (it == scripts_.end()) {
        it = scripts_.find("*");
    }
    if (it == scripts_.end()) {
        throw BackendError(fmt::format("no script for question '{}'", request.question_id));
    }
    const auto turn = static_cast<std::size_t>(
        std::count_if(request.messages.begin(), request.messages.end(), [](const auto& m) { return m.role == "assistant"; }));
    const auto& script = it->second;
    if (turn >= script.responses.size() && !script.cycle) {
        throw BackendError(fmt::format("script for '{}' has no response for turn {}", request.question_id, turn));
    }
    return script.responses[turn % script.responses.size()];
}

} // namespace streammem
