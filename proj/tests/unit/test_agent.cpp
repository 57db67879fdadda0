#include "streammem/agent.hpp"
#include "streammem/error.hpp"
#include "streammem/mock_backend.hpp"

#include "../support/frames.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <fstream>
#include <random>

using namespace streammem;
using nlohmann::json;

namespace {

// Records every request and answers from a fixed list.
class RecordingPolicy final : public PolicyModel {
public:
    explicit RecordingPolicy(std::vector<std::string> replies) : replies_(std::move(replies)) {}

    std::string generate(const PolicyRequest& request) override
    {
        requests.push_back(request);
        if (next_ >= replies_.size()) {
            return replies_.back();
        }
        return replies_[next_++];
    }

    std::vector<PolicyRequest> requests;

private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
};

class ThrowingPolicy final : public PolicyModel {
public:
    std::string generate(const PolicyRequest&) override { throw BackendError("model server is down"); }
};

StmSnapshot snapshot_at(std::vector<double> times)
{
    StmSnapshot s;
    for (std::size_t j = 0; j < times.size(); ++j) {
        s.push_back({frame_label(j, times[j]), testing_support::constant_ref(j, times[j], 100)});
    }
    return s;
}

LtmStore store_with(std::vector<std::pair<double, double>> ranges)
{
    LtmStore store;
    HashEmbedder emb;
    std::int64_t id = 0;
    for (const auto& [s, e] : ranges) {
        ArchivedEvent x;
        x.event_id = id++;
        x.start_s = s;
        x.end_s = e;
        x.caption = fmt::format("event covering {} to {}", s, e);
        x.embedding = emb.embed(x.caption);
        store.append(x);
    }
    return store;
}

ToolRegistry registry()
{
    PerceptionBackends pb;
    pb.embedder = std::make_shared<HashEmbedder>();
    auto fixtures = std::make_shared<FixtureSet>();
    pb.ocr = std::make_shared<MockOcr>(fixtures);
    pb.detector = std::make_shared<MockDetector>(fixtures);
    return make_default_registry(pb);
}

const std::string kSearchCall = "Thought: look back.\n```json\n{\"tool\": \"search_memory\", \"arguments\": "
                                "{\"start_time\": 0, \"end_time\": 1000}}\n```";

} // namespace

TEST_CASE("parse_action reads boxed answers")
{
    const auto a = parse_action("The cat is on the mat.\n\\boxed{The cat is sleeping}");
    REQUIRE(std::holds_alternative<FinalAnswer>(a));
    CHECK(std::get<FinalAnswer>(a).text == "The cat is sleeping");

    const auto two = parse_action("\\boxed{A} no wait \\boxed{ B }");
    CHECK(std::get<FinalAnswer>(two).text == "B");

    const auto nested = parse_action("\\boxed{\\frac{1}{2}}");
    CHECK(std::get<FinalAnswer>(nested).text == "\\frac{1}{2}");

    // A boxed answer wins over a tool call in the same response.
    const auto both = parse_action(kSearchCall + "\n\\boxed{C}");
    CHECK(std::get<FinalAnswer>(both).text == "C");

    CHECK(last_boxed("\\boxed{unclosed") == std::nullopt);
    CHECK(last_boxed("\\boxed{ok} \\boxed{unclosed") == std::optional<std::string>("ok"));
}

TEST_CASE("parse_action reads tool calls")
{
    const auto a = parse_action(kSearchCall);
    REQUIRE(std::holds_alternative<ToolCall>(a));
    CHECK(std::get<ToolCall>(a).tool_name == "search_memory");
    CHECK(std::get<ToolCall>(a).arguments == json{{"start_time", 0}, {"end_time", 1000}});

    const auto tagged = parse_action("<tool_call>{\"name\": \"ocr\", \"arguments\": \"{\\\"frame_index\\\": 2}\"}</tool_call>");
    REQUIRE(std::holds_alternative<ToolCall>(tagged));
    CHECK(std::get<ToolCall>(tagged).tool_name == "ocr");
    CHECK(std::get<ToolCall>(tagged).arguments == json{{"frame_index", 2}});

    // The first valid block wins; broken blocks before it are skipped.
    const auto first = parse_action("```\nnot json\n```\n```json\n{\"tool\": \"ocr\", \"arguments\": {\"event_id\": 1}}\n```\n"
                                    "```json\n{\"tool\": \"detect_objects\", \"arguments\": {}}\n```");
    CHECK(std::get<ToolCall>(first).tool_name == "ocr");

    const auto no_args = parse_action("```\n{\"tool\": \"ocr\"}\n```");
    CHECK(std::get<ToolCall>(no_args).arguments == json::object());
}

TEST_CASE("parse_action reports unparseable output")
{
    CHECK(std::holds_alternative<Unparseable>(parse_action("I am not sure.")));
    CHECK(std::holds_alternative<Unparseable>(parse_action("")));
    const auto bad = parse_action("```json\n[1, 2]\n```");
    REQUIRE(std::holds_alternative<Unparseable>(bad));
    CHECK(std::get<Unparseable>(bad).reason.find("tool-call block") != std::string::npos);
    CHECK(std::holds_alternative<Unparseable>(parse_action("```json\n{\"tool\": 3}\n```")));
    CHECK(std::holds_alternative<Unparseable>(parse_action("```json\n{\"tool\": \"ocr\", \"arguments\": [1]}\n```")));
}

TEST_CASE("parse_action never throws on random text")
{
    std::mt19937_64 rng(12);
    const std::string alphabet = "ab{}\\`\n\"<>/:_ ";
    const std::vector<std::string> pieces{"\\boxed{", "```", "```json\n", "<tool_call>", "</tool_call>", "{\"tool\":",
                                          "\"ocr\"", "}", "\"arguments\":", "{"};
    for (int i = 0; i < 3000; ++i) {
        std::string text;
        const auto n = rng() % 12;
        for (std::uint64_t k = 0; k < n; ++k) {
            text += rng() % 2 ? pieces[rng() % pieces.size()] : std::string(1, alphabet[rng() % alphabet.size()]);
        }
        CHECK_NOTHROW(parse_action(text));
        CHECK_NOTHROW(extract_thought(text));
    }
}

TEST_CASE("extract_thought")
{
    CHECK(extract_thought(kSearchCall) == "look back.");
    CHECK(extract_thought("I should check the board.\n```json\n{}\n```") == "I should check the board.");
    CHECK(extract_thought("THOUGHT: shouting\n\\boxed{x}") == "shouting");
    CHECK(extract_thought("Answer is \\boxed{4}") == "Answer is");
}

TEST_CASE("an answer on the first turn ends the episode")
{
    RecordingPolicy policy({"Thought: easy.\n\\boxed{B}"});
    const auto snap = snapshot_at({1.0, 2.0});
    const auto store = store_with({});
    const auto tr = run_episode({"q1", "What?", 5.0}, snap, store, policy, registry());
    CHECK(tr.terminated_by == Termination::answer);
    CHECK(tr.final_answer == std::optional<std::string>("B"));
    REQUIRE(tr.turns.size() == 1);
    CHECK_FALSE(tr.turns[0].observation);
    CHECK(tr.turns[0].thought == "easy.");

    REQUIRE(policy.requests.size() == 1);
    const auto& req = policy.requests[0];
    CHECK(req.question_id == "q1");
    CHECK(req.system_prompt == default_system_prompt());
    REQUIRE(req.messages.size() == 1);
    CHECK(req.messages[0].role == "user");
    CHECK(req.messages[0].content ==
          "Short-term memory: 2 frame(s) attached.\nFrame 0 | 1.0s\nFrame 1 | 2.0s\nQuestion (asked at 5.0s): What?");
    CHECK(req.frames.size() == 2);
}

TEST_CASE("tool turns feed observations back into the context")
{
    RecordingPolicy policy({kSearchCall, "gibberish", "\\boxed{done}"});
    const auto snap = snapshot_at({1.0});
    const auto store = store_with({{0.0, 0.5}});
    const auto tr = run_episode({"q", "Q", 2.0}, snap, store, policy, registry());
    REQUIRE(tr.turns.size() == 3);
    REQUIRE(tr.turns[0].observation);
    CHECK(tr.turns[0].observation->ok());
    CHECK(tr.turns[1].observation->error_code == "unparseable_action");
    CHECK(tr.turns[1].observation->tool_name.empty());

    const auto& last = policy.requests[2].messages;
    REQUIRE(last.size() == 5);
    CHECK(last[1].role == "assistant");
    CHECK(last[1].content == kSearchCall);
    CHECK(last[2].role == "tool");
    CHECK(last[2].content == tr.turns[0].observation->rendered_text);
    CHECK(last[4].content.rfind("Error [unparseable_action]: no tool call or \\boxed{} answer found.", 0) == 0);
}

TEST_CASE("an episode stops at max_turns")
{
    RecordingPolicy policy({kSearchCall});
    const auto snap = snapshot_at({1.0});
    const auto store = store_with({});
    const auto tr = run_episode({"q", "Q", 2.0}, snap, store, policy, registry());
    CHECK(tr.terminated_by == Termination::max_turns);
    CHECK(tr.turns.size() == kDefaultMaxTurns);
    CHECK_FALSE(tr.final_answer);

    EpisodeConfig cfg;
    cfg.max_turns = 3;
    RecordingPolicy p3({kSearchCall});
    CHECK(run_episode({"q", "Q", 2.0}, snap, store, p3, registry(), cfg).turns.size() == 3);
    cfg.max_turns = 0;
    CHECK_THROWS_AS(run_episode({"q", "Q", 2.0}, snap, store, p3, registry(), cfg), ArgumentError);
}

TEST_CASE("a failing policy ends the episode with policy_error")
{
    ThrowingPolicy policy;
    const auto snap = snapshot_at({1.0});
    const auto store = store_with({});
    const auto tr = run_episode({"q", "Q", 2.0}, snap, store, policy, registry());
    CHECK(tr.terminated_by == Termination::policy_error);
    CHECK(tr.error == std::optional<std::string>("model server is down"));
    CHECK(tr.turns.empty());
    const auto j = json::parse(serialize_trajectory(tr));
    CHECK(j.at("terminated_by") == "policy_error");
    CHECK(j.at("final_answer").is_null());
}

TEST_CASE("nothing after the question time reaches the policy")
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> ask(0.0, 120.0);
    std::vector<double> times;
    for (int i = 0; i < 100; ++i) {
        times.push_back(1.2 * i);
    }
    const auto snap = snapshot_at(times);
    std::vector<std::pair<double, double>> ranges;
    for (int i = 0; i < 20; ++i) {
        ranges.emplace_back(6.0 * i, 6.0 * i + 5.0);
    }
    const auto store = store_with(ranges);
    for (int trial = 0; trial < 50; ++trial) {
        const double t = ask(rng);
        RecordingPolicy policy({kSearchCall, "```json\n{\"tool\": \"search_memory\", \"arguments\": {\"query\": \"event covering\"}}\n```",
                                "\\boxed{x}"});
        const auto tr = run_episode({"q", "Q", t}, snap, store, policy, registry());
        for (const auto& req : policy.requests) {
            for (const auto& f : req.frames) {
                CHECK(f.frame->timestamp_s <= t);
            }
        }
        for (const auto& turn : tr.turns) {
            if (turn.observation && turn.observation->ok()) {
                for (const auto& e : turn.observation->payload.at("events")) {
                    CHECK(e.at("end_s").get<double>() <= t);
                }
            }
        }
        REQUIRE(tr.max_visible_timestamp_s);
        CHECK(*tr.max_visible_timestamp_s <= t);
    }
}

TEST_CASE("episodes are deterministic and serialize stably")
{
    const auto snap = snapshot_at({1.0, 2.0, 3.0});
    const auto store = store_with({{0.0, 0.9}});
    auto run = [&] {
        RecordingPolicy policy({kSearchCall, "Thought: read it\n<tool_call>{\"tool\": \"ocr\", \"arguments\": {\"frame_index\": 9}}</tool_call>",
                                "\\boxed{A}"});
        return serialize_trajectory(run_episode({"q7", "Which?", 3.0}, snap, store, policy, registry()));
    };
    const auto a = run();
    CHECK(a == run());
    CHECK(a.find('\n') == std::string::npos);
    const auto j = json::parse(a);
    CHECK(j.at("question_id") == "q7");
    CHECK(j.at("turns").size() == 3);
    CHECK(j.at("turns")[1].at("observation").at("error_code") == "target_not_found");
    CHECK(j.at("turns")[2].at("action") == json{{"type", "final_answer"}, {"text", "A"}});
    CHECK(j.at("turns")[2].at("observation").is_null());
    CHECK(j.at("max_visible_timestamp_s") == 3.0);
}

TEST_CASE("scripted policy")
{
    testing_support::TempDir dir;
    const auto path = dir.path() / "script.jsonl";
    {
        std::ofstream out(path);
        out << R"({"question_id": "q1", "responses": ["one", "two"]})" << '\n'
            << '\n'
            << R"({"question_id": "*", "responses": ["\\boxed{fallback}"], "cycle": true})" << '\n';
    }
    auto policy = ScriptedPolicy::load(path);
    PolicyRequest req;
    req.question_id = "q1";
    req.messages = {{"user", "x"}};
    CHECK(policy.generate(req) == "one");
    req.messages.push_back({"assistant", "one"});
    req.messages.push_back({"tool", "obs"});
    CHECK(policy.generate(req) == "two");
    req.messages.push_back({"assistant", "two"});
    CHECK_THROWS_AS(policy.generate(req), BackendError);
    req.question_id = "other";
    CHECK(policy.generate(req) == "\\boxed{fallback}");

    ScriptedPolicy empty;
    CHECK_THROWS_AS(empty.generate(req), BackendError);

    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"question_id": "q1", "responses": []})" << '\n';
    }
    CHECK_THROWS_AS(ScriptedPolicy::load(path), FormatError);
    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"question_id": "q1", "responses": ["a"]})" << "\n{oops\n";
    }
    try {
        ScriptedPolicy::load(path);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("script.jsonl:2:") != std::string::npos);
    }
}
