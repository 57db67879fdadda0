#pragma once

#include "streammem/agent.hpp"
#include "streammem/harness/pipeline.hpp"
#include "streammem/harness/questions.hpp"
#include "streammem/perception.hpp"

#include <json.hpp>

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace streammem {

struct QuestionResult {
    std::string id;
    std::optional<std::string> category;
    double asked_at_s = 0.0;
    std::optional<std::string> answer;
    std::string gold;
    double reward = 0.0;
    std::size_t turns_used = 0;
    std::vector<std::string> tools_used;
    // answer | max_turns | policy_error | unanswerable
    std::string terminated_by;
    // Asked after the stream ended; never run, scored 0.
    bool unanswerable = false;
    std::optional<double> max_visible_timestamp_s;
    // Memory at ask time: stm_held, ltm_visible, reservoir_accept_rate.
    nlohmann::json memory = nlohmann::json::object();
};

struct CategoryScore {
    std::size_t count = 0;
    double accuracy = 0.0;
};

struct RunReport {
    std::string boundary_policy;
    std::vector<QuestionResult> questions;
    double accuracy = 0.0;
    std::map<std::string, CategoryScore> per_category;
    nlohmann::json memory_stats = nlohmann::json::object();
    std::size_t unanswerable = 0;
    // Questions whose context reached past their ask time. Always 0 unless
    // something is broken.
    std::size_t online_violations = 0;

    // Recomputes accuracy, per-category scores and the counters from
    // `questions`.
    void summarize();
};

nlohmann::json to_json(const RunReport& report);
std::string render_table(const RunReport& report);
// One row per question: id, asked_at_s, category, reward, turns, tools,
// stm_held, ltm_visible, reservoir_accept_rate.
std::string render_csv(const RunReport& report);

struct AgentSetup {
    PolicyModel* policy = nullptr;
    PerceptionBackends perception;
    EpisodeConfig episode;
    // Receives one serialized trajectory per answered question when set.
    std::ostream* trajectories = nullptr;
};

struct MemorySetup {
    const FrameSource* source = nullptr;
    MemoryConfig config;
    MemoryBackends backends;
    // An ingested run: checkpoints to jump from, its archive and final stats.
    const RunIndex* run = nullptr;
    const LtmStore* ingested = nullptr;
};

// Answers `questions` (sorted by ask time) against the memory as it stood at
// each ask time. With a run, each question starts from the nearest earlier
// checkpoint when that is ahead of the current position.
RunReport replay(const MemorySetup& memory, const std::vector<QuestionItem>& questions, const AgentSetup& agent);

// Same questions under each boundary policy ("event", "fixed:30", ...),
// re-ingesting from the source each time.
std::vector<RunReport> compare_policies(const MemorySetup& memory, const std::vector<std::string>& policies,
                                        const std::vector<QuestionItem>& questions, const AgentSetup& agent);

std::string render_comparison_table(const std::vector<RunReport>& reports);

// Aligned two-column table of a memory stats object.
std::string render_stats_table(const nlohmann::json& stats);

} // namespace streammem
