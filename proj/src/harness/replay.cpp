#include "streammem/harness/replay.hpp"

#include "streammem/error.hpp"
#include "streammem/rl_kernel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <ostream>

namespace streammem {

namespace {

// Left-aligned columns separated by two spaces, header underlined.
std::string aligned(const std::vector<std::vector<std::string>>& rows)
{
    if (rows.empty()) {
        return {};
    }
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            width[c] = std::max(width[c], r[c].size());
        }
    }
    std::string out;
    auto emit = [&](const std::vector<std::string>& r) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            line += c + 1 == r.size() ? r[c] : fmt::format("{:<{}}  ", r[c], width[c]);
        }
        out += line + '\n';
    };
    emit(rows.front());
    std::vector<std::string> rule;
    for (auto w : width) {
        rule.emplace_back(w, '-');
    }
    emit(rule);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        emit(rows[i]);
    }
    return out;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + '"';
}

std::string join(const std::vector<std::string>& parts, const char* sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        out += (i ? sep : "") + parts[i];
    }
    return out;
}

std::string scalar_text(const nlohmann::json& v)
{
    if (v.is_number_float()) {
        return fmt::format("{:.4f}", v.get<double>());
    }
    return v.is_string() ? v.get<std::string>() : v.dump();
}

QuestionResult score(const QuestionItem& q, const Trajectory& tr)
{
    QuestionResult r;
    r.id = q.id;
    r.category = q.category;
    r.asked_at_s = q.asked_at_s;
    r.answer = tr.final_answer;
    r.gold = q.gold;
    r.reward = reward(tr.final_answer, q.gold);
    r.turns_used = tr.turns.size();
    for (const auto& t : tr.turns) {
        if (const auto* call = std::get_if<ToolCall>(&t.action)) {
            r.tools_used.push_back(call->tool_name);
        }
    }
    r.terminated_by = to_string(tr.terminated_by);
    r.max_visible_timestamp_s = tr.max_visible_timestamp_s;
    return r;
}

} // namespace

void RunReport::summarize()
{
    per_category.clear();
    unanswerable = 0;
    online_violations = 0;
    double total = 0.0;
    std::map<std::string, double> sums;
    for (const auto& q : questions) {
        total += q.reward;
        unanswerable += q.unanswerable ? 1 : 0;
        if (q.max_visible_timestamp_s && *q.max_visible_timestamp_s > q.asked_at_s) {
            ++online_violations;
        }
        const auto cat = q.category.value_or("uncategorized");
        per_category[cat].count++;
        sums[cat] += q.reward;
    }
    accuracy = questions.empty() ? 0.0 : total / static_cast<double>(questions.size());
    for (auto& [cat, s] : per_category) {
        s.accuracy = sums[cat] / static_cast<double>(s.count);
    }
}

nlohmann::json to_json(const RunReport& report)
{
    nlohmann::json qs = nlohmann::json::array();
    for (const auto& q : report.questions) {
        qs.push_back({{"id", q.id},
                      {"category", q.category ? nlohmann::json(*q.category) : nlohmann::json(nullptr)},
                      {"asked_at_s", q.asked_at_s},
                      {"answer", q.answer ? nlohmann::json(*q.answer) : nlohmann::json(nullptr)},
                      {"gold", q.gold},
                      {"reward", q.reward},
                      {"turns_used", q.turns_used},
                      {"tools_used", q.tools_used},
                      {"terminated_by", q.terminated_by},
                      {"unanswerable", q.unanswerable},
                      {"max_visible_timestamp_s", q.max_visible_timestamp_s ? nlohmann::json(*q.max_visible_timestamp_s)
                                                                            : nlohmann::json(nullptr)},
                      {"memory", q.memory}});
    }
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [cat, s] : report.per_category) {
        cats[cat] = {{"count", s.count}, {"accuracy", s.accuracy}};
    }
    return {{"boundary_policy", report.boundary_policy},
            {"accuracy", report.accuracy},
            {"question_count", report.questions.size()},
            {"per_category", std::move(cats)},
            {"unanswerable", report.unanswerable},
            {"online_violations", report.online_violations},
            {"memory_stats", report.memory_stats},
            {"questions", std::move(qs)}};
}

std::string render_table(const RunReport& report)
{
    std::vector<std::vector<std::string>> rows{{"id", "asked_at_s", "category", "answer", "gold", "reward", "turns", "tools"}};
    for (const auto& q : report.questions) {
        rows.push_back({q.id, format_seconds(q.asked_at_s), q.category.value_or("-"),
                        q.unanswerable ? "(unanswerable)" : q.answer.value_or("(" + q.terminated_by + ")"), q.gold,
                        fmt::format("{:.0f}", q.reward), std::to_string(q.turns_used),
                        q.tools_used.empty() ? "-" : join(q.tools_used, ",")});
    }
    std::string out = aligned(rows);
    out += fmt::format("\naccuracy {:.4f} over {} question(s) (policy {}, {} unanswerable, {} online violation(s))\n",
                       report.accuracy, report.questions.size(), report.boundary_policy, report.unanswerable,
                       report.online_violations);
    if (!report.per_category.empty()) {
        std::vector<std::vector<std::string>> cats{{"category", "count", "accuracy"}};
        for (const auto& [cat, s] : report.per_category) {
            cats.push_back({cat, std::to_string(s.count), fmt::format("{:.4f}", s.accuracy)});
        }
        out += '\n' + aligned(cats);
    }
    out += '\n' + render_stats_table(report.memory_stats);
    return out;
}

std::string render_csv(const RunReport& report)
{
    std::string out = "id,asked_at_s,category,reward,turns,tools,stm_held,ltm_visible,reservoir_accept_rate\n";
    for (const auto& q : report.questions) {
        auto mem = [&](const char* key) { return q.memory.contains(key) ? scalar_text(q.memory.at(key)) : ""; };
        out += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(q.id), format_seconds(q.asked_at_s),
                           csv_field(q.category.value_or("")), q.reward, q.turns_used,
                           csv_field(join(q.tools_used, ";")), mem("stm_held"), mem("ltm_visible"),
                           mem("reservoir_accept_rate"));
    }
    return out;
}

std::string render_stats_table(const nlohmann::json& stats)
{
    std::vector<std::vector<std::string>> rows{{"stat", "value"}};
    for (const auto& [key, value] : stats.items()) {
        rows.push_back({key, scalar_text(value)});
    }
    return aligned(rows);
}

RunReport replay(const MemorySetup& memory, const std::vector<QuestionItem>& questions, const AgentSetup& agent)
{
    if (memory.source == nullptr || agent.policy == nullptr) {
        throw ConfigError("replay needs a frame source and a policy");
    }
    if (memory.run != nullptr && memory.ingested == nullptr) {
        throw ConfigError("replaying a run needs its long-term store");
    }
    validate_questions(questions);
    const auto registry = make_default_registry(agent.perception);
    const auto& source = *memory.source;
    // An empty stream makes every question unanswerable.
    const double stream_end = source.size() == 0 ? -std::numeric_limits<double>::infinity()
                                                 : source.timestamp(source.size() - 1);

    MemoryPipeline pipeline(source, memory.config, memory.backends);
    if (memory.ingested != nullptr) {
        pipeline.ltm() = *memory.ingested;
        pipeline.ltm().set_autopersist(false);
        pipeline.restore(memory.run->checkpoints.front());
    }

    RunReport report;
    report.boundary_policy = memory.config.policy;
    for (const auto& q : questions) {
        if (q.asked_at_s > stream_end) {
            QuestionResult r;
            r.id = q.id;
            r.category = q.category;
            r.asked_at_s = q.asked_at_s;
            r.gold = q.gold;
            r.terminated_by = "unanswerable";
            r.unanswerable = true;
            report.questions.push_back(std::move(r));
            continue;
        }
        if (memory.run != nullptr) {
            const auto* cp = memory.run->nearest_checkpoint(q.asked_at_s);
            if (cp != nullptr && cp->admitted > pipeline.admitted()) {
                pipeline.ltm() = *memory.ingested;
                pipeline.ltm().set_autopersist(false);
                pipeline.restore(*cp);
            }
        }
        pipeline.advance_until(q.asked_at_s);

        const EpisodeQuestion eq{q.id, question_prompt(q), q.asked_at_s};
        const auto tr = run_episode(eq, pipeline.stm().snapshot(), pipeline.ltm(), *agent.policy, registry, agent.episode);
        if (agent.trajectories != nullptr) {
            *agent.trajectories << serialize_trajectory(tr) << '\n';
        }
        auto r = score(q, tr);
        r.memory = {{"stm_held", pipeline.stm().total_held()},
                    {"ltm_visible", pipeline.ltm().visible_until(q.asked_at_s).size()},
                    {"reservoir_accept_rate", pipeline.stm().stats().reservoir_accept_rate()}};
        report.questions.push_back(std::move(r));
    }

    if (memory.run != nullptr) {
        report.memory_stats = memory.run->final_stats;
    } else {
        pipeline.advance_all();
        report.memory_stats = memory_stats_json(pipeline.stm(), pipeline.ltm());
    }
    report.summarize();
    return report;
}

std::vector<RunReport> compare_policies(const MemorySetup& memory, const std::vector<std::string>& policies,
                                        const std::vector<QuestionItem>& questions, const AgentSetup& agent)
{
    if (policies.empty()) {
        throw ConfigError("no boundary policies to compare");
    }
    std::vector<RunReport> reports;
    for (const auto& p : policies) {
        MemorySetup m = memory;
        m.config.policy = p;
        m.run = nullptr;
        m.ingested = nullptr;
        reports.push_back(replay(m, questions, agent));
    }
    return reports;
}

std::string render_comparison_table(const std::vector<RunReport>& reports)
{
    std::vector<std::vector<std::string>> rows{
        {"policy", "questions", "accuracy", "events_created", "events_evicted", "ltm_entries", "reservoir_accept_rate"}};
    for (const auto& r : reports) {
        const auto& m = r.memory_stats;
        auto stat = [&](const char* key) { return m.contains(key) ? scalar_text(m.at(key)) : "-"; };
        rows.push_back({r.boundary_policy, std::to_string(r.questions.size()),
                        r.questions.empty() ? "n/a" : fmt::format("{:.4f}", r.accuracy), stat("events_created"),
                        stat("events_evicted"), stat("ltm_entries"), stat("reservoir_accept_rate")});
    }
    return aligned(rows);
}

} // namespace streammem
