// streammem: ingest frame streams into event memory, replay timestamped
// questions through the agent loop, compare boundary policies, generate
// synthetic streams and inspect runs.
//
// Exit codes: 0 ok, 1 config error, 2 data error, 3 backend error.

#include "streammem/agent.hpp"
#include "streammem/error.hpp"
#include "streammem/harness/pipeline.hpp"
#include "streammem/harness/questions.hpp"
#include "streammem/harness/replay.hpp"
#include "streammem/harness/synthetic.hpp"
#include "streammem/http_backend.hpp"
#include "streammem/long_term_memory.hpp"
#include "streammem/mock_backend.hpp"
#include "streammem/rl_kernel.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace streammem;

namespace {

enum Exit { ok = 0, config_error = 1, data_error = 2, backend_error = 3 };

struct SourceArgs {
    std::string frames;
    std::string synthetic;
    std::string fixtures;
};

struct MemoryArgs {
    MemoryConfig config;
    std::string backend = "mock";
};

struct AgentArgs {
    std::string policy;
    std::size_t max_turns = kDefaultMaxTurns;
    std::string trajectories;
    std::string report_json;
    std::string report_csv;
};

void add_source_options(CLI::App* cmd, SourceArgs& a)
{
    cmd->add_option("--frames", a.frames, "Frame directory (holding meta.jsonl, or a frames/ subdirectory)");
    cmd->add_option("--synthetic", a.synthetic, "Synthetic stream spec, generated in memory");
    cmd->add_option("--fixtures", a.fixtures, "Perception fixtures for the mock OCR and detector");
}

void add_memory_options(CLI::App* cmd, MemoryArgs& a)
{
    auto& c = a.config;
    cmd->add_option("--k", c.capacity, "Short-term memory capacity in frames")->capture_default_str();
    cmd->add_option("--delta", c.delta, "Boundary correlation threshold")->capture_default_str();
    cmd->add_option("--min-len", c.min_len, "Frames an event must exceed before it can split")->capture_default_str();
    cmd->add_option("--bins", c.bins, "Histogram bins")->capture_default_str();
    cmd->add_option("--seed", c.seed, "Reservoir sampling seed")->capture_default_str();
    cmd->add_option("--fps", c.fps, "Sampling rate")->capture_default_str();
    cmd->add_option("--boundary", c.policy, "Boundary policy: event or fixed:<seconds>")->capture_default_str();
    cmd->add_option("--checkpoint-every", c.checkpoint_every, "Admits between checkpoints")->capture_default_str();
    cmd->add_flag("--archive-on-boundary", c.archive_on_boundary, "Archive events as soon as they close");
    cmd->add_option("--backend", a.backend, "Caption/embed/perception backend")
        ->check(CLI::IsMember({"mock", "http"}))
        ->capture_default_str();
}

void add_agent_options(CLI::App* cmd, AgentArgs& a)
{
    cmd->add_option("--policy", a.policy, "scripted:<file> or http")->required();
    cmd->add_option("--max-turns", a.max_turns, "Turn budget per question")->capture_default_str();
    cmd->add_option("--trajectories", a.trajectories, "Write trajectories as JSONL");
    cmd->add_option("--report-json", a.report_json, "Write the report as JSON");
    cmd->add_option("--report-csv", a.report_csv, "Write per-question series as CSV");
}

RunSource run_source(const SourceArgs& a)
{
    if (a.frames.empty() == a.synthetic.empty()) {
        throw ConfigError("give exactly one of --frames or --synthetic");
    }
    RunSource s;
    if (!a.frames.empty()) {
        s.kind = "frames";
        s.frames_dir = resolve_frames_dir(a.frames);
    } else {
        s.kind = "synthetic";
        s.synthetic_spec = SyntheticSpec::load(a.synthetic).to_json();
    }
    return s;
}

std::shared_ptr<const FixtureSet> find_fixtures(const std::string& explicit_path, const RunSource& source,
                                                const FrameSource& frames)
{
    if (!explicit_path.empty()) {
        return std::make_shared<const FixtureSet>(FixtureSet::load(explicit_path));
    }
    if (source.kind == "synthetic") {
        return std::make_shared<const FixtureSet>(static_cast<const SyntheticFrameSource&>(frames).fixtures());
    }
    for (const auto& candidate : {source.frames_dir / "fixtures" / "perception.json",
                                  source.frames_dir.parent_path() / "fixtures" / "perception.json"}) {
        if (fs::exists(candidate)) {
            return std::make_shared<const FixtureSet>(FixtureSet::load(candidate));
        }
    }
    return std::make_shared<const FixtureSet>();
}

struct Backends {
    std::shared_ptr<HttpBackend> http;
    MemoryBackends memory;
    PerceptionBackends perception;
};

Backends make_backends(const std::string& kind, std::shared_ptr<const FixtureSet> fixtures)
{
    Backends b;
    if (kind == "http") {
        b.http = std::make_shared<HttpBackend>();
        b.http->check_health();
        b.memory = {b.http, b.http};
        b.perception.embedder = b.http;
        b.perception.ocr = b.http;
        b.perception.detector = b.http;
        return b;
    }
    auto embedder = std::make_shared<HashEmbedder>();
    b.memory = {std::make_shared<MockCaptioner>(), embedder};
    b.perception.embedder = embedder;
    b.perception.ocr = std::make_shared<MockOcr>(fixtures);
    b.perception.detector = std::make_shared<MockDetector>(fixtures);
    return b;
}

std::shared_ptr<PolicyModel> make_policy(const std::string& spec, const Backends& backends)
{
    if (spec.rfind("scripted:", 0) == 0) {
        return std::make_shared<ScriptedPolicy>(ScriptedPolicy::load(spec.substr(9)));
    }
    if (spec == "http") {
        if (backends.http) {
            return backends.http;
        }
        auto http = std::make_shared<HttpBackend>();
        http->check_health();
        return http;
    }
    throw ConfigError(fmt::format("unknown policy '{}': expected scripted:<file> or http", spec));
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError(fmt::format("{}: cannot write", path));
    }
    out << text;
}

void emit_report(const RunReport& report, const AgentArgs& a)
{
    std::cout << render_table(report);
    if (!a.report_json.empty()) {
        write_text(a.report_json, to_json(report).dump(2) + '\n');
    }
    if (!a.report_csv.empty()) {
        write_text(a.report_csv, render_csv(report));
    }
}

int cmd_ingest(const SourceArgs& src, const MemoryArgs& mem, const std::string& out)
{
    const auto source = run_source(src);
    mem.config.validate();
    auto backends = make_backends(mem.backend, std::make_shared<const FixtureSet>());
    const auto stats = ingest_run(source, mem.config, backends.memory, out);
    std::cout << render_stats_table(stats);
    return Exit::ok;
}

int cmd_replay(const SourceArgs& src, const MemoryArgs& mem, const AgentArgs& agent_args, const std::string& run_dir,
               const std::string& questions_path)
{
    const auto questions = load_questions(questions_path);
    std::optional<RunIndex> run;
    std::optional<LtmStore> ingested;
    RunSource source;
    MemoryConfig config = mem.config;
    if (!run_dir.empty()) {
        if (!src.frames.empty() || !src.synthetic.empty()) {
            throw ConfigError("give either --run or a frame source, not both");
        }
        run = RunIndex::load(run_dir);
        ingested = LtmStore::load(fs::path(run_dir) / "ltm");
        source = run->source;
        config = run->config;
    } else {
        source = run_source(src);
    }
    const auto frames = source.open();
    auto backends = make_backends(mem.backend, find_fixtures(src.fixtures, source, *frames));
    auto policy = make_policy(agent_args.policy, backends);

    std::ofstream traj;
    AgentSetup agent;
    agent.policy = policy.get();
    agent.perception = backends.perception;
    agent.episode.max_turns = agent_args.max_turns;
    if (!agent_args.trajectories.empty()) {
        traj.open(agent_args.trajectories, std::ios::trunc);
        agent.trajectories = &traj;
    }
    MemorySetup memory{frames.get(), config, backends.memory, run ? &*run : nullptr, ingested ? &*ingested : nullptr};
    emit_report(replay(memory, questions, agent), agent_args);
    return Exit::ok;
}

int cmd_compare(const SourceArgs& src, const MemoryArgs& mem, const AgentArgs& agent_args,
                const std::string& policies, const std::string& questions_path)
{
    const auto source = run_source(src);
    const auto frames = source.open();
    const auto questions = questions_path.empty() ? std::vector<QuestionItem>{} : load_questions(questions_path);
    auto backends = make_backends(mem.backend, find_fixtures(src.fixtures, source, *frames));
    std::shared_ptr<PolicyModel> policy =
        agent_args.policy.empty() ? std::make_shared<ScriptedPolicy>() : make_policy(agent_args.policy, backends);
    if (!questions.empty() && agent_args.policy.empty()) {
        throw ConfigError("--questions needs --policy");
    }
    AgentSetup agent;
    agent.policy = policy.get();
    agent.perception = backends.perception;
    agent.episode.max_turns = agent_args.max_turns;
    MemorySetup memory{frames.get(), mem.config, backends.memory, nullptr, nullptr};
    const auto reports = compare_policies(memory, split_list(policies), questions, agent);
    std::cout << render_comparison_table(reports);
    if (!agent_args.report_json.empty()) {
        nlohmann::json all = nlohmann::json::array();
        for (const auto& r : reports) {
            all.push_back(to_json(r));
        }
        write_text(agent_args.report_json, all.dump(2) + '\n');
    }
    return Exit::ok;
}

int cmd_stats(const std::string& run_dir, bool as_json)
{
    const auto run = RunIndex::load(run_dir);
    const auto ltm = LtmStore::load(fs::path(run_dir) / "ltm");
    nlohmann::json stats = run.final_stats;
    stats["checkpoints"] = run.checkpoints.size();
    stats["boundary_policy"] = run.config.policy;
    stats["capacity"] = run.config.capacity;
    if (as_json) {
        std::cout << stats.dump(2) << '\n';
        return Exit::ok;
    }
    std::cout << render_stats_table(stats);
    if (!ltm.entries().empty()) {
        std::cout << '\n';
        for (const auto& e : ltm.entries()) {
            std::cout << fmt::format("event {:>4}  [{}s - {}s]  {} frame(s)  {}\n", e.event_id, format_seconds(e.start_s),
                                     format_seconds(e.end_s), e.frame_count, e.pending ? "(pending)" : e.caption);
        }
    }
    return Exit::ok;
}

int cmd_grpo(const std::string& groups, const std::string& out_path)
{
    std::ifstream in(groups);
    if (!in) {
        throw DataError(fmt::format("{}: cannot open", groups));
    }
    if (out_path.empty()) {
        process_groups(in, std::cout);
        return Exit::ok;
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) {
        throw DataError(fmt::format("{}: cannot write", out_path));
    }
    process_groups(in, out);
    return Exit::ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Bounded-memory streaming video memory and agent harness"};
    app.require_subcommand(1);

    SourceArgs src;
    MemoryArgs mem;
    AgentArgs agent;
    std::string out_dir;
    std::string run_dir;
    std::string questions;
    std::string policies = "event,fixed:30";
    std::string spec_path;
    std::string groups;
    bool stats_json = false;

    auto* ingest = app.add_subcommand("ingest", "Run a stream through memory and persist the state");
    add_source_options(ingest, src);
    add_memory_options(ingest, mem);
    ingest->add_option("--out", out_dir, "Run directory")->required();

    auto* replay_cmd = app.add_subcommand("replay", "Answer timestamped questions against the memory");
    replay_cmd->add_option("--run", run_dir, "Ingested run directory");
    add_source_options(replay_cmd, src);
    add_memory_options(replay_cmd, mem);
    add_agent_options(replay_cmd, agent);
    replay_cmd->add_option("--questions", questions, "Questions JSONL, sorted by asked_at_s")->required();

    auto* compare = app.add_subcommand("compare", "Compare boundary policies on one stream");
    add_source_options(compare, src);
    add_memory_options(compare, mem);
    compare->add_option("--policies", policies, "Comma-separated boundary policies")->capture_default_str();
    compare->add_option("--questions", questions, "Questions JSONL (optional)");
    compare->add_option("--policy", agent.policy, "scripted:<file> or http");
    compare->add_option("--max-turns", agent.max_turns, "Turn budget per question")->capture_default_str();
    compare->add_option("--report-json", agent.report_json, "Write all reports as JSON");

    auto* synthetic = app.add_subcommand("synthetic", "Generate a synthetic frame directory");
    synthetic->add_option("--spec", spec_path, "Synthetic stream spec (JSON)")->required();
    synthetic->add_option("--out", out_dir, "Output directory")->required();

    auto* stats = app.add_subcommand("stats", "Memory statistics of an ingested run");
    stats->add_option("--run", run_dir, "Run directory")->required();
    stats->add_flag("--json", stats_json, "Print JSON only");

    auto* grpo = app.add_subcommand("grpo", "Group advantages and clipped objective for groups.jsonl");
    grpo->add_option("--groups", groups, "Input JSONL of {rewards, ratios, epsilon}")->required();
    grpo->add_option("--out", out_dir, "Output JSONL (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::config_error;
    }

    try {
        if (*ingest) {
            return cmd_ingest(src, mem, out_dir);
        }
        if (*replay_cmd) {
            return cmd_replay(src, mem, agent, run_dir, questions);
        }
        if (*compare) {
            return cmd_compare(src, mem, agent, policies, questions);
        }
        if (*synthetic) {
            write_synthetic(SyntheticSpec::load(spec_path), out_dir);
            std::cout << fmt::format("wrote {}\n", out_dir);
            return Exit::ok;
        }
        if (*stats) {
            return cmd_stats(run_dir, stats_json);
        }
        if (*grpo) {
            return cmd_grpo(groups, out_dir);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return Exit::backend_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return Exit::data_error;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return Exit::data_error;
    }
    return Exit::ok;
}
