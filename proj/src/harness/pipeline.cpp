#include "streammem/harness/pipeline.hpp"

#include "streammem/error.hpp"
#include "streammem/harness/synthetic.hpp"

#include <fmt/format.h>

#include <fstream>

namespace streammem {

namespace fs = std::filesystem;

namespace {

StmConfig stm_config(const MemoryConfig& c)
{
    StmConfig s;
    s.capacity = c.capacity;
    s.bin_count = c.bins;
    s.seed = c.seed;
    s.archive_on_boundary = c.archive_on_boundary;
    return s;
}

MemoryConfig checked(MemoryConfig c)
{
    c.validate();
    return c;
}

nlohmann::json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError(fmt::format("{}: cannot open", path.string()));
    }
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw FormatError(fmt::format("{}: not valid JSON", path.string()));
    }
    return j;
}

void write_json_file(const fs::path& path, const nlohmann::json& j, int indent = -1)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError(fmt::format("{}: cannot write", path.string()));
    }
    out << j.dump(indent) << '\n';
}

} // namespace

void MemoryConfig::validate() const
{
    if (capacity < 1) {
        throw ConfigError("capacity K must be at least 1");
    }
    if (!(delta > 0.0 && delta <= 1.0)) {
        throw ConfigError(fmt::format("delta must lie in (0, 1], got {}", delta));
    }
    if (min_len < 1) {
        throw ConfigError("min_len must be at least 1");
    }
    if (min_len > capacity) {
        throw ConfigError(fmt::format("min_len {} exceeds capacity K {}", min_len, capacity));
    }
    if (bins < 2 || 256 % bins != 0) {
        throw ConfigError(fmt::format("bin count {} must divide 256 and be at least 2", bins));
    }
    if (!(fps > 0.0)) {
        throw ConfigError(fmt::format("fps must be positive, got {}", fps));
    }
    if (checkpoint_every < 1) {
        throw ConfigError("checkpoint interval must be at least 1");
    }
    try {
        make_boundary_policy(policy, delta, min_len);
    } catch (const ArgumentError& ex) {
        throw ConfigError(ex.what());
    }
}

nlohmann::json MemoryConfig::to_json() const
{
    return {{"capacity", capacity},
            {"delta", delta},
            {"min_len", min_len},
            {"bins", bins},
            {"seed", seed},
            {"fps", fps},
            {"policy", policy},
            {"archive_on_boundary", archive_on_boundary},
            {"checkpoint_every", checkpoint_every}};
}

MemoryConfig MemoryConfig::from_json(const nlohmann::json& j)
{
    MemoryConfig c;
    c.capacity = j.value("capacity", c.capacity);
    c.delta = j.value("delta", c.delta);
    c.min_len = j.value("min_len", c.min_len);
    c.bins = j.value("bins", c.bins);
    c.seed = j.value("seed", c.seed);
    c.fps = j.value("fps", c.fps);
    c.policy = j.value("policy", c.policy);
    c.archive_on_boundary = j.value("archive_on_boundary", c.archive_on_boundary);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    return c;
}

nlohmann::json PipelineCheckpoint::to_json() const
{
    return {{"admitted", admitted},
            {"last_timestamp_s", last_timestamp_s ? nlohmann::json(*last_timestamp_s) : nlohmann::json(nullptr)},
            {"ltm_size", ltm_size},
            {"sampler",
             {{"cursor", sampler.cursor},
              {"next_index", sampler.next_index},
              {"last_window", sampler.last_window},
              // -inf before the first frame; JSON has no infinities.
              {"last_source_timestamp", sampler.cursor == 0 ? nlohmann::json(nullptr)
                                                            : nlohmann::json(sampler.last_source_timestamp)}}},
            {"stm", stm}};
}

PipelineCheckpoint PipelineCheckpoint::from_json(const nlohmann::json& j)
{
    PipelineCheckpoint cp;
    cp.admitted = j.at("admitted").get<std::size_t>();
    if (!j.at("last_timestamp_s").is_null()) {
        cp.last_timestamp_s = j.at("last_timestamp_s").get<double>();
    }
    cp.ltm_size = j.at("ltm_size").get<std::size_t>();
    const auto& s = j.at("sampler");
    cp.sampler.cursor = s.at("cursor").get<std::size_t>();
    cp.sampler.next_index = s.at("next_index").get<std::size_t>();
    cp.sampler.last_window = s.at("last_window").get<std::int64_t>();
    if (!s.at("last_source_timestamp").is_null()) {
        cp.sampler.last_source_timestamp = s.at("last_source_timestamp").get<double>();
    }
    cp.stm = j.at("stm");
    return cp;
}

MemoryPipeline::MemoryPipeline(const FrameSource& source, MemoryConfig config, MemoryBackends backends, LtmStore ltm)
    : source_(&source),
      config_(checked(std::move(config))),
      backends_(std::move(backends)),
      sampler_(source, config_.fps),
      stm_(stm_config(config_), make_boundary_policy(config_.policy, config_.delta, config_.min_len)),
      ltm_(std::move(ltm))
{
    if (!backends_.captioner || !backends_.embedder) {
        throw ConfigError("memory pipeline needs a captioner and an embedder");
    }
}

void MemoryPipeline::admit_one(Frame frame)
{
    auto ref = std::make_shared<const Frame>(std::move(frame));
    auto result = stm_.admit(ref);
    for (const auto& ev : result.evicted_events) {
        // Earlier failures get another chance before the next entry lands.
        if (ltm_.has_pending()) {
            ltm_.retry_pending(*backends_.captioner, *backends_.embedder);
        }
        ltm_.archive(ev, *backends_.captioner, *backends_.embedder);
    }
    ++admitted_;
    if (observer_) {
        observer_(*ref, result);
    }
    if (sink_ && admitted_ % config_.checkpoint_every == 0) {
        sink_(checkpoint());
    }
}

std::size_t MemoryPipeline::advance_until(double horizon_s)
{
    std::size_t n = 0;
    while (true) {
        const auto t = sampler_.peek_timestamp();
        if (!t || *t > horizon_s) {
            break;
        }
        admit_one(*sampler_.next());
        ++n;
    }
    return n;
}

std::size_t MemoryPipeline::advance_all()
{
    std::size_t n = 0;
    while (auto f = sampler_.next()) {
        admit_one(std::move(*f));
        ++n;
    }
    return n;
}

bool MemoryPipeline::has_more()
{
    return sampler_.peek_timestamp().has_value();
}

PipelineCheckpoint MemoryPipeline::checkpoint() const
{
    PipelineCheckpoint cp;
    cp.admitted = admitted_;
    cp.last_timestamp_s = stm_.last_timestamp();
    cp.ltm_size = ltm_.size();
    cp.sampler = sampler_.state();
    cp.stm = stm_.checkpoint_json();
    return cp;
}

void MemoryPipeline::restore(const PipelineCheckpoint& cp)
{
    if (cp.ltm_size > ltm_.size()) {
        throw ConfigError(fmt::format("checkpoint expects {} archived events, store has {}", cp.ltm_size, ltm_.size()));
    }
    sampler_.restore(cp.sampler);
    stm_.restore(cp.stm, [this](std::size_t position, std::size_t index) {
        return std::make_shared<const Frame>(sampler_.materialize(position, index));
    });
    ltm_.truncate(cp.ltm_size);
    admitted_ = cp.admitted;
}

std::unique_ptr<FrameSource> RunSource::open() const
{
    if (kind == "frames") {
        return std::make_unique<DirectoryFrameSource>(load_frame_directory(frames_dir));
    }
    if (kind == "synthetic") {
        return std::make_unique<SyntheticFrameSource>(SyntheticSpec::from_json(synthetic_spec));
    }
    throw ConfigError(fmt::format("unknown run source kind '{}'", kind));
}

nlohmann::json RunSource::to_json() const
{
    if (kind == "synthetic") {
        return {{"kind", kind}, {"spec", synthetic_spec}};
    }
    return {{"kind", kind}, {"frames_dir", fs::absolute(frames_dir).string()}};
}

RunSource RunSource::from_json(const nlohmann::json& j)
{
    RunSource s;
    s.kind = j.at("kind").get<std::string>();
    if (s.kind == "synthetic") {
        s.synthetic_spec = j.at("spec");
    } else {
        s.frames_dir = j.at("frames_dir").get<std::string>();
    }
    return s;
}

const PipelineCheckpoint* RunIndex::nearest_checkpoint(double horizon_s) const
{
    const PipelineCheckpoint* best = nullptr;
    for (const auto& cp : checkpoints) {
        if (!cp.last_timestamp_s || *cp.last_timestamp_s <= horizon_s) {
            best = &cp;
        }
    }
    return best;
}

RunIndex RunIndex::load(const fs::path& run_dir)
{
    const auto j = read_json_file(run_dir / "run.json");
    RunIndex idx;
    idx.root = run_dir;
    try {
        idx.source = RunSource::from_json(j.at("source"));
        idx.config = MemoryConfig::from_json(j.at("config"));
        for (const auto& name : j.at("checkpoints")) {
            idx.checkpoints.push_back(
                PipelineCheckpoint::from_json(read_json_file(run_dir / "checkpoints" / name.get<std::string>())));
        }
        idx.final_stats = j.value("final_stats", nlohmann::json::object());
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(fmt::format("{}: {}", (run_dir / "run.json").string(), ex.what()));
    }
    idx.config.validate();
    return idx;
}

nlohmann::json memory_stats_json(const ShortTermMemory& stm, const LtmStore& ltm)
{
    const auto& s = stm.stats();
    std::size_t pending = 0;
    for (const auto& e : ltm.entries()) {
        pending += e.pending ? 1 : 0;
    }
    return {{"frames_admitted", s.frames_admitted},
            {"events_created", s.events_created},
            {"events_evicted", s.events_evicted},
            {"boundaries", s.boundaries},
            {"reservoir_offers", s.reservoir_offers},
            {"reservoir_accepts", s.reservoir_accepts},
            {"reservoir_accept_rate", s.reservoir_accept_rate()},
            {"stm_events", stm.events().size()},
            {"stm_held", stm.total_held()},
            {"ltm_entries", ltm.size()},
            {"ltm_pending", pending}};
}

nlohmann::json ingest_run(const RunSource& source, const MemoryConfig& config, MemoryBackends backends,
                          const fs::path& run_dir)
{
    config.validate();
    const auto frames = source.open();
    fs::create_directories(run_dir / "checkpoints");
    fs::remove_all(run_dir / "ltm");

    MemoryPipeline pipeline(*frames, config, std::move(backends));
    nlohmann::json checkpoint_names = nlohmann::json::array();
    auto save = [&](const PipelineCheckpoint& cp) {
        const auto name = fmt::format("{:08d}.json", cp.admitted);
        write_json_file(run_dir / "checkpoints" / name, cp.to_json());
        checkpoint_names.push_back(name);
    };
    save(pipeline.checkpoint());
    pipeline.set_checkpoint_sink(save);
    pipeline.advance_all();

    pipeline.ltm().persist_to(run_dir / "ltm");
    const auto stats = memory_stats_json(pipeline.stm(), pipeline.ltm());
    nlohmann::json final_stm = pipeline.stm().debug_json();
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& f : pipeline.stm().snapshot()) {
        labels.push_back(f.label);
    }
    final_stm["snapshot_labels"] = std::move(labels);
    write_json_file(run_dir / "stm_final.json", final_stm, 2);
    write_json_file(run_dir / "run.json",
                    {{"source", source.to_json()},
                     {"config", config.to_json()},
                     {"checkpoints", std::move(checkpoint_names)},
                     {"final_stats", stats}},
                    2);
    return stats;
}

} // namespace streammem
