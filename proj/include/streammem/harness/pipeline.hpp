#pragma once

#include "streammem/backend.hpp"
#include "streammem/frame_source.hpp"
#include "streammem/long_term_memory.hpp"
#include "streammem/segmenter.hpp"
#include "streammem/short_term_memory.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace streammem {

inline constexpr std::size_t kDefaultCheckpointEvery = 100;

struct MemoryConfig {
    std::size_t capacity = kDefaultCapacity;
    double delta = kDefaultDelta;
    std::size_t min_len = kDefaultMinEventLength;
    std::size_t bins = kDefaultBinCount;
    std::uint64_t seed = 0;
    double fps = 1.0;
    // "event" or "fixed:<seconds>".
    std::string policy = "event";
    bool archive_on_boundary = false;
    std::size_t checkpoint_every = kDefaultCheckpointEvery;

    // Throws ConfigError on conflicts, e.g. min_len > capacity.
    void validate() const;

    nlohmann::json to_json() const;
    static MemoryConfig from_json(const nlohmann::json& j);
};

struct MemoryBackends {
    std::shared_ptr<Captioner> captioner;
    std::shared_ptr<Embedder> embedder;
};

// Where the pipeline stood after a given number of admits.
struct PipelineCheckpoint {
    std::size_t admitted = 0;
    std::optional<double> last_timestamp_s;
    std::size_t ltm_size = 0;
    SamplerState sampler;
    nlohmann::json stm;

    nlohmann::json to_json() const;
    static PipelineCheckpoint from_json(const nlohmann::json& j);
};

// Sampler -> short-term memory -> long-term archive for one stream.
class MemoryPipeline {
public:
    using AdmitObserver = std::function<void(const Frame& frame, const AdmitResult& result)>;

    MemoryPipeline(const FrameSource& source, MemoryConfig config, MemoryBackends backends, LtmStore ltm = LtmStore());

    // Admits every sampled frame stamped at or before `horizon_s`. Returns the
    // number admitted.
    std::size_t advance_until(double horizon_s);
    std::size_t advance_all();
    // True if sampled frames remain.
    bool has_more();

    const ShortTermMemory& stm() const { return stm_; }
    const LtmStore& ltm() const { return ltm_; }
    LtmStore& ltm() { return ltm_; }
    const MemoryConfig& config() const { return config_; }
    std::size_t admitted() const { return admitted_; }
    std::optional<double> last_timestamp() const { return stm_.last_timestamp(); }

    void set_observer(AdmitObserver observer) { observer_ = std::move(observer); }
    // Called with each checkpoint as it is taken, every checkpoint_every admits.
    void set_checkpoint_sink(std::function<void(const PipelineCheckpoint&)> sink) { sink_ = std::move(sink); }

    PipelineCheckpoint checkpoint() const;
    // Rewinds to `cp`. The long-term store is truncated to its size at the
    // checkpoint, so `cp` must come from this pipeline's history.
    void restore(const PipelineCheckpoint& cp);

private:
    void admit_one(Frame frame);

    const FrameSource* source_;
    MemoryConfig config_;
    MemoryBackends backends_;
    StreamSampler sampler_;
    ShortTermMemory stm_;
    LtmStore ltm_;
    std::size_t admitted_ = 0;
    AdmitObserver observer_;
    std::function<void(const PipelineCheckpoint&)> sink_;
};

// Bookkeeping for an ingested run directory:
//   RUN/run.json            config, source, checkpoint index, final stats
//   RUN/checkpoints/*.json  PipelineCheckpoint every checkpoint_every admits
//   RUN/ltm/                persisted long-term store
//   RUN/stm_final.json      short-term memory at the end of the stream
struct RunSource {
    // "frames" (path is the frame directory) or "synthetic" (spec inline).
    std::string kind;
    std::filesystem::path frames_dir;
    nlohmann::json synthetic_spec;

    std::unique_ptr<FrameSource> open() const;
    nlohmann::json to_json() const;
    static RunSource from_json(const nlohmann::json& j);
};

struct RunIndex {
    std::filesystem::path root;
    RunSource source;
    MemoryConfig config;
    std::vector<PipelineCheckpoint> checkpoints;
    nlohmann::json final_stats;

    // Latest checkpoint whose last admitted frame is at or before horizon_s.
    const PipelineCheckpoint* nearest_checkpoint(double horizon_s) const;

    static RunIndex load(const std::filesystem::path& run_dir);
};

nlohmann::json memory_stats_json(const ShortTermMemory& stm, const LtmStore& ltm);

// Full ingestion into `run_dir`. Returns the final memory stats.
nlohmann::json ingest_run(const RunSource& source, const MemoryConfig& config, MemoryBackends backends,
                          const std::filesystem::path& run_dir);

} // namespace streammem
