#include "streammem/error.hpp"
#include "streammem/frame.hpp"
#include "streammem/frame_source.hpp"
#include "streammem/harness/pipeline.hpp"
#include "streammem/harness/synthetic.hpp"
#include "streammem/long_term_memory.hpp"
#include "streammem/mock_backend.hpp"
#include "streammem/rl_kernel.hpp"
#include "streammem/segmenter.hpp"
#include "streammem/short_term_memory.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace streammem;

namespace {

// JSON crosses the boundary through the stdlib json module.
py::object to_py(const nlohmann::json& j)
{
    return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_py(const py::object& o)
{
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

using GrayArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::vector<std::uint8_t> gray_pixels(const GrayArray& a, int& width, int& height)
{
    if (a.ndim() != 2) {
        throw DimensionError("expected a 2-D (height, width) uint8 array");
    }
    height = static_cast<int>(a.shape(0));
    width = static_cast<int>(a.shape(1));
    return {a.data(), a.data() + a.size()};
}

GrayArray to_array(const std::vector<std::uint8_t>& pixels, int width, int height)
{
    GrayArray out({height, width});
    std::copy(pixels.begin(), pixels.end(), out.mutable_data());
    return out;
}

py::dict event_dict(const StmEvent& e)
{
    py::list held;
    for (const auto& f : e.frames) {
        held.append(f->stream_index);
    }
    py::dict d;
    d["event_id"] = e.state.event_id;
    d["start_s"] = e.state.start_timestamp_s;
    d["end_s"] = e.state.last_timestamp_s;
    d["frames_processed"] = e.state.frames_processed;
    d["held"] = held;
    return d;
}

// Frame-by-frame driver around ShortTermMemory; stream indices are assigned
// in admit order.
class PyShortTermMemory {
public:
    PyShortTermMemory(std::size_t capacity, double delta, std::size_t min_len, std::size_t bins, std::uint64_t seed,
                      const std::string& boundary, bool archive_on_boundary)
    {
        MemoryConfig check;
        check.capacity = capacity;
        check.delta = delta;
        check.min_len = min_len;
        check.bins = bins;
        check.policy = boundary;
        check.validate();
        StmConfig cfg;
        cfg.capacity = capacity;
        cfg.bin_count = bins;
        cfg.seed = seed;
        cfg.archive_on_boundary = archive_on_boundary;
        stm_ = std::make_unique<ShortTermMemory>(cfg, make_boundary_policy(boundary, delta, min_len));
    }

    py::dict admit(const GrayArray& pixels, double timestamp_s)
    {
        Frame f;
        f.pixels = gray_pixels(pixels, f.width, f.height);
        f.timestamp_s = timestamp_s;
        f.stream_index = next_index_;
        f.source_position = next_index_;
        f.label = frame_label(next_index_, timestamp_s);
        const auto result = stm_->admit(std::move(f));
        ++next_index_;
        py::list evicted;
        for (const auto& e : result.evicted_events) {
            evicted.append(event_dict(e));
        }
        py::dict d;
        d["outcome"] = to_string(result.outcome);
        d["replaced_slot"] = result.replaced_slot ? py::cast(*result.replaced_slot) : py::none();
        d["evicted"] = evicted;
        return d;
    }

    py::list events() const
    {
        py::list out;
        for (const auto& e : stm_->events()) {
            out.append(event_dict(e));
        }
        return out;
    }

    py::list snapshot() const
    {
        py::list out;
        for (const auto& s : stm_->snapshot()) {
            out.append(py::make_tuple(s.label, s.frame->timestamp_s, to_array(s.frame->pixels, s.frame->width,
                                                                               s.frame->height)));
        }
        return out;
    }

    py::dict stats() const
    {
        const auto& s = stm_->stats();
        py::dict d;
        d["frames_admitted"] = s.frames_admitted;
        d["events_created"] = s.events_created;
        d["events_evicted"] = s.events_evicted;
        d["boundaries"] = s.boundaries;
        d["reservoir_offers"] = s.reservoir_offers;
        d["reservoir_accepts"] = s.reservoir_accepts;
        d["reservoir_accept_rate"] = s.reservoir_accept_rate();
        return d;
    }

    std::size_t total_held() const { return stm_->total_held(); }
    std::size_t capacity() const { return stm_->config().capacity; }
    py::object debug() const { return to_py(stm_->debug_json()); }

private:
    std::unique_ptr<ShortTermMemory> stm_;
    std::size_t next_index_ = 0;
};

} // namespace

PYBIND11_MODULE(streammem, m)
{
    m.doc() = "Bounded-memory streaming video memory";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", error.ptr());
    py::register_exception<BackendError>(m, "BackendError", error.ptr());
    // Translators run newest first, so bases are registered before subclasses.
    auto data_error = py::register_exception<DataError>(m, "DataError", error.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", data_error.ptr());
    py::register_exception<DegenerateInputError>(m, "DegenerateInputError", data_error.ptr());
    py::register_exception<StreamOrderError>(m, "StreamOrderError", data_error.ptr());
    py::register_exception<FormatError>(m, "FormatError", data_error.ptr());

    m.def(
        "histogram",
        [](const GrayArray& pixels, std::size_t bins) {
            int w = 0;
            int h = 0;
            const auto gray = gray_pixels(pixels, w, h);
            return compute_histogram(std::span<const std::uint8_t>(gray), bins).bins;
        },
        py::arg("pixels"), py::arg("bins") = kDefaultBinCount, "Normalized grayscale histogram of a 2-D uint8 array.");
    m.def(
        "to_grayscale",
        [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> rgb) {
            if (rgb.ndim() != 3 || rgb.shape(2) != 3) {
                throw DimensionError("expected a (height, width, 3) uint8 array");
            }
            const int h = static_cast<int>(rgb.shape(0));
            const int w = static_cast<int>(rgb.shape(1));
            return to_array(to_grayscale(std::span<const std::uint8_t>(rgb.data(), rgb.size()), w, h), w, h);
        },
        py::arg("rgb"));
    m.def(
        "pearson_correlation",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return pearson_correlation(Histogram{a}, Histogram{b});
        },
        py::arg("a"), py::arg("b"));

    py::class_<PyShortTermMemory>(m, "ShortTermMemory")
        .def(py::init<std::size_t, double, std::size_t, std::size_t, std::uint64_t, const std::string&, bool>(),
             py::arg("capacity") = kDefaultCapacity, py::arg("delta") = kDefaultDelta,
             py::arg("min_len") = kDefaultMinEventLength, py::arg("bins") = kDefaultBinCount, py::arg("seed") = 0,
             py::arg("boundary") = "event", py::arg("archive_on_boundary") = false)
        .def("admit", &PyShortTermMemory::admit, py::arg("pixels"), py::arg("timestamp_s"))
        .def("events", &PyShortTermMemory::events)
        .def("snapshot", &PyShortTermMemory::snapshot, "List of (label, timestamp_s, pixels) in time order.")
        .def("stats", &PyShortTermMemory::stats)
        .def("debug", &PyShortTermMemory::debug)
        .def_property_readonly("total_held", &PyShortTermMemory::total_held)
        .def_property_readonly("capacity", &PyShortTermMemory::capacity);

    m.def(
        "embed",
        [](const std::string& text, std::size_t dimension) { return HashEmbedder(dimension).embed(text); },
        py::arg("text"), py::arg("dimension") = kMockEmbeddingDimension, "Deterministic mock text embedding.");
    m.def(
        "cosine_similarity",
        [](const std::vector<double>& a, const std::vector<double>& b) { return cosine_similarity(a, b); },
        py::arg("a"), py::arg("b"));

    m.def("normalize_answer", &normalize_answer, py::arg("answer"));
    m.def(
        "reward",
        [](const std::optional<std::string>& predicted, const std::string& gold) { return reward(predicted, gold); },
        py::arg("predicted"), py::arg("gold"));
    m.def(
        "group_advantages", [](const std::vector<double>& rewards) { return group_advantages(rewards); },
        py::arg("rewards"));
    m.def(
        "clipped_surrogate",
        [](std::vector<double> ratios, std::vector<double> advantages, double epsilon) {
            return clipped_surrogate({std::move(ratios), std::move(advantages), epsilon});
        },
        py::arg("ratios"), py::arg("advantages"), py::arg("epsilon") = kDefaultClipEpsilon);

    m.def(
        "synthetic_frames",
        [](const py::object& spec) {
            SyntheticFrameSource src(SyntheticSpec::from_json(from_py(spec)));
            py::list out;
            for (std::size_t i = 0; i < src.size(); ++i) {
                const auto f = src.load(i);
                out.append(py::make_tuple(f.timestamp_s, to_array(f.gray, f.width, f.height)));
            }
            return out;
        },
        py::arg("spec"), "(timestamp_s, pixels) for every frame of a synthetic spec dict.");
    m.def(
        "write_synthetic",
        [](const py::object& spec, const std::filesystem::path& out_dir) {
            write_synthetic(SyntheticSpec::from_json(from_py(spec)), out_dir);
        },
        py::arg("spec"), py::arg("out_dir"));
    m.def(
        "ingest",
        [](const std::filesystem::path& out_dir, const py::object& frames_dir, const py::object& synthetic,
           const py::object& config) {
            RunSource source;
            if (frames_dir.is_none() == synthetic.is_none()) {
                throw ConfigError("give exactly one of frames_dir or synthetic");
            }
            if (!frames_dir.is_none()) {
                source.kind = "frames";
                source.frames_dir = resolve_frames_dir(frames_dir.cast<std::filesystem::path>());
            } else {
                source.kind = "synthetic";
                source.synthetic_spec = from_py(synthetic);
            }
            const auto cfg = config.is_none() ? MemoryConfig{} : MemoryConfig::from_json(from_py(config));
            const auto embedder = std::make_shared<HashEmbedder>();
            const auto stats = ingest_run(source, cfg, {std::make_shared<MockCaptioner>(), embedder}, out_dir);
            return to_py(stats);
        },
        py::arg("out_dir"), py::kw_only(), py::arg("frames_dir") = py::none(), py::arg("synthetic") = py::none(),
        py::arg("config") = py::none(), "Ingest a stream with the mock backends; returns memory stats.");
}
