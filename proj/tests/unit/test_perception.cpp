#include "streammem/error.hpp"
#include "streammem/mock_backend.hpp"
#include "streammem/perception.hpp"

#include "../support/frames.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <random>

using namespace streammem;
using nlohmann::json;

namespace {

struct Fixture {
    LtmStore store;
    StmSnapshot snapshot;
    std::shared_ptr<FixtureSet> fixtures = std::make_shared<FixtureSet>();
    PerceptionBackends backends;
    ToolRegistry registry;

    Fixture()
    {
        HashEmbedder emb;
        const std::vector<std::string> captions{"a person slicing a potato on a cutting board",
                                                "a dog running in a park", "a whiteboard with a phone number",
                                                "an empty kitchen counter", "cars waiting at a red light"};
        for (std::size_t i = 0; i < captions.size(); ++i) {
            ArchivedEvent e;
            e.event_id = static_cast<std::int64_t>(i);
            e.start_s = 10.0 * static_cast<double>(i);
            e.end_s = e.start_s + 8.0;
            e.caption = captions[i];
            e.embedding = emb.embed(captions[i]);
            e.anchor_image_id = fmt::format("anchor-{}.png", i);
            store.append(e);
        }
        for (std::size_t j = 0; j < 3; ++j) {
            auto f = testing_support::constant_frame(50 + j, 50.0 + static_cast<double>(j), 100, 16, 12);
            f.source_path = fmt::format("/frames/{:06d}.png", 50 + j);
            snapshot.push_back({frame_label(j, f.timestamp_s), std::make_shared<const Frame>(std::move(f))});
        }
        fixtures->ocr["anchor-2.png"] = {"CALL 555-0199"};
        fixtures->ocr["000051.png"] = {"EXIT", "Gate 4"};
        fixtures->detect["000052.png"] = {{"cat", {1, 1, 5, 5}, 0.4},
                                          {"dog", {2, 2, 30, 30}, 0.9},
                                          {"Cat", {0, 0, 3, 3}, 0.8},
                                          {"cat", {5, 5, 5, 9}, 0.99}};
        fixtures->detect["anchor-1.png"] = {{"dog", {0, 0, 4, 4}, 0.7}};
        backends.embedder = std::make_shared<HashEmbedder>();
        backends.ocr = std::make_shared<MockOcr>(fixtures);
        backends.detector = std::make_shared<MockDetector>(fixtures);
        registry = make_default_registry(backends);
    }

    ToolContext ctx() const { return {&snapshot, store.entries(), &store}; }

    Observation call(const std::string& tool, json args) const { return registry.dispatch({tool, std::move(args)}, ctx()); }
};

} // namespace

TEST_CASE("search_memory by query returns the matching event first")
{
    Fixture fx;
    const auto o = fx.call("search_memory", {{"query", "slicing a potato"}});
    REQUIRE(o.ok());
    CHECK(o.payload.at("mode") == "semantic");
    const auto& events = o.payload.at("events");
    REQUIRE_FALSE(events.empty());
    CHECK(events.size() <= 3);
    CHECK(events[0].at("event_id") == 0);
    CHECK(o.rendered_text.rfind(fmt::format("search_memory returned {} event(s).\nEvent 0 [0.0s - 8.0s] (similarity ",
                                            events.size()),
                                0) == 0);
    CHECK(o.rendered_text.find("  caption: a person slicing a potato on a cutting board\n") != std::string::npos);
    for (const auto& e : events) {
        CHECK(e.at("similarity").get<double>() > 0.3);
    }
}

TEST_CASE("search_memory by time range")
{
    Fixture fx;
    const auto o = fx.call("search_memory", {{"start_time", 15}, {"end_time", 20}});
    REQUIRE(o.ok());
    CHECK(o.payload.at("mode") == "temporal");
    REQUIRE(o.payload.at("events").size() == 2);
    CHECK(o.payload.at("events")[0].at("event_id") == 1);
    CHECK(o.payload.at("events")[1].at("event_id") == 2);
    CHECK(o.rendered_text ==
          "search_memory returned 2 event(s).\n"
          "Event 1 [10.0s - 18.0s]\n"
          "  caption: a dog running in a park\n"
          "  change_from_previous: none\n"
          "  change_to_next: none\n"
          "Event 2 [20.0s - 28.0s]\n"
          "  caption: a whiteboard with a phone number\n"
          "  change_from_previous: none\n"
          "  change_to_next: none\n");

    const auto all = fx.call("search_memory", {{"start_time", 0}, {"end_time", 1000}});
    CHECK(all.payload.at("events").size() == 3);
    const auto none = fx.call("search_memory", {{"start_time", 500}, {"end_time", 600}});
    REQUIRE(none.ok());
    CHECK(none.rendered_text == "search_memory returned 0 event(s).\n");
}

TEST_CASE("search_memory argument rules")
{
    Fixture fx;
    const std::vector<json> bad{json::object(),
                                {{"query", "x"}, {"start_time", 1}},
                                {{"query", "x"}, {"end_time", 1}},
                                {{"start_time", 1}},
                                {{"end_time", 1}},
                                {{"start_time", 5}, {"end_time", 1}},
                                {{"start_time", "a"}, {"end_time", 1}},
                                {{"query", ""}},
                                {{"query", 3}},
                                {{"query", "x"}, {"k", 3}},
                                json::array()};
    for (const auto& args : bad) {
        const auto o = fx.call("search_memory", args);
        CHECK_FALSE(o.ok());
        CHECK(o.error_code == "invalid_arguments");
        CHECK(o.rendered_text.rfind("Error [invalid_arguments]: ", 0) == 0);
    }
}

TEST_CASE("search_memory only sees the memory it is given")
{
    Fixture fx;
    ToolContext ctx{&fx.snapshot, fx.store.visible_until(20.0), &fx.store};
    const auto o = fx.registry.dispatch({"search_memory", {{"start_time", 0}, {"end_time", 100}}}, ctx);
    REQUIRE(o.ok());
    CHECK(o.payload.at("events").size() == 2);
    const auto q = fx.registry.dispatch({"search_memory", {{"query", "whiteboard phone number"}}}, ctx);
    for (const auto& e : q.payload.at("events")) {
        CHECK(e.at("event_id").get<int>() < 2);
    }
}

TEST_CASE("ocr on an event anchor and on a snapshot frame")
{
    Fixture fx;
    const auto ev = fx.call("ocr", {{"event_id", 2}});
    REQUIRE(ev.ok());
    CHECK(ev.payload.at("lines") == json::array({"CALL 555-0199"}));
    CHECK(ev.rendered_text == "OCR on event 2: 1 line(s).\nCALL 555-0199\n");

    const auto fr = fx.call("ocr", {{"frame_index", 1}});
    REQUIRE(fr.ok());
    CHECK(fr.rendered_text == "OCR on frame 1 (Frame 1 | 51.0s): 2 line(s).\nEXIT\nGate 4\n");

    const auto empty = fx.call("ocr", {{"frame_index", 0}});
    REQUIRE(empty.ok());
    CHECK(empty.payload.at("lines").empty());

    CHECK(fx.call("ocr", json::object()).error_code == "invalid_arguments");
    CHECK(fx.call("ocr", {{"event_id", 1}, {"frame_index", 0}}).error_code == "invalid_arguments");
    CHECK(fx.call("ocr", {{"frame_index", 1.5}}).error_code == "invalid_arguments");
    CHECK(fx.call("ocr", {{"event_id", 99}}).error_code == "target_not_found");
    CHECK(fx.call("ocr", {{"frame_index", 3}}).error_code == "target_not_found");
    CHECK(fx.call("ocr", {{"frame_index", -1}}).error_code == "target_not_found");
}

TEST_CASE("detect_objects filters labels, clips, drops degenerate boxes and sorts by score")
{
    Fixture fx;
    // Defaults to the last snapshot frame (000052.png, 16x12).
    const auto o = fx.call("detect_objects", {{"labels", {"cat", "dog"}}});
    REQUIRE(o.ok());
    CHECK(o.payload.at("target") == json{{"frame_index", 2}});
    const auto& d = o.payload.at("detections");
    REQUIRE(d.size() == 3);
    CHECK(d[0].at("label") == "dog");
    CHECK(d[0].at("box") == json::array({2.0, 2.0, 16.0, 12.0}));
    CHECK(d[1].at("label") == "Cat");
    CHECK(d[2].at("score") == 0.4);
    CHECK(o.rendered_text ==
          "detect_objects on frame 2 (Frame 2 | 52.0s) for [cat, dog]: 3 detection(s).\n"
          "dog [2, 2, 16, 12] score 0.900\n"
          "Cat [0, 0, 3, 3] score 0.800\n"
          "cat [1, 1, 5, 5] score 0.400\n");

    const auto only_dog = fx.call("detect_objects", {{"labels", {"DOG"}}, {"frame_index", 2}});
    CHECK(only_dog.payload.at("detections").size() == 1);

    const auto anchor = fx.call("detect_objects", {{"labels", {"dog"}}, {"event_id", 1}});
    REQUIRE(anchor.ok());
    CHECK(anchor.payload.at("detections").size() == 1);

    CHECK(fx.call("detect_objects", json::object()).error_code == "invalid_arguments");
    CHECK(fx.call("detect_objects", {{"labels", json::array()}}).error_code == "invalid_arguments");
    CHECK(fx.call("detect_objects", {{"labels", {""}}}).error_code == "invalid_arguments");
    CHECK(fx.call("detect_objects", {{"labels", "cat"}}).error_code == "invalid_arguments");
    CHECK(fx.call("detect_objects", {{"labels", {"cat"}}, {"event_id", 1}, {"frame_index", 0}}).error_code ==
          "invalid_arguments");
    CHECK(fx.call("detect_objects", {{"labels", {"cat"}}, {"event_id", 42}}).error_code == "target_not_found");

    StmSnapshot empty;
    ToolContext ctx{&empty, fx.store.entries(), &fx.store};
    CHECK(fx.registry.dispatch({"detect_objects", {{"labels", {"cat"}}}}, ctx).error_code == "target_not_found");
}

TEST_CASE("unknown tools and missing backends become error observations")
{
    Fixture fx;
    const auto o = fx.call("teleport", json::object());
    CHECK_FALSE(o.ok());
    CHECK(o.error_code == "unknown_tool");
    CHECK(o.tool_name == "teleport");
    CHECK(o.rendered_text == "Error [unknown_tool]: unknown tool 'teleport'");

    const auto bare = make_default_registry(PerceptionBackends{});
    CHECK(bare.names() == std::vector<std::string>{"detect_objects", "ocr", "search_memory"});
    CHECK(bare.dispatch({"ocr", {{"frame_index", 0}}}, fx.ctx()).error_code == "backend_error");
    CHECK(bare.dispatch({"search_memory", {{"query", "x"}}}, fx.ctx()).error_code == "backend_error");
}

TEST_CASE("dispatch is total over arbitrary calls")
{
    Fixture fx;
    ToolRegistry reg = make_default_registry(fx.backends);
    reg.register_tool("explode", [](const json&, const ToolContext&) -> Observation { throw std::logic_error("boom"); });
    reg.register_tool("backend_down", [](const json&, const ToolContext&) -> Observation {
        throw BackendError("HTTP 503");
    });
    CHECK(reg.dispatch({"explode", json::object()}, fx.ctx()).error_code == "internal_error");
    CHECK(reg.dispatch({"backend_down", json::object()}, fx.ctx()).error_code == "backend_error");

    std::mt19937_64 rng(3);
    const std::vector<std::string> names{"search_memory", "ocr", "detect_objects", "nope", ""};
    const std::vector<json> values{json(nullptr), json(1), json(-4), json(2.5), json("a"), json::array({"cat"}),
                                   json::object(), json(true), json(1e300)};
    const std::vector<std::string> keys{"query", "start_time", "end_time", "event_id", "frame_index", "labels", "x"};
    for (int i = 0; i < 2000; ++i) {
        json args = json::object();
        const auto n = rng() % 4;
        for (std::uint64_t k = 0; k < n; ++k) {
            args[keys[rng() % keys.size()]] = values[rng() % values.size()];
        }
        const auto& name = names[rng() % names.size()];
        const auto o = reg.dispatch({name, args}, fx.ctx());
        CHECK(o.tool_name == name);
        CHECK_FALSE(o.rendered_text.empty());
        if (!o.ok()) {
            CHECK_FALSE(o.error_code.empty());
        }
    }
}
