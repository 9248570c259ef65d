#include <chrono>
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "schema_check.hpp"
#include "vrc/service.hpp"

using namespace vrc;
using nlohmann::json;

namespace {

json base_config() {
    return {{"sim_config", fixtures::data_path("configs/sim.json")},
            {"prompt_dir", fixtures::data_path("prompts")},
            {"host", "127.0.0.1"},
            {"port", 0}};
}

ServiceConfig config_with(json overrides = json::object()) {
    json j = base_config();
    j.merge_patch(overrides);
    return ServiceConfig::from_json(j);
}

std::unique_ptr<LlmBackend> scripted_timeout() {
    return std::make_unique<MockScriptedBackend>(std::vector<MockScriptedBackend::Entry>{
        {Stage::classification, std::nullopt, "", BackendError::Kind::timeout}});
}

std::string query_body(const std::string& q, std::optional<std::string> ego = std::nullopt,
                        std::optional<std::int64_t> scene = std::nullopt) {
    json j = {{"question", q}};
    if (ego) j["ego_id"] = *ego;
    if (scene) j["scene_id"] = *scene;
    return j.dump();
}

/// Server-sent events as (id, data) pairs.
std::vector<std::pair<std::int64_t, std::string>> parse_events(const std::string& text) {
    std::vector<std::pair<std::int64_t, std::string>> out;
    std::size_t pos = 0;
    while (true) {
        const auto end = text.find("\n\n", pos);
        if (end == std::string::npos) break;
        const std::string block = text.substr(pos, end - pos);
        pos = end + 2;
        std::int64_t id = -1;
        std::string data;
        std::istringstream lines(block);
        for (std::string line; std::getline(lines, line);) {
            if (line.starts_with("id: ")) id = std::stoll(line.substr(4));
            if (line.starts_with("data: ")) data = line.substr(6);
        }
        out.emplace_back(id, data);
    }
    return out;
}

}  // namespace

TEST_SUITE("service") {
    TEST_CASE("shipped service config loads and validates") {
        const ServiceConfig c = ServiceConfig::load(fixtures::data_path("configs/service.json"));
        CHECK(c.port == 8080);
        CHECK(c.tick_rate_hz == 5.0);
        CHECK(c.backend.at("kind") == "mock_oracle");
        CHECK(c.run.sim.av_count > 0);
        CHECK(schema_check::errors("config", c.to_json().dump()).empty());
        CHECK_THROWS_AS(config_with({{"tick_rate_hz", 0}}), Error);
        CHECK_THROWS_AS(config_with({{"prompt_dir", "/nonexistent"}}), NotFoundError);
        CHECK_THROWS_AS(config_with({{"sim_config", "/nonexistent.json"}}), NotFoundError);
    }

    TEST_CASE("config endpoint redacts secrets") {
        Service s(config_with({{"backend", {{"kind", "remote"}, {"endpoint", "http://127.0.0.1:9/v1/chat/completions"},
                                            {"model", "m"}, {"api_key", "sk-secret"}}}}));
        const ApiResponse r = s.handle_config();
        CHECK(r.status == 200);
        CHECK(r.body.find("sk-secret") == std::string::npos);
        CHECK(schema_check::errors("config", r.body).empty());
    }

    TEST_CASE("scene endpoint before and after ticks") {
        Service s(config_with());
        const ApiResponse before = s.handle_scene();
        CHECK(before.status == 503);
        CHECK(schema_check::errors("error", before.body).empty());
        CHECK(s.handle_query(query_body("Is there a car?")).status == 503);

        s.tick();
        const ApiResponse a = s.handle_scene();
        REQUIRE(a.status == 200);
        CHECK(schema_check::errors("linguistic_scene", a.body) == "");
        s.tick();
        const ApiResponse b = s.handle_scene();
        CHECK(json::parse(b.body).at("scene_id").get<int>() > json::parse(a.body).at("scene_id").get<int>());
        CHECK(s.handle_scene(0).status == 200);
        CHECK(s.handle_scene(999).status == 404);
        const auto health = s.handle_health();
        CHECK(schema_check::errors("health", health.body).empty());
        CHECK(json::parse(health.body).at("scenes") == 2);
    }

    TEST_CASE("query validation") {
        Service s(config_with());
        s.tick();
        const auto status = [&](const std::string& body) { return s.handle_query(body).status; };
        CHECK(status(query_body("")) == 400);
        CHECK(status(query_body("   ")) == 400);
        CHECK(status("{not json") == 400);
        CHECK(status(R"({"ego_id": "AV001"})") == 400);
        CHECK(status(R"({"question": "Is there a car?", "scene_id": "x"})") == 400);
        CHECK(status(query_body("Is there a car?", "AV999")) == 404);
        CHECK(status(query_body("Is there a car?", std::nullopt, 12345)) == 404);
        const ApiResponse bad = s.handle_query(query_body("", "AV999"));
        CHECK(schema_check::errors("error", bad.body).empty());
    }

    TEST_CASE("queries default to the first AV and the latest scene") {
        Service s(config_with());
        s.tick();
        s.tick();
        const ApiResponse r = s.handle_query(query_body("How many cars are around me?"));
        REQUIRE(r.status == 200);
        CHECK(schema_check::errors("cop_result", r.body) == "");
        const json j = json::parse(r.body);
        CHECK(j.at("ego_id") == s.latest()->av_ids().front());
        CHECK(j.at("scene_id") == s.latest()->scene_id);
        CHECK(j.at("task") == "count");
        CHECK(j.at("question").get<std::string>().starts_with(kRadiusPrefix));
        CHECK_FALSE(j.at("advice").get<std::string>().empty());
    }

    TEST_CASE("pinned queries reproduce generated ground truth") {
        // The same config yields the same scenes, so a dataset drawn from one
        // instance is the answer key for another.
        std::vector<LinguisticScene> scenes;
        {
            Service gen(config_with());
            for (int i = 0; i < 40; ++i) scenes.push_back(*gen.find(gen.tick()));
        }
        DatasetOptions opt;
        opt.n = 60;
        opt.seed = 3;
        const auto pairs = generate_dataset(scenes, load_templates(fixtures::data_path("templates.jsonl")), opt);
        Service s(config_with(), std::make_unique<MockOracleBackend>(AnswerKey::from_dataset(pairs)));
        for (int i = 0; i < 40; ++i) s.tick();
        for (const QAPair& qa : pairs) {
            const ApiResponse r = s.handle_query(query_body(qa.question, qa.ego_id, qa.scene_id));
            REQUIRE(r.status == 200);
            const json j = json::parse(r.body);
            const NumericResult got = numeric_from_json(j.at("numeric"));
            const NumericResult truth = qa.truth();
            REQUIRE(got.values.size() == truth.values.size());
            for (std::size_t k = 0; k < got.values.size(); ++k) CHECK(got.values[k] == doctest::Approx(truth.values[k]).epsilon(1e-9));
            CHECK(j.at("task_id") == task_number(qa.task));
        }
    }

    TEST_CASE("backend failure maps to 502 naming the stage") {
        Service s(config_with(), scripted_timeout());
        s.tick();
        const ApiResponse r = s.handle_query(query_body("How far is the car in front of me?"));
        CHECK(r.status == 502);
        CHECK(schema_check::errors("cop_result", r.body) == "");
        CHECK(json::parse(r.body).at("error").at("stage") == "classification");
    }

    TEST_CASE("queries do not disturb the scene stream") {
        Service quiet(config_with());
        Service busy(config_with());
        for (int i = 0; i < 15; ++i) {
            quiet.tick();
            busy.tick();
            busy.handle_query(query_body("How fast is the car in front of me?"));
            busy.handle_query(query_body("Is there a truck behind me?"));
            CHECK(quiet.handle_scene().body == busy.handle_scene().body);
        }
    }

    TEST_CASE("HTTP endpoints") {
        Service s(config_with());
        s.tick();
        const int port = s.start_http();
        httplib::Client cli("127.0.0.1", port);
        auto health = cli.Get("/health");
        REQUIRE(health);
        CHECK(health->status == 200);
        CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
        auto scene = cli.Get("/scene");
        REQUIRE(scene);
        CHECK(scene->status == 200);
        CHECK(schema_check::errors("linguistic_scene", scene->body).empty());
        CHECK(cli.Get("/scene?scene_id=77")->status == 404);
        CHECK(cli.Get("/scene?scene_id=abc")->status == 400);
        auto q = cli.Post("/query", query_body("What color is the car in front of me?"), "application/json");
        REQUIRE(q);
        CHECK(q->status == 200);
        CHECK(schema_check::errors("cop_result", q->body).empty());
        CHECK(cli.Post("/query", query_body(""), "application/json")->status == 400);
        CHECK(cli.Post("/query", query_body("Is there a car?", "AV999"), "application/json")->status == 404);
        auto cfg = cli.Get("/config");
        REQUIRE(cfg);
        CHECK(schema_check::errors("config", cfg->body).empty());
        CHECK(cli.Options("/query")->status == 204);
        s.stop_http();
    }

    TEST_CASE("stream delivers about one event per tick at 5 Hz") {
        Service s(config_with());
        const int port = s.start_http();
        s.start_simulation();
        httplib::Client cli("127.0.0.1", port);
        cli.set_read_timeout(5, 0);
        std::string received;
        const auto start = std::chrono::steady_clock::now();
        cli.Get("/stream", [&](const char* data, std::size_t n) {
            received.append(data, n);
            return std::chrono::steady_clock::now() - start < std::chrono::seconds(2);
        });
        s.stop_simulation();
        s.stop_http();
        const auto events = parse_events(received);
        CHECK(events.size() >= 9);
        CHECK(events.size() <= 12);
        for (std::size_t i = 0; i < events.size(); ++i) {
            CHECK(schema_check::errors("linguistic_scene", events[i].second).empty());
            CHECK(json::parse(events[i].second).at("scene_id") == events[i].first);
            if (i > 0) CHECK(events[i].first > events[i - 1].first);
        }
    }

    TEST_CASE("stream subscribers start at the latest scene without replaying the backlog") {
        Service s(config_with());
        for (int i = 0; i < 6; ++i) s.tick();
        const int port = s.start_http();
        httplib::Client cli("127.0.0.1", port);
        std::string received;
        cli.Get("/stream?max_events=1", [&](const char* data, std::size_t n) {
            received.append(data, n);
            return true;
        });
        s.stop_http();
        const auto events = parse_events(received);
        REQUIRE(events.size() == 1);
        CHECK(events[0].first == s.latest()->scene_id);
    }
}
