#include <chrono>
#include <cmath>
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "sim_scenes.hpp"
#include "vrc/cop.hpp"

using namespace vrc;
using fixtures::object;
using nlohmann::json;

namespace {

const PromptSet& prompts() {
    static const PromptSet p = PromptSet::load();
    return p;
}

bool numeric_close(const NumericResult& a, const NumericResult& b) {
    if (a.task != b.task || a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (std::abs(a.values[i] - b.values[i]) > 1e-6) return false;
    }
    return true;
}

std::size_t occurrences(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
    return n;
}

MockScriptedBackend scripted(std::initializer_list<std::pair<Stage, std::string>> replies) {
    std::vector<MockScriptedBackend::Entry> t;
    for (const auto& [stage, reply] : replies) t.push_back({stage, std::nullopt, reply, std::nullopt});
    return MockScriptedBackend(std::move(t));
}

LinguisticScene distance_scene() {
    return fixtures::scene_of({object("AV001", 0, 0), object("car001", 0, 50)});
}

/// A local chat-completion endpoint.
struct FakeChatServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    json last_body;
    std::mutex mutex;

    explicit FakeChatServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard lock(mutex);
                last_body = json::parse(req.body);
            }
            handler(req, res);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeChatServer() {
        server.stop();
        thread.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"; }
};

void reply_with(httplib::Response& res, const std::string& content) {
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                    "application/json");
}

}  // namespace

TEST_SUITE("cop") {
    TEST_CASE("shipped prompts have head and body and the mandated content") {
        const PromptSet& p = prompts();
        for (int i = 1; i <= 10; ++i) {
            CHECK(p.p_tc.body.find("(" + std::to_string(i) + ")") != std::string::npos);
        }
        CHECK(p.p_tc.body.find(R"({"task": <integer 1-10>})") != std::string::npos);
        CHECK(occurrences(p.p_pe.body, "Question:") >= 4);  // three or more examples plus the question
        CHECK(p.p_ce.body.find(R"("advice")") != std::string::npos);
        CHECK_FALSE(p.existence_rule.empty());
    }

    TEST_CASE("slot filling") {
        CHECK(fill_slots("a {{x}} b {{x}}", {{"x", "1"}}) == "a 1 b 1");
        CHECK_THROWS_WITH_AS(fill_slots("{{y}}", {}), doctest::Contains("no value for slot 'y'"), Error);
        CHECK_THROWS_AS(fill_slots("{{y", {{"y", ""}}), Error);
        CHECK_THROWS_AS(PromptTemplate::parse("no sections"), Error);
    }

    TEST_CASE("reply JSON is found behind reasoning, fences and prose") {
        CHECK(*find_json_object(R"({"task": 3})") == json{{"task", 3}});
        CHECK(*find_json_object("<think>maybe {\"task\": 2}</think>\n```json\n{\"task\": 9}\n```") == json{{"task", 9}});
        CHECK(*find_json_object(R"(Sure. {"answer": "a } b", "advice": "c"} done)") ==
              json{{"answer", "a } b"}, {"advice", "c"}});
        CHECK_FALSE(find_json_object("velocity is task one").has_value());
    }

    TEST_CASE("classification examples") {
        MockOracleBackend oracle;
        CopPipeline cop(prompts(), oracle);
        CHECK(cop.classify("how fast is the bus ahead?") == TaskId::velocity);
        CHECK(cop.classify("is there any car on my left lane?") == TaskId::existence);
        CHECK(cop.classify(std::string(kRadiusPrefix) + "How many trucks are behind me?") == TaskId::count);
        CHECK_THROWS_AS(cop.classify("  "), Error);
    }

    TEST_CASE("one repair retry after an unparseable reply") {
        auto backend = scripted({{Stage::classification, "velocity is task one"},
                                 {Stage::classification, R"({"task":1})"}});
        CopPipeline cop(prompts(), backend);
        CHECK(cop.classify("how fast is the bus ahead?") == TaskId::velocity);
        CHECK(backend.remaining() == 0);

        auto stubborn = scripted({{Stage::classification, "one"}, {Stage::classification, R"({"task": 11})"}});
        CopPipeline bad(prompts(), stubborn);
        try {
            bad.classify("how fast is the bus ahead?");
            FAIL("expected a stage error");
        } catch (const StageError& e) {
            CHECK(e.stage == Stage::classification);
            CHECK_FALSE(e.backend.has_value());
        }
    }

    TEST_CASE("the repair message is sent as a follow-up turn") {
        std::vector<MockScriptedBackend::Entry> t = {
            {Stage::extraction, std::nullopt, "not json", std::nullopt},
            {Stage::extraction, std::string("could not be used"), R"({"vtype":"bus","relation":"front"})", std::nullopt}};
        MockScriptedBackend backend(t);
        CopPipeline cop(prompts(), backend);
        const QueryParams p = cop.extract("how fast is the bus ahead?", {});
        CHECK(p.vtype == VehicleType::bus);
        CHECK(p.relation == RelationKind::front);
    }

    TEST_CASE("extraction examples") {
        MockOracleBackend oracle;
        CopPipeline cop(prompts(), oracle);
        const QueryParams a = cop.extract("What color is the yellow truck on my left lane?", {"R1"});
        CHECK(a.color == Color::yellow);
        CHECK(a.vtype == VehicleType::truck);
        CHECK(a.relation == RelationKind::leftlane);
        CHECK(cop.extract("How fast is the yellow truck?", {}).relation == RelationKind::surrounding);
        const QueryParams road = cop.extract("How many vehicles are on Main Street?", {"Main Street", "R1"});
        CHECK(road.relation == RelationKind::road);
        CHECK(road.road == "Main Street");

        auto nulls = scripted({{Stage::extraction, R"({"vtype": null, "color": "red", "road": null})"}});
        CopPipeline s(prompts(), nulls);
        const QueryParams n = s.extract("Is there a red vehicle?", {});
        CHECK_FALSE(n.vtype.has_value());
        CHECK(n.color == Color::red);
        CHECK(n.relation == RelationKind::surrounding);
    }

    TEST_CASE("the oracle backend reproduces every generated ground truth") {
        const auto& scenes = sim_scenes::shared();
        DatasetOptions opt;
        opt.n = 300;
        opt.seed = 5;
        const auto pairs = generate_dataset(scenes, load_templates(fixtures::data_path("templates.jsonl")), opt);
        MockOracleBackend oracle(AnswerKey::from_dataset(pairs));
        CopPipeline cop(prompts(), oracle);
        std::size_t ok = 0;
        for (const QAPair& qa : pairs) {
            const auto ls = std::find_if(scenes.begin(), scenes.end(), [&](const auto& s) { return s.scene_id == qa.scene_id; });
            REQUIRE(ls != scenes.end());
            const CoPResult r = cop.answer(qa.question, *ls, qa.ego_id);
            REQUIRE_FALSE(r.error.has_value());
            ok += r.task == qa.task && numeric_close(*r.numeric, qa.truth());
        }
        CHECK(ok == pairs.size());
    }

    TEST_CASE("distance answer composes semantic text and advice") {
        MockOracleBackend oracle;
        CopPipeline cop(prompts(), oracle);
        const auto ls = distance_scene();
        const CoPResult r = cop.answer("How far is the car in front of me?", ls, "AV001");
        REQUIRE_FALSE(r.error.has_value());
        CHECK(r.task == TaskId::distance);
        REQUIRE(r.numeric->values.size() == 1);
        CHECK(r.numeric->values[0] == doctest::Approx(50.0));
        CHECK(r.semantic.find("50") != std::string::npos);
        CHECK_FALSE(r.advice.empty());
        CHECK(r.answer == r.semantic + " " + r.advice);
        CHECK(r.timings.classification_ms >= 0.0);
        const json j = to_json(r);
        CHECK(j.at("matched_ids") == json{"car001"});
        CHECK(j.at("timings").size() == 4);
        CHECK(j.at("error").is_null());
    }

    TEST_CASE("the enhancement prompt carries full records of matched objects and the ego") {
        MockOracleBackend oracle;
        CopPipeline cop(prompts(), oracle);
        const auto ls = distance_scene();
        const auto numeric = execute(TaskId::distance, {}, ls, "AV001");
        const auto req = cop.ce_request("How far?", numeric, ls, "AV001");
        const std::string& body = req.messages.back().content;
        CHECK(body.find(R"("id":"car001")") != std::string::npos);
        CHECK(body.find(R"("id":"AV001")") != std::string::npos);
        CHECK(body.find(R"("ds":"RSU1")") != std::string::npos);
        CHECK(body.find("[50.0]") != std::string::npos);
    }

    TEST_CASE("a backend timeout at stage one names classification") {
        MockScriptedBackend backend({{Stage::classification, std::nullopt, "", BackendError::Kind::timeout}});
        CopPipeline cop(prompts(), backend);
        const auto ls = distance_scene();
        const CoPResult r = cop.answer("How far is the car in front of me?", ls, "AV001");
        REQUIRE(r.error.has_value());
        CHECK(r.error->stage == Stage::classification);
        CHECK(r.error->backend == BackendError::Kind::timeout);
        CHECK_FALSE(r.task.has_value());
        const json j = to_json(r);
        CHECK(j.at("error").at("stage") == "classification");
        CHECK(j.at("error").at("backend") == "timeout");
    }

    TEST_CASE("later stage failures are named") {
        const auto ls = distance_scene();
        auto ext = scripted({{Stage::classification, R"({"task": 8})"}, {Stage::extraction, "??"}, {Stage::extraction, "??"}});
        const CoPResult a = CopPipeline(prompts(), ext).answer("How far?", ls, "AV001");
        REQUIRE(a.error.has_value());
        CHECK(a.error->stage == Stage::extraction);
        CHECK(a.task == TaskId::distance);

        auto enh = scripted({{Stage::classification, R"({"task": 8})"},
                             {Stage::extraction, R"({"relation": "front"})"},
                             {Stage::enhancement, "fine"},
                             {Stage::enhancement, R"({"answer": "x"})"}});
        const CoPResult b = CopPipeline(prompts(), enh).answer("How far?", ls, "AV001");
        REQUIRE(b.error.has_value());
        CHECK(b.error->stage == Stage::enhancement);
        REQUIRE(b.numeric.has_value());  // graded stage survives
        CHECK(b.numeric->values == std::vector<double>{50.0});
    }

    TEST_CASE("unknown ego is rejected before any stage runs") {
        auto backend = scripted({});
        CopPipeline cop(prompts(), backend);
        CHECK_THROWS_AS(cop.answer("How far?", distance_scene(), "AV999"), NotFoundError);
    }

    TEST_CASE("the rule toggle changes only the rule sentence of the classification prompt") {
        PromptSet on = prompts();
        PromptSet off = prompts();
        off.restrictive_rule_on = false;
        MockOracleBackend oracle;
        const auto a = CopPipeline(on, oracle).tc_request("Is there a car behind me?");
        const auto b = CopPipeline(off, oracle).tc_request("Is there a car behind me?");
        CHECK(a.messages[0] == b.messages[0]);
        std::string with = a.messages[1].content;
        const auto at = with.find(" " + on.existence_rule);
        REQUIRE(at != std::string::npos);
        with.erase(at, on.existence_rule.size() + 1);
        CHECK(with == b.messages[1].content);
    }

    TEST_CASE("prompt bytes do not depend on the backend") {
        MockOracleBackend oracle;
        MockNoisyBackend noisy(AnswerKey{}, 0.5, 0.5, 3);
        const std::string q = "How many cars are on my right lane?";
        CHECK(CopPipeline(prompts(), oracle).tc_request(q).messages ==
              CopPipeline(prompts(), noisy).tc_request(q).messages);
        CHECK(CopPipeline(prompts(), oracle).pe_request(q, {"R1"}).messages ==
              CopPipeline(prompts(), noisy).pe_request(q, {"R1"}).messages);
    }

    TEST_CASE("OSP variants add their content to one base prompt") {
        const auto ls = distance_scene();
        auto body = [&](int v) { return osp_request(v, "Is there a car?", ls, "AV001", prompts()).messages[1].content; };
        const std::string o1 = body(1), o2 = body(2), o3 = body(3), o4 = body(4);
        for (const std::string& b : {o1, o2, o3, o4}) {
            CHECK(b.find(render_ls(ls)) != std::string::npos);
            CHECK(b.find("FINAL:") != std::string::npos);
            CHECK(b.find("R1 (lanes R1_0, R1_1, R1_2)") != std::string::npos);
        }
        CHECK(o1.find(prompts().osp_fields) == std::string::npos);
        CHECK(o2.find(prompts().osp_fields) != std::string::npos);
        CHECK(o3.find(prompts().osp_rules) != std::string::npos);
        CHECK(o4.find(prompts().osp_examples) != std::string::npos);
        CHECK(occurrences(o4, "Example ") >= 2);
        CHECK(o1.size() < o2.size());
        CHECK_THROWS_AS(osp_request(5, "q", ls, "AV001", prompts()), Error);
    }

    TEST_CASE("OSP on a scene holding only the ego still answers") {
        MockOracleBackend oracle;
        const auto ls = fixtures::scene_of({object("AV001", 0, 0)});
        const std::string reply = osp_answer(1, "Is there any car around me?", ls, "AV001", prompts(), oracle);
        CHECK(reply.find("FINAL: no") != std::string::npos);
    }

    TEST_CASE("noisy backend is deterministic and hits its error rate") {
        MockNoisyBackend a(AnswerKey{}, 0.3, 0.0, 9);
        MockNoisyBackend b(AnswerKey{}, 0.3, 0.0, 9);
        CopPipeline ca(prompts(), a), cb(prompts(), b);
        int wrong = 0;
        const int n = 2000;
        for (int i = 0; i < n; ++i) {
            const std::string q = "How fast is car" + std::to_string(i) + " in front of me?";
            const TaskId t = ca.classify(q);
            CHECK(t == cb.classify(q));
            wrong += t != TaskId::velocity;
        }
        CHECK(wrong / double(n) == doctest::Approx(0.3).epsilon(0.15));
        CHECK_THROWS_AS(MockNoisyBackend(AnswerKey{}, 1.5, 0.0, 1), Error);
    }

    TEST_CASE("backend factory") {
        CHECK(make_backend(json{{"kind", "mock_oracle"}})->model_id() == "mock-oracle");
        CHECK(make_backend(json{{"kind", "mock_noisy"}, {"classification_error_rate", 0.1}})->model_id() == "mock-noisy");
        auto s = make_backend(json{{"kind", "mock_scripted"},
                                   {"transcript", {{{"stage", "classification"}, {"response", R"({"task":4})"}}}}});
        CHECK(CopPipeline(prompts(), *s).classify("what color?") == TaskId::color);
        CHECK(make_backend(json{{"kind", "remote"}, {"endpoint", "http://localhost:1/v1/chat/completions"},
                                {"model", "m"}, {"concurrency", 4}})
                  ->max_concurrency() == 4);
        CHECK_THROWS_AS(make_backend(json{{"kind", "psychic"}}), Error);
        CHECK_THROWS_AS(make_backend(json{{"kind", "remote"}, {"endpoint", "localhost"}, {"model", "m"}}), Error);
    }

    TEST_CASE("remote backend speaks the chat-completion protocol") {
        FakeChatServer fake([](const httplib::Request& req, httplib::Response& res) {
            CHECK(req.get_header_value("Authorization") == "Bearer k");
            reply_with(res, "<think>speed question</think>{\"task\": 1}");
        });
        RemoteBackend backend({fake.endpoint(), "tiny-model", 5.0, 2, "k"});
        CopPipeline cop(prompts(), backend);
        CHECK(cop.classify("how fast is the bus ahead?") == TaskId::velocity);
        std::lock_guard lock(fake.mutex);
        CHECK(fake.last_body.at("model") == "tiny-model");
        CHECK(fake.last_body.at("temperature") == 0);
        REQUIRE(fake.last_body.at("messages").size() == 2);
        CHECK(fake.last_body.at("messages")[0].at("role") == "system");
        CHECK(fake.last_body.at("messages")[1].at("content") == cop.tc_request("how fast is the bus ahead?").messages[1].content);
        CHECK_FALSE(fake.last_body.contains("context"));
    }

    TEST_CASE("remote backend failures map to error kinds") {
        FakeChatServer broken([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
        RemoteBackend b500({broken.endpoint(), "m", 5.0, 1, ""});
        ChatRequest req;
        req.messages = {{"user", "hi"}};
        try {
            b500.complete(req);
            FAIL("expected failure");
        } catch (const BackendError& e) {
            CHECK(e.kind == BackendError::Kind::protocol);
        }

        FakeChatServer slow([](const httplib::Request&, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1500));
            reply_with(res, "{}");
        });
        RemoteBackend bslow({slow.endpoint(), "m", 0.3, 1, ""});
        try {
            bslow.complete(req);
            FAIL("expected timeout");
        } catch (const BackendError& e) {
            CHECK(e.kind == BackendError::Kind::timeout);
        }

        int closed_port = 0;
        {
            FakeChatServer gone([](const httplib::Request&, httplib::Response&) {});
            closed_port = gone.port;
        }
        RemoteBackend bgone({"http://127.0.0.1:" + std::to_string(closed_port) + "/v1/chat/completions", "m", 2.0, 1, ""});
        try {
            bgone.complete(req);
            FAIL("expected unreachable");
        } catch (const BackendError& e) {
            CHECK(e.kind == BackendError::Kind::unreachable);
        }
    }
}
