#include "vrc/service.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

namespace vrc {

using nlohmann::json;

namespace {

json error_body(const std::string& message) {
    return {{"error", {{"message", message}, {"stage", nullptr}, {"backend", nullptr}}}};
}

ApiResponse error_response(int status, const std::string& message) { return {status, error_body(message).dump()}; }

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    ServiceConfig c;
    if (j.contains("listen")) {
        const std::string listen = j.at("listen").get<std::string>();
        const auto colon = listen.rfind(':');
        if (colon == std::string::npos) throw Error(fmt::format("listen '{}' must be host:port", listen));
        c.host = listen.substr(0, colon);
        c.port = std::stoi(listen.substr(colon + 1));
    }
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.sim_config = resolve_path(base_dir, j.at("sim_config").get<std::string>());
    c.run = RunConfig::load(c.sim_config);
    if (j.contains("backend_config")) {
        const auto path = resolve_path(base_dir, j.at("backend_config").get<std::string>());
        c.backend = read_json_file(path);
        if (c.backend.contains("transcript_file")) {
            c.backend["transcript_file"] =
                resolve_path(path.parent_path(), c.backend["transcript_file"].get<std::string>()).string();
        }
    } else if (j.contains("backend")) {
        c.backend = j.at("backend");
        if (c.backend.contains("transcript_file")) {
            c.backend["transcript_file"] = resolve_path(base_dir, c.backend["transcript_file"].get<std::string>()).string();
        }
    }
    if (j.contains("prompt_dir")) c.prompt_dir = resolve_path(base_dir, j.at("prompt_dir").get<std::string>());
    c.tick_rate_hz = j.value("tick_rate_hz", c.run.pipeline.scene_rate_hz);
    c.queue_capacity = j.value("queue_capacity", c.run.pipeline.queue_capacity);
    c.ring_size = j.value("ring_size", c.ring_size);
    c.speedup = j.value("speedup", c.speedup);
    if (j.contains("answer_key") && !j.at("answer_key").is_null()) {
        c.answer_key = resolve_path(base_dir, j.at("answer_key").get<std::string>());
    }
    c.prefix_on = j.value("prefix_on", c.prefix_on);
    c.rule_on = j.value("rule_on", c.rule_on);

    if (!(c.tick_rate_hz > 0.0)) throw Error("service config: tick_rate_hz must be positive");
    if (c.queue_capacity == 0 || c.ring_size == 0) throw Error("service config: queue_capacity and ring_size must be positive");
    if (!(c.speedup > 0.0)) throw Error("service config: speedup must be positive");
    if (c.port < 0 || c.port > 65535) throw Error("service config: port out of range");
    if (!std::filesystem::is_directory(c.prompt_dir)) {
        throw NotFoundError(fmt::format("prompt directory '{}' not found", c.prompt_dir.string()));
    }
    if (c.answer_key && !std::filesystem::exists(*c.answer_key)) {
        throw NotFoundError(fmt::format("answer key '{}' not found", c.answer_key->string()));
    }
    c.run.pipeline.scene_rate_hz = c.tick_rate_hz;
    c.run.pipeline.queue_capacity = c.queue_capacity;
    return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    return from_json(read_json_file(path), path.parent_path());
}

json ServiceConfig::to_json() const {
    json backend_json = backend;
    if (backend_json.contains("api_key")) backend_json["api_key"] = "<redacted>";
    return {{"listen", fmt::format("{}:{}", host, port)},
            {"sim_config", sim_config.string()},
            {"run", run.to_json()},
            {"backend", backend_json},
            {"prompt_dir", prompt_dir.string()},
            {"tick_rate_hz", tick_rate_hz},
            {"queue_capacity", queue_capacity},
            {"ring_size", ring_size},
            {"speedup", speedup},
            {"answer_key", answer_key ? json(answer_key->string()) : json(nullptr)},
            {"prefix_on", prefix_on},
            {"rule_on", rule_on}};
}

struct Service::Impl {
    std::unique_ptr<ScenePipeline> pipeline;
    std::mutex sim_mutex;

    mutable std::mutex ring_mutex;
    std::condition_variable ring_cv;
    std::deque<std::shared_ptr<const LinguisticScene>> ring;
    std::int64_t published = -1;  // id of the latest scene
    bool closing = false;

    std::unique_ptr<LlmBackend> backend;
    std::unique_ptr<CopPipeline> cop;

    std::thread sim_thread;
    std::mutex stop_mutex;
    std::condition_variable stop_cv;
    bool sim_stop = false;
    std::atomic<bool> sim_running{false};

    httplib::Server server;
    std::thread http_thread;
};

Service::Service(ServiceConfig config) : Service(config, nullptr) {}

Service::Service(ServiceConfig config, std::unique_ptr<LlmBackend> backend)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
    PromptSet prompts = PromptSet::load(config_.prompt_dir.string());
    prompts.restrictive_rule_on = config_.rule_on;
    if (backend) {
        impl_->backend = std::move(backend);
    } else {
        AnswerKey key;
        if (config_.answer_key) key = AnswerKey::from_dataset(load_dataset(*config_.answer_key));
        impl_->backend = make_backend(config_.backend, key);
    }
    impl_->cop = std::make_unique<CopPipeline>(std::move(prompts), *impl_->backend);
    config_.run.pipeline.scene_rate_hz = config_.tick_rate_hz;
    config_.run.pipeline.queue_capacity = config_.queue_capacity;
    impl_->pipeline = config_.run.make_pipeline();
}

Service::~Service() {
    stop_http();
    stop_simulation();
}

LlmBackend& Service::backend() const { return *impl_->backend; }

std::int64_t Service::tick() {
    std::optional<LinguisticScene> scene;
    {
        std::lock_guard lock(impl_->sim_mutex);
        while (!(scene = impl_->pipeline->step())) {
        }
    }
    auto shared = std::make_shared<const LinguisticScene>(std::move(*scene));
    const std::int64_t id = shared->scene_id;
    {
        std::lock_guard lock(impl_->ring_mutex);
        impl_->ring.push_back(std::move(shared));
        while (impl_->ring.size() > config_.ring_size) impl_->ring.pop_front();
        impl_->published = id;
    }
    impl_->ring_cv.notify_all();
    return id;
}

void Service::start_simulation() {
    if (impl_->sim_running.exchange(true)) return;
    {
        std::lock_guard lock(impl_->stop_mutex);
        impl_->sim_stop = false;
    }
    impl_->sim_thread = std::thread([this] {
        using clock = std::chrono::steady_clock;
        const auto wall0 = clock::now();
        const auto first = latest();
        const double sim0 = first ? first->ts : 0.0;
        while (true) {
            tick();
            const double ts = latest()->ts;
            const auto due = wall0 + std::chrono::duration_cast<clock::duration>(
                                         std::chrono::duration<double>((ts - sim0) / config_.speedup));
            std::unique_lock lock(impl_->stop_mutex);
            if (impl_->stop_cv.wait_until(lock, due, [this] { return impl_->sim_stop; })) return;
        }
    });
}

void Service::stop_simulation() {
    if (!impl_->sim_running.exchange(false)) return;
    {
        std::lock_guard lock(impl_->stop_mutex);
        impl_->sim_stop = true;
    }
    impl_->stop_cv.notify_all();
    impl_->sim_thread.join();
}

std::shared_ptr<const LinguisticScene> Service::latest() const {
    std::lock_guard lock(impl_->ring_mutex);
    return impl_->ring.empty() ? nullptr : impl_->ring.back();
}

std::shared_ptr<const LinguisticScene> Service::find(std::int64_t scene_id) const {
    std::lock_guard lock(impl_->ring_mutex);
    for (const auto& s : impl_->ring) {
        if (s->scene_id == scene_id) return s;
    }
    return nullptr;
}

ApiResponse Service::handle_scene(std::optional<std::int64_t> scene_id) const {
    if (scene_id) {
        const auto s = find(*scene_id);
        if (!s) return error_response(404, fmt::format("scene {} is not in the ring buffer", *scene_id));
        return {200, render_ls(*s)};
    }
    const auto s = latest();
    if (!s) return error_response(503, "no scene has been constructed yet");
    return {200, render_ls(*s)};
}

ApiResponse Service::handle_query(const std::string& body) const {
    const json req = json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_response(400, "request body must be a JSON object");
    if (!req.contains("question") || !req["question"].is_string()) return error_response(400, "question is required");
    std::string question = req["question"].get<std::string>();
    if (question.find_first_not_of(" \t\r\n") == std::string::npos) return error_response(400, "question is empty");
    if (req.contains("ego_id") && !req["ego_id"].is_null() && !req["ego_id"].is_string()) {
        return error_response(400, "ego_id must be a string");
    }
    if (req.contains("scene_id") && !req["scene_id"].is_null() && !req["scene_id"].is_number_integer()) {
        return error_response(400, "scene_id must be an integer");
    }

    std::shared_ptr<const LinguisticScene> scene;
    if (req.contains("scene_id") && !req["scene_id"].is_null()) {
        const auto id = req["scene_id"].get<std::int64_t>();
        scene = find(id);
        if (!scene) return error_response(404, fmt::format("scene {} is not in the ring buffer", id));
    } else {
        scene = latest();
        if (!scene) return error_response(503, "no scene has been constructed yet");
    }
    std::string ego;
    if (req.contains("ego_id") && !req["ego_id"].is_null()) {
        ego = req["ego_id"].get<std::string>();
    } else {
        const auto avs = scene->av_ids();
        if (avs.empty()) return error_response(404, fmt::format("scene {} holds no automated vehicle", scene->scene_id));
        ego = avs.front();
    }
    if (scene->find(ego) == nullptr) {
        return error_response(404, fmt::format("ego '{}' is not in scene {}", ego, scene->scene_id));
    }
    if (config_.prefix_on && !question.starts_with(kRadiusPrefix)) {
        question = std::string(kRadiusPrefix) + question;
    }
    try {
        const CoPResult r = impl_->cop->answer(question, *scene, ego);
        return {r.error ? 502 : 200, to_json(r).dump()};
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

ApiResponse Service::handle_health() const {
    const auto s = latest();
    std::size_t scenes = 0;
    {
        std::lock_guard lock(impl_->ring_mutex);
        scenes = impl_->ring.size();
    }
    return {200, json{{"status", "ok"},
                      {"scenes", scenes},
                      {"latest_scene_id", s ? json(s->scene_id) : json(nullptr)},
                      {"sim_time", s ? json(s->ts) : json(nullptr)},
                      {"simulation_running", impl_->sim_running.load()},
                      {"model", impl_->backend->model_id()}}
                     .dump()};
}

ApiResponse Service::handle_config() const { return {200, config_.to_json().dump()}; }

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
}

}  // namespace

int Service::start_http() {
    httplib::Server& srv = impl_->server;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    srv.Get("/scene", [this](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::int64_t> id;
        if (req.has_param("scene_id")) {
            try {
                id = std::stoll(req.get_param_value("scene_id"));
            } catch (const std::exception&) {
                return send(res, error_response(400, "scene_id must be an integer"));
            }
        }
        send(res, handle_scene(id));
    });
    srv.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, handle_health()); });
    srv.Get("/config", [this](const httplib::Request&, httplib::Response& res) { send(res, handle_config()); });
    srv.Post("/query", [this](const httplib::Request& req, httplib::Response& res) { send(res, handle_query(req.body)); });
    srv.Options("/query", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    srv.Get("/stream", [this](const httplib::Request& req, httplib::Response& res) {
        long long max_events = 0;
        if (req.has_param("max_events")) max_events = std::max(0LL, std::atoll(req.get_param_value("max_events").c_str()));
        res.set_header("Cache-Control", "no-cache");
        struct State {
            std::int64_t last = -1;
            long long sent = 0;
        };
        auto state = std::make_shared<State>();
        Impl* impl = impl_.get();
        res.set_chunked_content_provider("text/event-stream", [impl, state, max_events](std::size_t, httplib::DataSink& sink) {
            std::shared_ptr<const LinguisticScene> scene;
            {
                std::unique_lock lock(impl->ring_mutex);
                impl->ring_cv.wait_for(lock, std::chrono::milliseconds(500),
                                       [&] { return impl->closing || impl->published > state->last; });
                if (impl->closing) return false;
                if (impl->published <= state->last || impl->ring.empty()) return sink.is_writable();
                scene = impl->ring.back();  // latest only; stale scenes are skipped
            }
            state->last = scene->scene_id;
            const std::string event = fmt::format("id: {}\nevent: scene\ndata: {}\n\n", scene->scene_id, render_ls(*scene));
            if (!sink.write(event.data(), event.size())) return false;
            if (max_events > 0 && ++state->sent >= max_events) sink.done();
            return true;
        });
    });

    int port = config_.port;
    if (port == 0) {
        port = srv.bind_to_any_port(config_.host);
    } else if (!srv.bind_to_port(config_.host, port)) {
        port = -1;
    }
    if (port <= 0) throw Error(fmt::format("cannot listen on {}:{}", config_.host, config_.port));
    impl_->http_thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return port;
}

void Service::serve_forever() {
    start_http();
    impl_->http_thread.join();
}

void Service::stop_http() {
    {
        std::lock_guard lock(impl_->ring_mutex);
        impl_->closing = true;
    }
    impl_->ring_cv.notify_all();
    if (impl_->http_thread.joinable()) {
        impl_->server.stop();
        impl_->http_thread.join();
    }
}

}  // namespace vrc
