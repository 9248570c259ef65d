#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "vrc/config.hpp"
#include "vrc/cop.hpp"

namespace vrc {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    RunConfig run;
    std::filesystem::path sim_config;  // where `run` came from
    nlohmann::json backend = {{"kind", "mock_oracle"}};
    std::filesystem::path prompt_dir = VRC_DATA_DIR "/prompts";
    double tick_rate_hz = 5.0;  // scenes per second of simulated time
    std::size_t queue_capacity = FreshnessQueue::kDefaultCapacity;
    std::size_t ring_size = 256;     // scenes kept for pinned queries
    double speedup = 1.0;            // simulated seconds per wall-clock second
    std::optional<std::filesystem::path> answer_key;  // QA dataset for mock backends
    bool prefix_on = true;           // prepend the radius phrase to incoming questions
    bool rule_on = true;

    /// Relative paths resolve against the config file's directory. Throws on a
    /// non-positive tick rate or a missing path.
    static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ServiceConfig load(const std::filesystem::path& path);
    /// Effective configuration with secrets redacted.
    nlohmann::json to_json() const;
};

/// An HTTP reply: status code plus JSON body (or raw text for /scene).
struct ApiResponse {
    int status = 200;
    std::string body;
};

/// Simulation, scene ring and query endpoint. The HTTP layer is a thin
/// wrapper over the handle_* methods, which tests and the CLI call directly.
class Service {
public:
    explicit Service(ServiceConfig config);
    /// Uses an externally owned backend instead of the configured one.
    Service(ServiceConfig config, std::unique_ptr<LlmBackend> backend);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Steps the simulation until the next scene is constructed and publishes
    /// it; returns its id.
    std::int64_t tick();
    /// Runs tick() on a background thread paced by the scene timestamps.
    void start_simulation();
    void stop_simulation();

    std::shared_ptr<const LinguisticScene> latest() const;
    std::shared_ptr<const LinguisticScene> find(std::int64_t scene_id) const;

    ApiResponse handle_scene(std::optional<std::int64_t> scene_id = std::nullopt) const;
    ApiResponse handle_query(const std::string& body) const;
    ApiResponse handle_health() const;
    ApiResponse handle_config() const;

    /// Binds and serves on a background thread; returns the bound port
    /// (config port, or an ephemeral one when the config port is 0).
    int start_http();
    /// Blocks serving on the configured address.
    void serve_forever();
    void stop_http();

    const ServiceConfig& config() const { return config_; }
    LlmBackend& backend() const;

private:
    struct Impl;
    ServiceConfig config_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace vrc
