#include "vrc/config.hpp"

#include <fstream>

#include <fmt/format.h>

namespace vrc {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw NotFoundError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(fmt::format("'{}': {}", path.string(), e.what()));
    }
}

std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    c.network = resolve_path(base_dir, j.at("network").get<std::string>());
    if (!std::filesystem::exists(c.network)) {
        throw NotFoundError(fmt::format("network file '{}' not found", c.network.string()));
    }
    c.sim = sim_config_from_json(j.value("sim", json::object()));
    const json p = j.value("pipeline", json::object());
    c.pipeline.av_range = p.value("av_range", c.pipeline.av_range);
    c.pipeline.queue_capacity = p.value("queue_capacity", c.pipeline.queue_capacity);
    c.pipeline.scene_rate_hz = p.value("scene_rate_hz", c.pipeline.scene_rate_hz);
    c.pipeline.bus_latency_ms = p.value("bus_latency_ms", c.pipeline.bus_latency_ms);
    if (!(c.pipeline.av_range > 0.0) || !(c.pipeline.scene_rate_hz > 0.0) || c.pipeline.queue_capacity == 0 ||
        c.pipeline.bus_latency_ms < 0.0) {
        throw Error("pipeline config: av_range, scene_rate_hz and queue_capacity must be positive");
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    return from_json(read_json_file(path), path.parent_path());
}

json RunConfig::to_json() const {
    return {{"network", network.string()},
            {"sim", vrc::to_json(sim)},
            {"pipeline",
             {{"av_range", pipeline.av_range},
              {"queue_capacity", pipeline.queue_capacity},
              {"scene_rate_hz", pipeline.scene_rate_hz},
              {"bus_latency_ms", pipeline.bus_latency_ms}}}};
}

std::unique_ptr<ScenePipeline> RunConfig::make_pipeline() const {
    return std::make_unique<ScenePipeline>(std::make_shared<const RoadNetwork>(load_network(network)), sim, pipeline);
}

}  // namespace vrc
