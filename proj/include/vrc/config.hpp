#pragma once

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "vrc/bus.hpp"
#include "vrc/road_model.hpp"
#include "vrc/traffic_sim.hpp"

namespace vrc {

/// Everything needed to start a scene pipeline. Relative paths in the file
/// resolve against the file's directory.
struct RunConfig {
    std::filesystem::path network;
    SimConfig sim;
    PipelineConfig pipeline;

    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    std::unique_ptr<ScenePipeline> make_pipeline() const;
};

nlohmann::json read_json_file(const std::filesystem::path& path);

/// `p` resolved against `base_dir` unless absolute.
std::filesystem::path resolve_path(const std::filesystem::path& base_dir, const std::string& p);

}  // namespace vrc
