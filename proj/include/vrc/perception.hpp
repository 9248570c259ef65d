#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vrc/object_info.hpp"
#include "vrc/road_model.hpp"
#include "vrc/traffic_sim.hpp"

namespace vrc {

enum class SensorKind { av, rsu };

struct SensorSpec {
    SensorKind kind = SensorKind::av;
    std::string id;
    double range = 0.0;                 // AV detection radius, meters
    std::vector<LaneSection> coverage;  // RSU lane sections

    static SensorSpec av(std::string id, double range);
    static SensorSpec rsu(std::string id, std::vector<LaneSection> coverage);
};

/// Converts a ground-truth agent into an object record stamped with the
/// snapshot time and the detecting sensor.
ObjectInfo to_object_info(const VehicleAgent& agent, double ts, std::string_view sensor_id);

/// Onboard sensing: every object within `spec.range` (inclusive) of the ego,
/// which includes the ego's own record.
std::vector<ObjectInfo> perceive_av(const Snapshot& snapshot, std::string_view ego_id, const SensorSpec& spec);

/// Roadside sensing: every object whose (lane, s) falls in a covered lane
/// section (closed interval).
std::vector<ObjectInfo> perceive_rsu(const Snapshot& snapshot, const SensorSpec& spec, const RoadNetwork& network);

/// One AV sensor per AV in the snapshot plus one RSU sensor per coverage entry.
std::vector<SensorSpec> default_sensor_layout(const Snapshot& snapshot, const RoadNetwork& network, double av_range);

}  // namespace vrc
