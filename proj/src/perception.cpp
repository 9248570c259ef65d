#include "vrc/perception.hpp"

#include <cmath>

#include <fmt/format.h>

namespace vrc {

SensorSpec SensorSpec::av(std::string id, double range) {
    if (!(range > 0.0)) {
        throw Error(fmt::format("sensor '{}': AV range must be positive", id));
    }
    return SensorSpec{SensorKind::av, std::move(id), range, {}};
}

SensorSpec SensorSpec::rsu(std::string id, std::vector<LaneSection> coverage) {
    if (coverage.empty()) {
        throw Error(fmt::format("sensor '{}': RSU coverage is empty", id));
    }
    return SensorSpec{SensorKind::rsu, std::move(id), 0.0, std::move(coverage)};
}

ObjectInfo to_object_info(const VehicleAgent& agent, double ts, std::string_view sensor_id) {
    ObjectInfo o;
    o.id = agent.id;
    o.ts = ts;
    o.x = agent.x;
    o.y = agent.y;
    o.s = agent.s;
    o.lat = agent.lateral;
    o.v = agent.speed;
    o.a = agent.accel;
    o.h = agent.heading;
    o.le = agent.length;
    o.wi = agent.width;
    o.he = agent.height;
    o.ty = agent.vtype;
    o.co = agent.color;
    o.ln = agent.lane_name;
    o.lx = agent.lane_index;
    o.rd = agent.road;
    o.sg = agent.signal;
    o.ds = std::string(sensor_id);
    return o;
}

std::vector<ObjectInfo> perceive_av(const Snapshot& snapshot, std::string_view ego_id, const SensorSpec& spec) {
    if (spec.kind != SensorKind::av) {
        throw Error(fmt::format("sensor '{}' is not an AV sensor", spec.id));
    }
    const VehicleAgent* ego = snapshot.find(ego_id);
    if (ego == nullptr) {
        throw NotFoundError(fmt::format("ego '{}' missing from snapshot", ego_id));
    }
    std::vector<ObjectInfo> out;
    for (const VehicleAgent& a : snapshot.agents) {
        if (std::hypot(a.x - ego->x, a.y - ego->y) <= spec.range) {
            out.push_back(to_object_info(a, snapshot.t, spec.id));
        }
    }
    return out;
}

std::vector<ObjectInfo> perceive_rsu(const Snapshot& snapshot, const SensorSpec& spec, const RoadNetwork& network) {
    if (spec.kind != SensorKind::rsu) {
        throw Error(fmt::format("sensor '{}' is not an RSU sensor", spec.id));
    }
    std::vector<ObjectInfo> out;
    for (const VehicleAgent& a : snapshot.agents) {
        std::string_view lane_name = a.lane_name;
        if (lane_name.empty()) {
            const Lane* lane = network.find_lane(a.road, a.lane_index);
            if (lane == nullptr) {
                continue;
            }
            lane_name = lane->name();
        }
        for (const LaneSection& sec : spec.coverage) {
            if (sec.lane == lane_name && a.s >= sec.s_min && a.s <= sec.s_max) {
                out.push_back(to_object_info(a, snapshot.t, spec.id));
                break;
            }
        }
    }
    return out;
}

std::vector<SensorSpec> default_sensor_layout(const Snapshot& snapshot, const RoadNetwork& network, double av_range) {
    std::vector<SensorSpec> sensors;
    for (const VehicleAgent& a : snapshot.agents) {
        if (a.is_av()) {
            sensors.push_back(SensorSpec::av(a.id, av_range));
        }
    }
    for (const auto& [rsu, sections] : network.rsu_coverages()) {
        sensors.push_back(SensorSpec::rsu(rsu, sections));
    }
    return sensors;
}

}  // namespace vrc
