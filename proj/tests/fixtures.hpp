#pragma once

#include <memory>
#include <string>

#include "vrc/object_info.hpp"
#include "vrc/road_model.hpp"
#include "vrc/scene.hpp"

namespace fixtures {

inline std::string data_path(const std::string& name) { return std::string(VRC_DATA_DIR) + "/" + name; }

inline std::shared_ptr<const vrc::RoadNetwork> cross_network() {
    static const auto net = std::make_shared<const vrc::RoadNetwork>(vrc::load_network(data_path("net_cross.json")));
    return net;
}

/// One straight northbound road "R1" with `lanes` lanes of 3.5 m, 1000 m long.
inline std::string straight_network_json(int lanes = 3) {
    std::string out = R"({"roads":[{"id":"R1","lanes":[)";
    for (int i = 0; i < lanes; ++i) {
        const double x = -3.5 * i;
        out += (i ? "," : "") + std::string(R"({"index":)") + std::to_string(i) + R"(,"name":"R1_)" +
               std::to_string(i) + R"(","width":3.5,"centerline":[[)" + std::to_string(x) + ",0],[" +
               std::to_string(x) + ",1000]]}";
    }
    out += R"(]}],"rsu_coverages":{"RSU1":[{"lane":"R1_0","s_range":[0,100]}]}})";
    return out;
}

inline vrc::ObjectInfo object(std::string id, double x, double y, double h = 0.0, std::string rd = "R1", int lx = 0) {
    vrc::ObjectInfo o;
    o.id = std::move(id);
    o.x = x;
    o.y = y;
    o.h = h;
    o.rd = std::move(rd);
    o.lx = lx;
    o.ln = o.rd + "_" + std::to_string(lx);
    o.le = 4.5;
    o.wi = 1.8;
    o.he = 1.5;
    o.ds = "RSU1";
    return o;
}

inline vrc::LinguisticScene scene_of(std::vector<vrc::ObjectInfo> objects, std::int64_t scene_id = 0) {
    vrc::LinguisticScene ls;
    ls.scene_id = scene_id;
    std::sort(objects.begin(), objects.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    ls.objects = std::move(objects);
    ls.roads = {{"R1", {"R1_0", "R1_1", "R1_2"}}, {"R2", {"R2_0", "R2_1"}}};
    return ls;
}

}  // namespace fixtures
