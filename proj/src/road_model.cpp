#include "vrc/road_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vrc/object_info.hpp"

namespace vrc {

using nlohmann::json;

double heading_of(double dx, double dy) {
    double deg = std::atan2(dx, dy) * 180.0 / std::numbers::pi;
    if (deg < 0.0) {
        deg += 360.0;
    }
    return deg >= 360.0 ? 0.0 : deg;
}

Lane::Lane(std::string road_id, int index, std::string name, std::vector<Point> centerline, double width)
    : road_id_(std::move(road_id)),
      index_(index),
      name_(std::move(name)),
      centerline_(std::move(centerline)),
      width_(width) {
    if (centerline_.size() < 2) {
        throw Error(fmt::format("lane '{}': centerline needs at least 2 points", name_));
    }
    if (!(width_ > 0.0)) {
        throw Error(fmt::format("lane '{}': width must be positive", name_));
    }
    if (index_ < 0) {
        throw Error(fmt::format("lane '{}': negative index", name_));
    }
    cumulative_.reserve(centerline_.size());
    cumulative_.push_back(0.0);
    for (std::size_t i = 1; i < centerline_.size(); ++i) {
        const double seg = std::hypot(centerline_[i].x - centerline_[i - 1].x, centerline_[i].y - centerline_[i - 1].y);
        if (!(seg > 0.0)) {
            throw Error(fmt::format("lane '{}': zero-length centerline segment {}", name_, i - 1));
        }
        cumulative_.push_back(cumulative_.back() + seg);
    }
}

std::size_t Lane::segment_at(double s) const {
    // First segment whose end reaches s, so a vertex belongs to the segment ending there.
    auto it = std::lower_bound(cumulative_.begin() + 1, cumulative_.end(), s);
    if (it == cumulative_.end()) {
        return cumulative_.size() - 2;
    }
    return static_cast<std::size_t>(it - cumulative_.begin()) - 1;
}

Point Lane::point_at(double s) const { return world_point(s, 0.0); }

Point Lane::world_point(double s, double lateral) const {
    s = std::clamp(s, 0.0, length());
    const std::size_t i = segment_at(s);
    const Point& a = centerline_[i];
    const Point& b = centerline_[i + 1];
    const double seg = cumulative_[i + 1] - cumulative_[i];
    const double ux = (b.x - a.x) / seg;
    const double uy = (b.y - a.y) / seg;
    const double t = s - cumulative_[i];
    return {a.x + ux * t - uy * lateral, a.y + uy * t + ux * lateral};
}

double Lane::heading_at(double s) const {
    const std::size_t i = segment_at(std::clamp(s, 0.0, length()));
    return heading_of(centerline_[i + 1].x - centerline_[i].x, centerline_[i + 1].y - centerline_[i].y);
}

LaneCoord Lane::project(Point p, double* distance) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    LaneCoord best;
    for (std::size_t i = 0; i + 1 < centerline_.size(); ++i) {
        const Point& a = centerline_[i];
        const Point& b = centerline_[i + 1];
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        const double seg2 = dx * dx + dy * dy;
        const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / seg2, 0.0, 1.0);
        const double fx = a.x + t * dx;
        const double fy = a.y + t * dy;
        const double d2 = (p.x - fx) * (p.x - fx) + (p.y - fy) * (p.y - fy);
        if (d2 < best_d2) {
            best_d2 = d2;
            const double cross = dx * (p.y - fy) - dy * (p.x - fx);
            const double dist = std::sqrt(d2);
            best.s = cumulative_[i] + t * std::sqrt(seg2);
            best.lateral = cross > 0.0 ? dist : (cross < 0.0 ? -dist : 0.0);
        }
    }
    if (distance != nullptr) {
        *distance = std::sqrt(best_d2);
    }
    return best;
}

RoadNetwork::RoadNetwork(std::vector<Road> roads, std::map<std::string, std::vector<LaneSection>> rsu_coverages)
    : roads_(std::move(roads)), rsu_coverages_(std::move(rsu_coverages)) {
    std::set<std::string> road_ids;
    for (std::size_t r = 0; r < roads_.size(); ++r) {
        Road& road = roads_[r];
        if (!road_ids.insert(road.id).second) {
            throw Error(fmt::format("duplicate road id '{}'", road.id));
        }
        if (road.lanes.empty()) {
            throw Error(fmt::format("road '{}' has no lanes", road.id));
        }
        std::sort(road.lanes.begin(), road.lanes.end(),
                  [](const Lane& a, const Lane& b) { return a.index() < b.index(); });
        for (std::size_t l = 0; l < road.lanes.size(); ++l) {
            const Lane& lane = road.lanes[l];
            if (lane.index() != static_cast<int>(l)) {
                throw Error(fmt::format("road '{}': non-contiguous lane indices", road.id));
            }
            if (lane.road_id() != road.id) {
                throw Error(fmt::format("lane '{}' does not belong to road '{}'", lane.name(), road.id));
            }
            if (!lane_index_.emplace(lane.name(), std::make_pair(r, l)).second) {
                throw Error(fmt::format("duplicate lane name '{}'", lane.name()));
            }
        }
    }
    for (const auto& [rsu, sections] : rsu_coverages_) {
        for (const LaneSection& sec : sections) {
            const Lane* lane = find_lane(sec.lane);
            if (lane == nullptr) {
                throw Error(fmt::format("rsu '{}': unknown lane '{}'", rsu, sec.lane));
            }
            if (!(0.0 <= sec.s_min && sec.s_min < sec.s_max && sec.s_max <= lane->length())) {
                throw Error(fmt::format("rsu '{}': invalid s_range [{}, {}] on lane '{}'", rsu, sec.s_min,
                                        sec.s_max, sec.lane));
            }
        }
    }
}

const Road* RoadNetwork::find_road(std::string_view id) const {
    for (const Road& r : roads_) {
        if (r.id == id) {
            return &r;
        }
    }
    return nullptr;
}

const Lane* RoadNetwork::find_lane(std::string_view road_id, int index) const {
    const Road* road = find_road(road_id);
    if (road == nullptr || index < 0 || index >= static_cast<int>(road->lanes.size())) {
        return nullptr;
    }
    return &road->lanes[static_cast<std::size_t>(index)];
}

const Lane* RoadNetwork::find_lane(std::string_view lane_name) const {
    auto it = lane_index_.find(std::string(lane_name));
    if (it == lane_index_.end()) {
        return nullptr;
    }
    return &roads_[it->second.first].lanes[it->second.second];
}

std::size_t RoadNetwork::lane_count() const { return lane_index_.size(); }

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        throw Error(fmt::format("{}: missing field '{}'", where, key));
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(fmt::format("{}: field '{}' has the wrong type", where, key));
    }
}

}  // namespace

RoadNetwork parse_network(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(fmt::format("network parse error: {}", e.what()));
    }
    if (!doc.is_object() || !doc.contains("roads") || !doc["roads"].is_array()) {
        throw Error("network: missing field 'roads'");
    }
    std::vector<Road> roads;
    for (std::size_t r = 0; r < doc["roads"].size(); ++r) {
        const json& jr = doc["roads"][r];
        const std::string where = fmt::format("roads[{}]", r);
        Road road{field<std::string>(jr, "id", where), {}};
        const auto lanes = field<json>(jr, "lanes", where);
        if (!lanes.is_array()) {
            throw Error(fmt::format("{}: field 'lanes' has the wrong type", where));
        }
        for (std::size_t l = 0; l < lanes.size(); ++l) {
            const json& jl = lanes[l];
            const std::string lwhere = fmt::format("{}.lanes[{}]", where, l);
            std::vector<Point> pts;
            for (const auto& p : field<std::vector<std::array<double, 2>>>(jl, "centerline", lwhere)) {
                pts.push_back({p[0], p[1]});
            }
            road.lanes.emplace_back(road.id, field<int>(jl, "index", lwhere), field<std::string>(jl, "name", lwhere),
                                    std::move(pts), field<double>(jl, "width", lwhere));
        }
        roads.push_back(std::move(road));
    }
    std::map<std::string, std::vector<LaneSection>> coverages;
    if (doc.contains("rsu_coverages")) {
        for (const auto& [rsu, sections] : doc["rsu_coverages"].items()) {
            auto& out = coverages[rsu];
            for (std::size_t i = 0; i < sections.size(); ++i) {
                const std::string where = fmt::format("rsu_coverages.{}[{}]", rsu, i);
                const auto range = field<std::array<double, 2>>(sections[i], "s_range", where);
                out.push_back({field<std::string>(sections[i], "lane", where), range[0], range[1]});
            }
        }
    }
    return RoadNetwork(std::move(roads), std::move(coverages));
}

RoadNetwork load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(fmt::format("cannot open network file '{}'", path.string()));
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_network(buf.str());
}

LaneCoord project(const RoadNetwork& network, std::string_view road_id, int lane_index, double x, double y) {
    const Lane* lane = network.find_lane(road_id, lane_index);
    if (lane == nullptr) {
        throw NotFoundError(fmt::format("unknown lane {} on road '{}'", lane_index, road_id));
    }
    double dist = 0.0;
    const LaneCoord c = lane->project({x, y}, &dist);
    if (dist > 2.0 * lane->width()) {
        throw Error(fmt::format("point ({}, {}) too far from centerline of lane '{}'", x, y, lane->name()));
    }
    return c;
}

}  // namespace vrc
