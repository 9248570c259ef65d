#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vrc {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Position of a point in a lane frame. `lateral` is positive toward the
/// side of increasing lane index (left of the driving direction).
struct LaneCoord {
    double s = 0.0;
    double lateral = 0.0;
};

/// A lane with a piecewise-linear centerline. Lane index 0 is the rightmost
/// lane of its road and indices grow leftward.
class Lane {
public:
    Lane(std::string road_id, int index, std::string name, std::vector<Point> centerline, double width);

    const std::string& road_id() const { return road_id_; }
    int index() const { return index_; }
    const std::string& name() const { return name_; }
    const std::vector<Point>& centerline() const { return centerline_; }
    double width() const { return width_; }
    double length() const { return cumulative_.back(); }

    /// Point on the centerline at arc length `s` (clamped to [0, length]).
    Point point_at(double s) const;
    /// World point at lane coordinate (s, lateral).
    Point world_point(double s, double lateral) const;
    /// Direction of travel at `s`, degrees clockwise from north in [0, 360).
    double heading_at(double s) const;
    /// Nearest-point projection without a distance bound.
    LaneCoord project(Point p, double* distance = nullptr) const;

private:
    std::size_t segment_at(double s) const;

    std::string road_id_;
    int index_;
    std::string name_;
    std::vector<Point> centerline_;
    double width_;
    std::vector<double> cumulative_;
};

struct Road {
    std::string id;
    std::vector<Lane> lanes;  // ordered by index, contiguous from 0
};

struct LaneSection {
    std::string lane;  // lane name
    double s_min = 0.0;
    double s_max = 0.0;
};

/// Immutable static map: roads, lanes and the lane sections each RSU observes.
class RoadNetwork {
public:
    RoadNetwork(std::vector<Road> roads, std::map<std::string, std::vector<LaneSection>> rsu_coverages);

    const std::vector<Road>& roads() const { return roads_; }
    const std::map<std::string, std::vector<LaneSection>>& rsu_coverages() const { return rsu_coverages_; }

    const Road* find_road(std::string_view id) const;
    const Lane* find_lane(std::string_view road_id, int index) const;
    const Lane* find_lane(std::string_view lane_name) const;
    std::size_t lane_count() const;

private:
    std::vector<Road> roads_;
    std::map<std::string, std::vector<LaneSection>> rsu_coverages_;
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> lane_index_;
};

RoadNetwork parse_network(std::string_view json_text);
RoadNetwork load_network(const std::filesystem::path& path);

/// Projects (x, y) onto lane `lane_index` of `road_id`. Throws NotFoundError
/// for an unknown lane and Error when the point is more than twice the lane
/// width away from the centerline.
LaneCoord project(const RoadNetwork& network, std::string_view road_id, int lane_index, double x, double y);

/// Heading in degrees clockwise from north for a direction vector.
double heading_of(double dx, double dy);

}  // namespace vrc
