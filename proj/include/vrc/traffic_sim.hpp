#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrc/object_info.hpp"
#include "vrc/road_model.hpp"

namespace vrc {

/// One lane of a vehicle's route, driven from `s_start` until the next
/// segment begins (or to the end of the lane for the last segment).
struct RouteSegment {
    std::string road;
    int lane = 0;
    double s_start = 0.0;
};

struct VehicleAgent {
    std::string id;
    VehicleType vtype = VehicleType::car;
    Color color = Color::white;
    double length = 4.5;
    double width = 1.8;
    double height = 1.5;
    std::vector<RouteSegment> route;
    std::size_t route_pos = 0;
    double speed = 0.0;
    double accel = 0.0;
    double heading = 0.0;  // degrees clockwise from north (+y)
    Signal signal = Signal::none;
    double x = 0.0;
    double y = 0.0;
    std::string road;
    int lane_index = 0;
    std::string lane_name;
    double s = 0.0;  // front bumper position along the lane
    double lateral = 0.0;
    double desired_speed = 13.9;
    double signal_elapsed = 0.0;  // seconds the current turn signal has been on
    bool active = true;

    bool is_av() const { return is_av_id(id); }
};

/// Ground-truth state of every active agent at one instant.
struct Snapshot {
    double t = 0.0;
    std::uint64_t step = 0;
    std::vector<VehicleAgent> agents;

    const VehicleAgent* find(std::string_view id) const;
};

struct SimConfig {
    std::uint64_t seed = 42;
    double dt = 0.2;
    int vehicle_count = 60;
    int av_count = 10;
    double duration = 600.0;
    // Relative weights, indexed like kVehicleTypes / kColors.
    std::vector<double> type_weights = {0.6, 0.2, 0.1, 0.1};
    std::vector<double> color_weights = {1, 1, 1, 1, 1, 1, 1};
    double min_desired_speed = 10.0;
    double max_desired_speed = 16.7;
    double lane_change_probability = 0.5;

    void validate() const;
};

SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& c);

/// Car-following constants.
struct Kinematics {
    static constexpr double max_accel = 2.0;       // m/s^2
    static constexpr double max_decel = 4.5;       // m/s^2, hard clamp
    static constexpr double comfort_decel = 2.0;   // m/s^2, used to restore headway
    static constexpr double headway = 2.0;         // s
    static constexpr double min_gap = 2.5;         // m, bumper to bumper at standstill
    static constexpr double signal_lead_time = 2.0;  // s of signalling before a lane change
};

/// Largest speed from which the follower can still stop behind a leader that
/// brakes at max_decel, given the current bumper gap.
double safe_speed(double gap, double leader_speed, double dt);

/// Deterministic synthetic traffic on a road network. Single owner; copy a
/// Snapshot to share state.
class World {
public:
    World(std::shared_ptr<const RoadNetwork> network, SimConfig config);
    /// Starts from explicit agents (positions are re-derived from route/s).
    World(std::shared_ptr<const RoadNetwork> network, SimConfig config, std::vector<VehicleAgent> agents);

    void step();
    void step(double dt);

    double time() const { return time_; }
    std::uint64_t step_index() const { return step_; }
    const std::vector<VehicleAgent>& agents() const { return agents_; }
    const RoadNetwork& network() const { return *network_; }
    const SimConfig& config() const { return config_; }

private:
    void place(VehicleAgent& a) const;
    std::vector<RouteSegment> make_route(const Road& road, int start_lane);
    void assign_route(VehicleAgent& a);
    void try_lane_changes(double dt);
    void try_respawns();
    bool change_is_safe(const VehicleAgent& a, int target_lane, double dt) const;

    std::shared_ptr<const RoadNetwork> network_;
    SimConfig config_;
    std::vector<VehicleAgent> agents_;
    std::mt19937_64 rng_;
    double time_ = 0.0;
    std::uint64_t step_ = 0;
};

Snapshot snapshot(const World& world, double t);

/// Canonical JSON for a snapshot (used by the determinism checks).
std::string serialize(const Snapshot& snap);

/// Uniform helpers with a fixed algorithm so streams are identical across
/// standard library implementations.
double uniform01(std::mt19937_64& rng);
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);
std::size_t weighted_index(std::mt19937_64& rng, const std::vector<double>& weights);

}  // namespace vrc
