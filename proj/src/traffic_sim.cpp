#include "vrc/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace vrc {

using nlohmann::json;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

std::size_t weighted_index(std::mt19937_64& rng, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    double r = uniform01(rng) * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (r < weights[i]) {
            return i;
        }
        r -= weights[i];
    }
    return weights.size() - 1;
}

const VehicleAgent* Snapshot::find(std::string_view id) const {
    for (const VehicleAgent& a : agents) {
        if (a.id == id) {
            return &a;
        }
    }
    return nullptr;
}

void SimConfig::validate() const {
    if (!(dt > 0.0)) {
        throw Error("sim config: dt must be positive");
    }
    if (vehicle_count < 0 || av_count < 0 || av_count > vehicle_count) {
        throw Error("sim config: need 0 <= av_count <= vehicle_count");
    }
    if (type_weights.size() != kVehicleTypes.size() || color_weights.size() != kColors.size()) {
        throw Error("sim config: distribution sizes do not match the type/color palettes");
    }
    if (!(min_desired_speed > 0.0 && min_desired_speed <= max_desired_speed)) {
        throw Error("sim config: invalid desired speed range");
    }
}

namespace {

std::vector<double> weights_from_json(const json& j, const auto& palette) {
    std::vector<double> w(palette.size(), 0.0);
    for (const auto& [name, value] : j.items()) {
        bool found = false;
        for (std::size_t i = 0; i < palette.size(); ++i) {
            if (to_string(palette[i]) == name) {
                w[i] = value.template get<double>();
                found = true;
            }
        }
        if (!found) {
            throw Error(fmt::format("sim config: unknown palette entry '{}'", name));
        }
    }
    return w;
}

json weights_to_json(const std::vector<double>& w, const auto& palette) {
    json j = json::object();
    for (std::size_t i = 0; i < palette.size(); ++i) {
        j[std::string(to_string(palette[i]))] = w[i];
    }
    return j;
}

}  // namespace

SimConfig sim_config_from_json(const json& j) {
    SimConfig c;
    c.seed = j.value("seed", c.seed);
    c.dt = j.value("dt", c.dt);
    c.vehicle_count = j.value("vehicle_count", c.vehicle_count);
    c.av_count = j.value("av_count", c.av_count);
    c.duration = j.value("duration", c.duration);
    if (j.contains("type_weights")) {
        c.type_weights = weights_from_json(j["type_weights"], kVehicleTypes);
    }
    if (j.contains("color_weights")) {
        c.color_weights = weights_from_json(j["color_weights"], kColors);
    }
    c.min_desired_speed = j.value("min_desired_speed", c.min_desired_speed);
    c.max_desired_speed = j.value("max_desired_speed", c.max_desired_speed);
    c.lane_change_probability = j.value("lane_change_probability", c.lane_change_probability);
    c.validate();
    return c;
}

json to_json(const SimConfig& c) {
    return json{{"seed", c.seed},
                {"dt", c.dt},
                {"vehicle_count", c.vehicle_count},
                {"av_count", c.av_count},
                {"duration", c.duration},
                {"type_weights", weights_to_json(c.type_weights, kVehicleTypes)},
                {"color_weights", weights_to_json(c.color_weights, kColors)},
                {"min_desired_speed", c.min_desired_speed},
                {"max_desired_speed", c.max_desired_speed},
                {"lane_change_probability", c.lane_change_probability}};
}

double safe_speed(double gap, double leader_speed, double dt) {
    constexpr double b = Kinematics::max_decel;
    const double reach = gap - Kinematics::min_gap + leader_speed * leader_speed / (2.0 * b);
    if (reach <= 0.0) {
        return 0.0;
    }
    // Solve v*dt + v^2/(2b) = reach for v >= 0.
    return b * (-dt + std::sqrt(dt * dt + 2.0 * reach / b));
}

namespace {

struct Dimensions {
    double length, width, height;
};

Dimensions nominal_dimensions(VehicleType t) {
    switch (t) {
        case VehicleType::car: return {4.5, 1.8, 1.5};
        case VehicleType::truck: return {12.0, 2.5, 3.8};
        case VehicleType::bus: return {12.0, 2.55, 3.2};
        case VehicleType::motorcycle: return {2.2, 0.8, 1.4};
    }
    return {4.5, 1.8, 1.5};
}

using LaneKey = std::pair<std::string, int>;

/// Active agents grouped per lane, ordered by descending s (leader first).
std::map<LaneKey, std::vector<std::size_t>> lane_occupancy(const std::vector<VehicleAgent>& agents) {
    std::map<LaneKey, std::vector<std::size_t>> lanes;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (agents[i].active) {
            lanes[{agents[i].road, agents[i].lane_index}].push_back(i);
        }
    }
    for (auto& [key, idx] : lanes) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (agents[a].s != agents[b].s) {
                return agents[a].s > agents[b].s;
            }
            return agents[a].id < agents[b].id;
        });
    }
    return lanes;
}

}  // namespace

World::World(std::shared_ptr<const RoadNetwork> network, SimConfig config)
    : network_(std::move(network)), config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    const auto& roads = network_->roads();
    if (roads.empty()) {
        throw Error("world: network has no roads");
    }
    std::map<LaneKey, std::vector<double>> used;
    int counter = 0;
    for (int i = 0; i < config_.vehicle_count; ++i) {
        VehicleAgent a;
        if (i < config_.av_count) {
            a.id = fmt::format("AV{:03d}", i + 1);
            a.vtype = VehicleType::car;
        } else {
            a.vtype = kVehicleTypes[weighted_index(rng_, config_.type_weights)];
            a.id = fmt::format("{}{:03d}", to_string(a.vtype), ++counter);
        }
        a.color = kColors[weighted_index(rng_, config_.color_weights)];
        const Dimensions d = nominal_dimensions(a.vtype);
        // Per-vehicle variation in 5 cm steps keeps sizes distinguishable.
        a.length = d.length + 0.05 * static_cast<double>(uniform_index(rng_, 5));
        a.width = d.width;
        a.height = d.height + 0.05 * static_cast<double>(uniform_index(rng_, 3));
        a.desired_speed = config_.min_desired_speed +
                          uniform01(rng_) * (config_.max_desired_speed - config_.min_desired_speed);

        // Rejection-sample a free spot; give up on a vehicle only if the map is saturated.
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            const Road& road = roads[uniform_index(rng_, roads.size())];
            const int lane = static_cast<int>(uniform_index(rng_, road.lanes.size()));
            const double len = road.lanes[static_cast<std::size_t>(lane)].length();
            const double s = a.length + uniform01(rng_) * (0.9 * len - a.length);
            auto& taken = used[{road.id, lane}];
            const bool clear = std::none_of(taken.begin(), taken.end(),
                                            [&](double other) { return std::abs(other - s) < 30.0; });
            if (clear) {
                taken.push_back(s);
                a.road = road.id;
                a.lane_index = lane;
                a.s = s;
                a.route = make_route(road, lane);
                // Drop route changes already behind the starting point.
                while (a.route.size() > 1 && a.route[1].s_start <= s) {
                    a.route.erase(a.route.begin());
                }
                a.route.front().s_start = 0.0;
                a.route.front().lane = lane;
                placed = true;
            }
        }
        if (!placed) {
            throw Error("world: could not place all vehicles; reduce vehicle_count");
        }
        agents_.push_back(std::move(a));
    }
    // Start every follower at a speed from which it can stop behind its leader.
    for (auto& [key, idx] : lane_occupancy(agents_)) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            VehicleAgent& a = agents_[idx[k]];
            a.speed = a.desired_speed;
            if (k > 0) {
                const VehicleAgent& leader = agents_[idx[k - 1]];
                a.speed = std::min(a.speed, safe_speed(leader.s - leader.length - a.s, leader.speed, config_.dt));
            }
        }
    }
    for (VehicleAgent& a : agents_) {
        place(a);
    }
}

World::World(std::shared_ptr<const RoadNetwork> network, SimConfig config, std::vector<VehicleAgent> agents)
    : network_(std::move(network)), config_(std::move(config)), agents_(std::move(agents)), rng_(config_.seed) {
    config_.validate();
    for (VehicleAgent& a : agents_) {
        if (network_->find_lane(a.road, a.lane_index) == nullptr) {
            throw NotFoundError(fmt::format("agent '{}': unknown lane {} on road '{}'", a.id, a.lane_index, a.road));
        }
        if (a.route.empty()) {
            a.route.push_back({a.road, a.lane_index, 0.0});
            a.route_pos = 0;
        }
        place(a);
    }
}

std::vector<RouteSegment> World::make_route(const Road& road, int start_lane) {
    std::vector<RouteSegment> route{{road.id, start_lane, 0.0}};
    const double len = road.lanes[static_cast<std::size_t>(start_lane)].length();
    const int lanes = static_cast<int>(road.lanes.size());
    if (lanes > 1 && uniform01(rng_) < config_.lane_change_probability) {
        int target = start_lane + (uniform01(rng_) < 0.5 ? -1 : 1);
        if (target < 0 || target >= lanes) {
            target = start_lane + (target < 0 ? 1 : -1);
        }
        route.push_back({road.id, target, (0.2 + 0.6 * uniform01(rng_)) * len});
    }
    return route;
}

void World::assign_route(VehicleAgent& a) {
    const auto& roads = network_->roads();
    const Road& road = roads[uniform_index(rng_, roads.size())];
    const int lane = static_cast<int>(uniform_index(rng_, road.lanes.size()));
    a.route = make_route(road, lane);
    a.route_pos = 0;
    a.road = road.id;
    a.lane_index = lane;
}

void World::place(VehicleAgent& a) const {
    const Lane* lane = network_->find_lane(a.road, a.lane_index);
    const Point p = lane->world_point(a.s, a.lateral);
    a.lane_name = lane->name();
    a.x = p.x;
    a.y = p.y;
    a.heading = lane->heading_at(a.s);
}

void World::step() { step(config_.dt); }

void World::step(double dt) {
    if (!(dt > 0.0)) {
        throw Error("step: dt must be positive");
    }
    const auto lanes = lane_occupancy(agents_);
    std::vector<double> next_speed(agents_.size(), 0.0);
    for (const auto& [key, idx] : lanes) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const VehicleAgent& a = agents_[idx[k]];
            double target = a.speed < a.desired_speed ? std::min(a.desired_speed, a.speed + Kinematics::max_accel * dt)
                                                      : std::max(a.desired_speed, a.speed - Kinematics::comfort_decel * dt);
            if (k > 0) {
                const VehicleAgent& leader = agents_[idx[k - 1]];
                const double gap = leader.s - leader.length - a.s;
                // Restore a 2 s time headway with comfortable braking.
                if (gap < Kinematics::min_gap + Kinematics::headway * a.speed) {
                    const double headway_speed = std::max(0.0, (gap - Kinematics::min_gap) / Kinematics::headway);
                    target = std::min(target, std::max(headway_speed, a.speed - Kinematics::comfort_decel * dt));
                }
                target = std::min(target, safe_speed(gap, leader.speed, dt));
            }
            next_speed[idx[k]] = std::max({target, a.speed - Kinematics::max_decel * dt, 0.0});
        }
    }
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        VehicleAgent& a = agents_[i];
        if (!a.active) {
            continue;
        }
        a.accel = (next_speed[i] - a.speed) / dt;
        a.speed = next_speed[i];
        a.s += a.speed * dt;
    }
    try_lane_changes(dt);
    for (VehicleAgent& a : agents_) {
        if (!a.active) {
            continue;
        }
        const Lane* lane = network_->find_lane(a.road, a.lane_index);
        if (a.s >= lane->length()) {
            a.active = false;
            a.signal = Signal::none;
            continue;
        }
        place(a);
        if (a.signal == Signal::none || a.signal == Signal::brake) {
            a.signal = a.accel <= -1.0 ? Signal::brake : Signal::none;
        }
    }
    try_respawns();
    ++step_;
    time_ += dt;
}

bool World::change_is_safe(const VehicleAgent& a, int target_lane, double dt) const {
    constexpr double margin = 1.0;
    for (const VehicleAgent& o : agents_) {
        if (!o.active || &o == &a || o.road != a.road || o.lane_index != target_lane) {
            continue;
        }
        if (o.s >= a.s) {
            const double gap = o.s - o.length - a.s;
            if (gap < Kinematics::min_gap + margin || safe_speed(gap - margin, o.speed, dt) < a.speed) {
                return false;
            }
        } else {
            const double gap = a.s - a.length - o.s;
            if (gap < Kinematics::min_gap + margin || safe_speed(gap - margin, a.speed, dt) < o.speed) {
                return false;
            }
        }
    }
    return true;
}

void World::try_lane_changes(double dt) {
    for (VehicleAgent& a : agents_) {
        if (!a.active || a.route_pos + 1 >= a.route.size()) {
            continue;
        }
        const RouteSegment& next = a.route[a.route_pos + 1];
        if (a.s < next.s_start) {
            continue;
        }
        if (a.signal != Signal::left && a.signal != Signal::right) {
            // Higher lane indices lie to the left.
            a.signal = next.lane > a.lane_index ? Signal::left : Signal::right;
            a.signal_elapsed = 0.0;
            continue;
        }
        a.signal_elapsed += dt;
        if (a.signal_elapsed + 1e-9 >= Kinematics::signal_lead_time && change_is_safe(a, next.lane, dt)) {
            a.lane_index = next.lane;
            ++a.route_pos;
            a.signal = Signal::none;
            a.signal_elapsed = 0.0;
        }
    }
}

void World::try_respawns() {
    for (VehicleAgent& a : agents_) {
        if (a.active) {
            continue;
        }
        assign_route(a);
        double gap = std::numeric_limits<double>::infinity();
        double leader_speed = 0.0;
        for (const VehicleAgent& o : agents_) {
            if (o.active && o.road == a.road && o.lane_index == a.lane_index && o.s - o.length < gap) {
                gap = o.s - o.length;
                leader_speed = o.speed;
            }
        }
        if (gap < Kinematics::min_gap + 10.0) {
            continue;  // entry blocked; retry on a fresh lane next step
        }
        a.s = 0.0;
        a.lateral = 0.0;
        a.accel = 0.0;
        a.signal = Signal::none;
        a.signal_elapsed = 0.0;
        a.speed = std::isinf(gap) ? a.desired_speed
                                  : std::min(a.desired_speed, safe_speed(gap, leader_speed, config_.dt));
        a.active = true;
        place(a);
    }
}

Snapshot snapshot(const World& world, double t) {
    if (std::abs(t - world.time()) > 1e-9) {
        throw Error(fmt::format("snapshot: requested t={} but world is at t={}", t, world.time()));
    }
    Snapshot snap{world.time(), world.step_index(), {}};
    for (const VehicleAgent& a : world.agents()) {
        if (a.active) {
            snap.agents.push_back(a);
        }
    }
    return snap;
}

std::string serialize(const Snapshot& snap) {
    json agents = json::array();
    for (const VehicleAgent& a : snap.agents) {
        agents.push_back({{"id", a.id},
                          {"ty", to_string(a.vtype)},
                          {"co", to_string(a.color)},
                          {"le", a.length},
                          {"wi", a.width},
                          {"he", a.height},
                          {"v", a.speed},
                          {"a", a.accel},
                          {"h", a.heading},
                          {"sg", to_string(a.signal)},
                          {"x", a.x},
                          {"y", a.y},
                          {"rd", a.road},
                          {"lx", a.lane_index},
                          {"s", a.s},
                          {"lat", a.lateral}});
    }
    return json{{"t", snap.t}, {"step", snap.step}, {"agents", agents}}.dump();
}

}  // namespace vrc
