#include "vrc/scene_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "vrc/traffic_sim.hpp"

namespace vrc {

namespace {

constexpr std::array<std::pair<RelationKind, std::string_view>, 9> kRelationNames = {{
    {RelationKind::front, "front"},
    {RelationKind::rear, "rear"},
    {RelationKind::left, "left"},
    {RelationKind::right, "right"},
    {RelationKind::leftlane, "leftlane"},
    {RelationKind::rightlane, "rightlane"},
    {RelationKind::samelane, "samelane"},
    {RelationKind::road, "road"},
    {RelationKind::surrounding, "surrounding"},
}};

constexpr double kDeg = 180.0 / std::numbers::pi;

}  // namespace

std::string_view to_string(RelationKind k) {
    for (const auto& [kind, name] : kRelationNames) {
        if (kind == k) {
            return name;
        }
    }
    return "surrounding";
}

std::optional<RelationKind> parse_relation_kind(std::string_view s) {
    for (const auto& [kind, name] : kRelationNames) {
        if (name == s) {
            return kind;
        }
    }
    return std::nullopt;
}

bool is_spatial(RelationKind k) {
    return k == RelationKind::front || k == RelationKind::rear || k == RelationKind::left || k == RelationKind::right;
}

bool is_lane(RelationKind k) {
    return k == RelationKind::leftlane || k == RelationKind::rightlane || k == RelationKind::samelane;
}

double planar_distance(const ObjectInfo& a, const ObjectInfo& b) { return std::hypot(b.x - a.x, b.y - a.y); }

double direction_angle(const ObjectInfo& e, const ObjectInfo& o) {
    const double dx = o.x - e.x;
    const double dy = o.y - e.y;
    const double dist = std::hypot(dx, dy);
    if (dist == 0.0) {
        throw Error(fmt::format("direction_angle: '{}' and '{}' share a position", e.id, o.id));
    }
    const double sin_h = std::sin(e.h / kDeg);
    const double cos_h = std::cos(e.h / kDeg);
    const double magnitude = std::acos(std::clamp((dx * sin_h + dy * cos_h) / dist, -1.0, 1.0)) * kDeg;
    const double cross = sin_h * dy - cos_h * dx;
    if (cross < 0.0 && magnitude < 180.0) {
        return -magnitude;
    }
    return magnitude;
}

RelationKind spatial_relation(double theta) {
    if (theta > -45.0 && theta <= 45.0) {
        return RelationKind::front;
    }
    if (theta > 45.0 && theta <= 135.0) {
        return RelationKind::left;
    }
    if (theta > -135.0 && theta <= -45.0) {
        return RelationKind::right;
    }
    return RelationKind::rear;
}

std::optional<RelationKind> lane_relation(const ObjectInfo& e, const ObjectInfo& o) {
    if (e.rd != o.rd) {
        return std::nullopt;
    }
    if (e.lx - o.lx == 1) {
        return RelationKind::leftlane;
    }
    if (o.lx - e.lx == 1) {
        return RelationKind::rightlane;
    }
    if (e.lx == o.lx) {
        return RelationKind::samelane;
    }
    return std::nullopt;
}

bool GraphEdge::satisfies(RelationKind kind, std::string_view road_name) const {
    switch (kind) {
        case RelationKind::surrounding: return true;
        case RelationKind::road: return road == road_name;
        case RelationKind::leftlane:
        case RelationKind::rightlane:
        case RelationKind::samelane: return lane == kind;
        default: return spatial == kind;
    }
}

const GraphEdge* ERGraph::edge(std::string_view id) const {
    for (const GraphEdge& e : edges) {
        if (e.object.id == id) {
            return &e;
        }
    }
    return nullptr;
}

ERGraph build_graph(const LinguisticScene& ls, std::string_view ego_id) {
    if (!is_av_id(ego_id)) {
        throw Error(fmt::format("build_graph: '{}' is not an AV id", ego_id));
    }
    const ObjectInfo* ego = ls.find(ego_id);
    if (ego == nullptr) {
        throw NotFoundError(fmt::format("build_graph: unknown ego '{}'", ego_id));
    }
    ERGraph g{*ego, {}};
    for (const ObjectInfo& o : ls.objects) {
        if (o.id == ego->id) {
            continue;
        }
        const double dist = planar_distance(*ego, o);
        if (dist > kRelationRadius || dist == 0.0) {
            continue;
        }
        g.edges.push_back({o, spatial_relation(direction_angle(*ego, o)), lane_relation(*ego, o), o.rd, dist});
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
        if (a.distance != b.distance) {
            return a.distance < b.distance;
        }
        return a.object.id < b.object.id;
    });
    return g;
}

const std::vector<std::string>& object_attribute_names() {
    static const std::vector<std::string> names = {"id", "ts", "x",  "y",  "s",  "lat", "v",  "a",  "h",  "le",
                                                   "wi", "he", "ty", "co", "ln", "lx",  "rd", "sg", "ds"};
    return names;
}

AttributeMap attributes_of(const ObjectInfo& o) {
    return AttributeMap{
        {"id", o.id},
        {"ts", o.ts},
        {"x", o.x},
        {"y", o.y},
        {"s", o.s},
        {"lat", o.lat},
        {"v", o.v},
        {"a", o.a},
        {"h", o.h},
        {"le", o.le},
        {"wi", o.wi},
        {"he", o.he},
        {"ty", std::string(to_string(o.ty))},
        {"co", std::string(to_string(o.co))},
        {"ln", o.ln},
        {"lx", static_cast<std::int64_t>(o.lx)},
        {"rd", o.rd},
        {"sg", std::string(to_string(o.sg))},
        {"ds", o.ds},
    };
}

std::string format_attribute(const AttributeValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return x;
            } else if constexpr (std::is_same_v<T, double>) {
                return fmt::format("{:.3f}", x);
            } else {
                return std::to_string(x);
            }
        },
        v);
}

AERGraph::AERGraph(ERGraph base, MaskedAttribute masked) : base_(std::move(base)), masked_(std::move(masked)) {
    attributes_.emplace(base_.ego.id, attributes_of(base_.ego));
    for (const GraphEdge& e : base_.edges) {
        attributes_.emplace(e.object.id, attributes_of(e.object));
    }
    auto it = attributes_.find(masked_.entity);
    if (it == attributes_.end()) {
        throw NotFoundError(fmt::format("build_aer: entity '{}' is not in the graph", masked_.entity));
    }
    if (!it->second.contains(masked_.attribute)) {
        throw Error(fmt::format("build_aer: entity '{}' has no attribute '{}'", masked_.entity, masked_.attribute));
    }
}

const AttributeValue& AERGraph::masked_value() const { return attribute(masked_.entity, masked_.attribute); }

const AttributeValue& AERGraph::attribute(std::string_view entity, std::string_view name) const {
    auto it = attributes_.find(std::string(entity));
    if (it == attributes_.end()) {
        throw NotFoundError(fmt::format("unknown entity '{}'", entity));
    }
    auto attr = it->second.find(std::string(name));
    if (attr == it->second.end()) {
        throw Error(fmt::format("entity '{}' has no attribute '{}'", entity, name));
    }
    return attr->second;
}

AERGraph build_aer(const ERGraph& g, const MaskedAttribute& mask) { return AERGraph(g, mask); }

AERGraph build_aer(const ERGraph& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::string entity = g.edges.empty() ? g.ego.id : g.edges[uniform_index(rng, g.edges.size())].object.id;
    const auto& names = object_attribute_names();
    // Skip "id": it names the entity rather than describing it.
    const std::string& attribute = names[1 + uniform_index(rng, names.size() - 1)];
    return AERGraph(g, {entity, attribute});
}

}  // namespace vrc
