#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vrc/object_info.hpp"
#include "vrc/scene.hpp"

namespace vrc {

/// Ego-relative relations. front/rear/left/right are spatial, the *lane kinds
/// are lane topology, road names the road an object drives on, and
/// surrounding is the catch-all used when a question names no relation.
enum class RelationKind { front, rear, left, right, leftlane, rightlane, samelane, road, surrounding };

std::string_view to_string(RelationKind k);
std::optional<RelationKind> parse_relation_kind(std::string_view s);

bool is_spatial(RelationKind k);
bool is_lane(RelationKind k);

/// Radius around the ego inside which relations are computed.
inline constexpr double kRelationRadius = 100.0;

/// Signed angle in (-180, 180] between the ego's heading and the direction to
/// `o`. The magnitude is arccos of the normalized projection on the heading
/// vector (sin h, cos h); positive angles lie to the ego's left. Throws when
/// the two positions coincide.
double direction_angle(const ObjectInfo& e, const ObjectInfo& o);

/// Bins a direction angle: front (-45, 45], left (45, 135],
/// rear (135, 180] and (-180, -135], right (-135, -45].
RelationKind spatial_relation(double theta_deg);

/// leftlane when lx_e - lx_o = 1, rightlane when lx_o - lx_e = 1, samelane when
/// equal; nothing for different roads or lanes further apart. Applied to the
/// raw indices.
std::optional<RelationKind> lane_relation(const ObjectInfo& e, const ObjectInfo& o);

double planar_distance(const ObjectInfo& a, const ObjectInfo& b);

struct GraphEdge {
    ObjectInfo object;
    RelationKind spatial = RelationKind::front;
    std::optional<RelationKind> lane;
    std::string road;  // road relation: the road the object drives on
    double distance = 0.0;

    /// True when the edge satisfies `kind` (road kinds compare `road_name`).
    bool satisfies(RelationKind kind, std::string_view road_name = {}) const;
};

/// Ego-centric entity-relation graph. Edges are sorted by ascending distance,
/// ties by id.
struct ERGraph {
    ObjectInfo ego;
    std::vector<GraphEdge> edges;

    const GraphEdge* edge(std::string_view id) const;
};

/// Builds the graph around `ego_id` over all objects within the relation
/// radius (inclusive). Objects at the ego's exact position have no defined
/// direction and are left out.
ERGraph build_graph(const LinguisticScene& ls, std::string_view ego_id);

using AttributeValue = std::variant<double, std::int64_t, std::string>;
using AttributeMap = std::map<std::string, AttributeValue>;

/// Field names of the object record, in wire order.
const std::vector<std::string>& object_attribute_names();
AttributeMap attributes_of(const ObjectInfo& o);
std::string format_attribute(const AttributeValue& v);

struct MaskedAttribute {
    std::string entity;
    std::string attribute;
};

/// Entity-relation graph enriched with per-entity attributes, one of which is
/// masked as the query target.
class AERGraph {
public:
    AERGraph(ERGraph base, MaskedAttribute masked);

    const ERGraph& base() const { return base_; }
    const std::map<std::string, AttributeMap>& attributes() const { return attributes_; }
    const MaskedAttribute& masked() const { return masked_; }
    const AttributeValue& masked_value() const;
    const AttributeValue& attribute(std::string_view entity, std::string_view name) const;

private:
    ERGraph base_;
    std::map<std::string, AttributeMap> attributes_;
    MaskedAttribute masked_;
};

AERGraph build_aer(const ERGraph& g, const MaskedAttribute& mask);
/// Masks a uniformly drawn (entity, attribute) pair; entities are the graph's
/// objects, or the ego when the graph has no edges.
AERGraph build_aer(const ERGraph& g, std::uint64_t seed);

}  // namespace vrc
