#pragma once

// Relation oracle written independently of the scene-graph implementation:
// the object is rotated into the ego's body frame and classified by atan2.

#include <cmath>
#include <numbers>
#include <optional>

#include "vrc/object_info.hpp"
#include "vrc/scene_graph.hpp"

namespace oracle {

inline vrc::RelationKind bin(double t) {
    if (t > -45 && t <= 45) return vrc::RelationKind::front;
    if (t > 45 && t <= 135) return vrc::RelationKind::left;
    if (t > -135 && t <= -45) return vrc::RelationKind::right;
    return vrc::RelationKind::rear;
}

/// Quadrant of `o` seen from `e`, or nothing when the angle is within 1e-6
/// degrees of a bin edge (where float rounding decides the outcome).
inline std::optional<vrc::RelationKind> quadrant(const vrc::ObjectInfo& e, const vrc::ObjectInfo& o) {
    const double rad = e.h * std::numbers::pi / 180.0;
    const double dx = o.x - e.x;
    const double dy = o.y - e.y;
    // Body frame: forward along the heading, positive lateral to the ego's left.
    const double forward = dx * std::sin(rad) + dy * std::cos(rad);
    const double leftward = -dx * std::cos(rad) + dy * std::sin(rad);
    const double deg = std::atan2(leftward, forward) * 180.0 / std::numbers::pi;
    for (double edge : {-180.0, -135.0, -45.0, 45.0, 135.0, 180.0}) {
        if (std::abs(deg - edge) < 1e-6) return std::nullopt;
    }
    return bin(deg);
}

}  // namespace oracle
