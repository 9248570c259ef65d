#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrc/object_info.hpp"
#include "vrc/road_model.hpp"

namespace vrc {

/// Fixed-capacity FIFO of received object records. When a push would exceed
/// the capacity the oldest records are dropped first.
class FreshnessQueue {
public:
    static constexpr std::size_t kDefaultCapacity = 2000;

    explicit FreshnessQueue(std::size_t capacity = kDefaultCapacity);

    void push(std::span<const ObjectInfo> records);
    void push(const ObjectInfo& record) { push(std::span<const ObjectInfo>(&record, 1)); }

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<ObjectInfo>& entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::deque<ObjectInfo> entries_;
};

struct RoadSummary {
    std::string id;
    std::vector<std::string> lanes;

    bool operator==(const RoadSummary&) const = default;
};

/// The linguistic scene: a timestamped, deduplicated set of object records
/// plus the road context they refer to. Immutable once constructed.
struct LinguisticScene {
    std::int64_t scene_id = 0;
    double ts = 0.0;
    std::vector<ObjectInfo> objects;  // unique ids, sorted by id
    std::vector<RoadSummary> roads;

    const ObjectInfo* find(std::string_view id) const;
    std::vector<std::string> av_ids() const;

    bool operator==(const LinguisticScene&) const = default;
};

std::vector<RoadSummary> summarize_roads(const RoadNetwork& network);

/// Builds a scene from the queue contents. One record is kept per object id:
/// the newest by ts; ties prefer an AV sensor, then the smallest sensor id.
/// Records referring to roads or lanes absent from the network are dropped.
/// Numeric fields are quantized to the wire precision.
LinguisticScene construct_scene(const FreshnessQueue& queue, const RoadNetwork& network, double t,
                                std::int64_t scene_id = 0);

/// Canonical single-line JSON: fixed key order, floats with 3 decimals.
std::string render_ls(const LinguisticScene& scene);
LinguisticScene parse_ls(std::string_view json_text);

}  // namespace vrc
