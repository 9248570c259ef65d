#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrc/object_info.hpp"
#include "vrc/scene.hpp"
#include "vrc/scene_graph.hpp"

namespace vrc {

/// The ten query tasks, numbered as in the task-classification prompt.
enum class TaskId {
    velocity = 1,
    acceleration = 2,
    heading = 3,
    color = 4,
    classification = 5,
    size = 6,
    status = 7,
    distance = 8,
    count = 9,
    existence = 10,
};

inline constexpr std::array<TaskId, 10> kAllTasks = {
    TaskId::velocity, TaskId::acceleration, TaskId::heading,  TaskId::color, TaskId::classification,
    TaskId::size,     TaskId::status,       TaskId::distance, TaskId::count, TaskId::existence};

inline int task_number(TaskId t) { return static_cast<int>(t); }
std::optional<TaskId> task_from_number(long long n);
std::string_view to_string(TaskId t);
std::optional<TaskId> parse_task(std::string_view name);

/// Attribute/relation constraints identifying the objects a question is about.
struct QueryParams {
    std::optional<VehicleType> vtype;
    std::optional<Color> color;
    RelationKind relation = RelationKind::surrounding;
    std::optional<std::string> road;

    /// Throws when relation is road but no road name is given.
    void validate() const;
    bool operator==(const QueryParams&) const = default;
};

nlohmann::json to_json(const QueryParams& p);
/// Accepts nulls or missing keys; a missing relation becomes surrounding.
QueryParams params_from_json(const nlohmann::json& j);

/// Toolbox output. Values are ordered by ascending distance to the ego (ties by
/// id) and aligned with matched_ids, `stride` values per match. Count and
/// existence carry a single scalar. Enumerations are encoded as palette
/// indices.
struct NumericResult {
    TaskId task = TaskId::existence;
    std::vector<double> values;
    std::vector<std::string> matched_ids;
    int stride = 1;

    bool operator==(const NumericResult&) const = default;
};

nlohmann::json to_json(const NumericResult& r);
NumericResult numeric_from_json(const nlohmann::json& j);

/// Human-readable answer: enumerations as names, size as [le, wi, he]
/// triples, count as an integer, existence as a boolean.
nlohmann::json answer_to_json(const NumericResult& r);
NumericResult answer_from_json(TaskId task, const nlohmann::json& answer, std::vector<std::string> matched_ids = {});

/// Objects matching `p` around the ego, ordered by distance then id. Road
/// relations select over the whole scene; all others are limited to the
/// relation radius. The ego never matches itself.
std::vector<ObjectInfo> select_objects(const LinguisticScene& ls, std::string_view ego_id, const QueryParams& p);

NumericResult execute(TaskId task, const QueryParams& p, const LinguisticScene& ls, std::string_view ego_id);

/// Name of the object attribute a task reads ("" for derived tasks).
std::string_view task_attribute(TaskId task);

}  // namespace vrc
