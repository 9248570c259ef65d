#include "vrc/toolbox.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace vrc {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 10> kTaskNames = {"velocity", "acceleration", "heading", "color",
                                                         "classification", "size", "status", "distance",
                                                         "count", "existence"};

template <typename Enum, std::size_t N>
double code_of(Enum e, const std::array<Enum, N>& palette) {
    return static_cast<double>(std::find(palette.begin(), palette.end(), e) - palette.begin());
}

template <typename Enum, std::size_t N>
std::string name_of_code(double code, const std::array<Enum, N>& palette) {
    const auto i = static_cast<std::size_t>(code);
    if (code < 0 || i >= N || static_cast<double>(i) != code) {
        return fmt::format("#{}", code);
    }
    return std::string(to_string(palette[i]));
}

}  // namespace

std::optional<TaskId> task_from_number(long long n) {
    if (n < 1 || n > 10) {
        return std::nullopt;
    }
    return static_cast<TaskId>(n);
}

std::string_view to_string(TaskId t) { return kTaskNames[static_cast<std::size_t>(task_number(t) - 1)]; }

std::optional<TaskId> parse_task(std::string_view name) {
    for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
        if (kTaskNames[i] == name) {
            return static_cast<TaskId>(i + 1);
        }
    }
    return std::nullopt;
}

std::string_view task_attribute(TaskId task) {
    switch (task) {
        case TaskId::velocity: return "v";
        case TaskId::acceleration: return "a";
        case TaskId::heading: return "h";
        case TaskId::color: return "co";
        case TaskId::classification: return "ty";
        case TaskId::size: return "le";
        case TaskId::status: return "sg";
        default: return "";
    }
}

void QueryParams::validate() const {
    if (relation == RelationKind::road && (!road || road->empty())) {
        throw Error("query params: relation 'road' requires a road name");
    }
}

json to_json(const QueryParams& p) {
    json j;
    j["vtype"] = p.vtype ? json(std::string(to_string(*p.vtype))) : json(nullptr);
    j["color"] = p.color ? json(std::string(to_string(*p.color))) : json(nullptr);
    j["relation"] = std::string(to_string(p.relation));
    j["road"] = p.road ? json(*p.road) : json(nullptr);
    return j;
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    if (!j[key].is_string()) {
        throw Error(fmt::format("query params: '{}' must be a string or null", key));
    }
    std::string s = j[key].get<std::string>();
    if (s.empty() || s == "none" || s == "null") {
        return std::nullopt;
    }
    return s;
}

}  // namespace

QueryParams params_from_json(const json& j) {
    if (!j.is_object()) {
        throw Error("query params: expected a JSON object");
    }
    QueryParams p;
    if (auto v = optional_string(j, "vtype")) {
        p.vtype = parse_vehicle_type(*v);
        if (!p.vtype) {
            throw Error(fmt::format("query params: unknown vehicle type '{}'", *v));
        }
    }
    if (auto c = optional_string(j, "color")) {
        p.color = parse_color(*c);
        if (!p.color) {
            throw Error(fmt::format("query params: unknown color '{}'", *c));
        }
    }
    if (auto r = optional_string(j, "relation")) {
        auto kind = parse_relation_kind(*r);
        if (!kind) {
            throw Error(fmt::format("query params: unknown relation '{}'", *r));
        }
        p.relation = *kind;
    }
    p.road = optional_string(j, "road");
    if (p.relation != RelationKind::road) {
        p.road.reset();
    }
    p.validate();
    return p;
}

json to_json(const NumericResult& r) {
    return json{{"task", task_number(r.task)}, {"values", r.values}, {"matched_ids", r.matched_ids}, {"stride", r.stride}};
}

NumericResult numeric_from_json(const json& j) {
    NumericResult r;
    const auto task = task_from_number(j.at("task").get<long long>());
    if (!task) {
        throw Error("numeric result: task out of range");
    }
    r.task = *task;
    r.values = j.at("values").get<std::vector<double>>();
    r.matched_ids = j.value("matched_ids", std::vector<std::string>{});
    r.stride = j.value("stride", 1);
    return r;
}

json answer_to_json(const NumericResult& r) {
    switch (r.task) {
        case TaskId::count: return r.values.empty() ? json(0) : json(static_cast<long long>(r.values.front()));
        case TaskId::existence: return !r.values.empty() && r.values.front() != 0.0;
        case TaskId::size: {
            json out = json::array();
            for (std::size_t i = 0; i + 2 < r.values.size(); i += 3) {
                out.push_back({r.values[i], r.values[i + 1], r.values[i + 2]});
            }
            return out;
        }
        default: break;
    }
    json out = json::array();
    for (double v : r.values) {
        switch (r.task) {
            case TaskId::color: out.push_back(name_of_code(v, kColors)); break;
            case TaskId::classification: out.push_back(name_of_code(v, kVehicleTypes)); break;
            case TaskId::status: out.push_back(name_of_code(v, kSignals)); break;
            default: out.push_back(v); break;
        }
    }
    return out;
}

NumericResult answer_from_json(TaskId task, const json& answer, std::vector<std::string> matched_ids) {
    NumericResult r;
    r.task = task;
    r.matched_ids = std::move(matched_ids);
    switch (task) {
        case TaskId::count: r.values = {answer.get<double>()}; return r;
        case TaskId::existence:
            r.values = {answer.is_boolean() ? (answer.get<bool>() ? 1.0 : 0.0) : answer.get<double>()};
            return r;
        case TaskId::size:
            r.stride = 3;
            for (const json& triple : answer) {
                for (const json& v : triple) {
                    r.values.push_back(v.get<double>());
                }
            }
            return r;
        default: break;
    }
    for (const json& v : answer) {
        if (!v.is_string()) {
            r.values.push_back(v.get<double>());
            continue;
        }
        const auto text = v.get<std::string>();
        std::optional<double> code;
        if (task == TaskId::color) {
            if (auto c = parse_color(text)) code = code_of(*c, kColors);
        } else if (task == TaskId::classification) {
            if (auto t = parse_vehicle_type(text)) code = code_of(*t, kVehicleTypes);
        } else if (task == TaskId::status) {
            if (auto s = parse_signal(text)) code = code_of(*s, kSignals);
        }
        if (!code) {
            throw Error(fmt::format("answer: '{}' is not a valid {} value", text, to_string(task)));
        }
        r.values.push_back(*code);
    }
    return r;
}

namespace {

bool relation_holds(const ObjectInfo& ego, const ObjectInfo& o, RelationKind kind) {
    if (kind == RelationKind::surrounding) {
        return true;
    }
    if (is_lane(kind)) {
        return lane_relation(ego, o) == kind;
    }
    return spatial_relation(direction_angle(ego, o)) == kind;
}

}  // namespace

std::vector<ObjectInfo> select_objects(const LinguisticScene& ls, std::string_view ego_id, const QueryParams& p) {
    p.validate();
    const ObjectInfo* ego = ls.find(ego_id);
    if (ego == nullptr) {
        throw NotFoundError(fmt::format("select_objects: unknown ego '{}'", ego_id));
    }
    std::vector<std::pair<double, const ObjectInfo*>> hits;
    for (const ObjectInfo& o : ls.objects) {
        if (o.id == ego->id) {
            continue;
        }
        if ((p.vtype && o.ty != *p.vtype) || (p.color && o.co != *p.color)) {
            continue;
        }
        const double dist = planar_distance(*ego, o);
        if (p.relation == RelationKind::road) {
            if (o.rd != *p.road) {
                continue;
            }
        } else if (dist > kRelationRadius || dist == 0.0 || !relation_holds(*ego, o, p.relation)) {
            continue;
        }
        hits.emplace_back(dist, &o);
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first < b.first;
        }
        return a.second->id < b.second->id;
    });
    std::vector<ObjectInfo> out;
    out.reserve(hits.size());
    for (const auto& [dist, o] : hits) {
        out.push_back(*o);
    }
    return out;
}

NumericResult execute(TaskId task, const QueryParams& p, const LinguisticScene& ls, std::string_view ego_id) {
    const std::vector<ObjectInfo> selected = select_objects(ls, ego_id, p);
    const ObjectInfo& ego = *ls.find(ego_id);
    NumericResult r;
    r.task = task;
    for (const ObjectInfo& o : selected) {
        r.matched_ids.push_back(o.id);
    }
    switch (task) {
        case TaskId::count: r.values = {static_cast<double>(selected.size())}; return r;
        case TaskId::existence: r.values = {selected.empty() ? 0.0 : 1.0}; return r;
        case TaskId::size: r.stride = 3; break;
        default: break;
    }
    for (const ObjectInfo& o : selected) {
        switch (task) {
            case TaskId::velocity: r.values.push_back(o.v); break;
            case TaskId::acceleration: r.values.push_back(o.a); break;
            case TaskId::heading: r.values.push_back(o.h); break;
            case TaskId::color: r.values.push_back(code_of(o.co, kColors)); break;
            case TaskId::classification: r.values.push_back(code_of(o.ty, kVehicleTypes)); break;
            case TaskId::status: r.values.push_back(code_of(o.sg, kSignals)); break;
            case TaskId::size: r.values.insert(r.values.end(), {o.le, o.wi, o.he}); break;
            case TaskId::distance: r.values.push_back(planar_distance(ego, o)); break;
            default: break;
        }
    }
    return r;
}

}  // namespace vrc
