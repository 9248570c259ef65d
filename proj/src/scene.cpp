#include "vrc/scene.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace vrc {

using nlohmann::json;

FreshnessQueue::FreshnessQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) {
        throw Error("freshness queue: capacity must be positive");
    }
}

void FreshnessQueue::push(std::span<const ObjectInfo> records) {
    // Only the newest `capacity_` records of an oversized batch can survive.
    if (records.size() >= capacity_) {
        entries_.clear();
        records = records.subspan(records.size() - capacity_);
    } else {
        const std::size_t overflow = entries_.size() + records.size() > capacity_
                                         ? entries_.size() + records.size() - capacity_
                                         : 0;
        entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(overflow));
    }
    entries_.insert(entries_.end(), records.begin(), records.end());
}

const ObjectInfo* LinguisticScene::find(std::string_view id) const {
    auto it = std::lower_bound(objects.begin(), objects.end(), id,
                               [](const ObjectInfo& o, std::string_view key) { return o.id < key; });
    if (it != objects.end() && it->id == id) {
        return &*it;
    }
    // Scenes built by hand may not be sorted.
    for (const ObjectInfo& o : objects) {
        if (o.id == id) {
            return &o;
        }
    }
    return nullptr;
}

std::vector<std::string> LinguisticScene::av_ids() const {
    std::vector<std::string> ids;
    for (const ObjectInfo& o : objects) {
        if (is_av_id(o.id)) {
            ids.push_back(o.id);
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<RoadSummary> summarize_roads(const RoadNetwork& network) {
    std::vector<RoadSummary> roads;
    for (const Road& r : network.roads()) {
        RoadSummary summary{r.id, {}};
        for (const Lane& l : r.lanes) {
            summary.lanes.push_back(l.name());
        }
        roads.push_back(std::move(summary));
    }
    return roads;
}

namespace {

/// True when `a` should replace `b` as the record kept for an object id.
bool fresher(const ObjectInfo& a, const ObjectInfo& b) {
    if (a.ts != b.ts) {
        return a.ts > b.ts;
    }
    const bool a_av = is_av_id(a.ds);
    const bool b_av = is_av_id(b.ds);
    if (a_av != b_av) {
        return a_av;
    }
    return a.ds < b.ds;
}

}  // namespace

LinguisticScene construct_scene(const FreshnessQueue& queue, const RoadNetwork& network, double t,
                                std::int64_t scene_id) {
    std::map<std::string, const ObjectInfo*> latest;
    for (const ObjectInfo& rec : queue.entries()) {
        const Lane* lane = network.find_lane(rec.ln);
        if (lane == nullptr || lane->road_id() != rec.rd) {
            continue;
        }
        auto [it, inserted] = latest.emplace(rec.id, &rec);
        if (!inserted && fresher(rec, *it->second)) {
            it->second = &rec;
        }
    }
    LinguisticScene scene;
    scene.scene_id = scene_id;
    scene.ts = quantize(t);
    scene.objects.reserve(latest.size());
    for (const auto& [id, rec] : latest) {
        scene.objects.push_back(quantized(*rec));
    }
    scene.roads = summarize_roads(network);
    return scene;
}

namespace {

void append_float(std::string& out, double v) { out += fmt::format("{:.3f}", quantize(v)); }

void append_string(std::string& out, const std::string& s) { out += json(s).dump(); }

}  // namespace

std::string render_ls(const LinguisticScene& scene) {
    std::string out;
    out.reserve(256 + scene.objects.size() * 300);
    out += "{\"scene_id\":";
    out += std::to_string(scene.scene_id);
    out += ",\"ts\":";
    append_float(out, scene.ts);
    out += ",\"objects\":[";
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const ObjectInfo& o = scene.objects[i];
        if (i > 0) {
            out += ',';
        }
        out += "{\"id\":";
        append_string(out, o.id);
        const std::pair<const char*, double> numeric[] = {{"ts", o.ts}, {"x", o.x},   {"y", o.y},   {"s", o.s},
                                                          {"lat", o.lat}, {"v", o.v}, {"a", o.a},   {"h", o.h},
                                                          {"le", o.le}, {"wi", o.wi}, {"he", o.he}};
        for (const auto& [key, value] : numeric) {
            out += ",\"";
            out += key;
            out += "\":";
            append_float(out, value);
        }
        out += ",\"ty\":";
        append_string(out, std::string(to_string(o.ty)));
        out += ",\"co\":";
        append_string(out, std::string(to_string(o.co)));
        out += ",\"ln\":";
        append_string(out, o.ln);
        out += ",\"lx\":";
        out += std::to_string(o.lx);
        out += ",\"rd\":";
        append_string(out, o.rd);
        out += ",\"sg\":";
        append_string(out, std::string(to_string(o.sg)));
        out += ",\"ds\":";
        append_string(out, o.ds);
        out += '}';
    }
    out += "],\"roads\":[";
    for (std::size_t i = 0; i < scene.roads.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += "{\"id\":";
        append_string(out, scene.roads[i].id);
        out += ",\"lanes\":[";
        for (std::size_t l = 0; l < scene.roads[i].lanes.size(); ++l) {
            if (l > 0) {
                out += ',';
            }
            append_string(out, scene.roads[i].lanes[l]);
        }
        out += "]}";
    }
    out += "]}";
    return out;
}

namespace {

template <typename Enum>
Enum enum_field(const json& j, const char* key, std::optional<Enum> (*parse)(std::string_view)) {
    const auto text = j.at(key).get<std::string>();
    auto value = parse(text);
    if (!value) {
        throw Error(fmt::format("linguistic scene: invalid value '{}' for field '{}'", text, key));
    }
    return *value;
}

}  // namespace

LinguisticScene parse_ls(std::string_view json_text) {
    LinguisticScene scene;
    try {
        const json doc = json::parse(json_text);
        scene.scene_id = doc.at("scene_id").get<std::int64_t>();
        scene.ts = doc.at("ts").get<double>();
        for (const json& jo : doc.at("objects")) {
            ObjectInfo o;
            o.id = jo.at("id").get<std::string>();
            o.ts = jo.at("ts").get<double>();
            o.x = jo.at("x").get<double>();
            o.y = jo.at("y").get<double>();
            o.s = jo.at("s").get<double>();
            o.lat = jo.at("lat").get<double>();
            o.v = jo.at("v").get<double>();
            o.a = jo.at("a").get<double>();
            o.h = jo.at("h").get<double>();
            o.le = jo.at("le").get<double>();
            o.wi = jo.at("wi").get<double>();
            o.he = jo.at("he").get<double>();
            o.ty = enum_field<VehicleType>(jo, "ty", parse_vehicle_type);
            o.co = enum_field<Color>(jo, "co", parse_color);
            o.ln = jo.at("ln").get<std::string>();
            o.lx = jo.at("lx").get<int>();
            o.rd = jo.at("rd").get<std::string>();
            o.sg = enum_field<Signal>(jo, "sg", parse_signal);
            o.ds = jo.at("ds").get<std::string>();
            scene.objects.push_back(std::move(o));
        }
        for (const json& jr : doc.at("roads")) {
            scene.roads.push_back({jr.at("id").get<std::string>(), jr.at("lanes").get<std::vector<std::string>>()});
        }
    } catch (const json::exception& e) {
        throw Error(fmt::format("linguistic scene parse error: {}", e.what()));
    }
    std::sort(scene.objects.begin(), scene.objects.end(),
              [](const ObjectInfo& a, const ObjectInfo& b) { return a.id < b.id; });
    return scene;
}

}  // namespace vrc
