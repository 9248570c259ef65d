#include "vrc/qa_gen.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "vrc/traffic_sim.hpp"

namespace vrc {

using nlohmann::json;

namespace {

const std::set<std::string> kSlotNames = {"type", "color", "relation", "road"};

constexpr std::array<RelationKind, 8> kEgoRelations = {
    RelationKind::front,     RelationKind::rear,      RelationKind::left,     RelationKind::right,
    RelationKind::leftlane,  RelationKind::rightlane, RelationKind::samelane, RelationKind::surrounding};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFoundError(fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        f(line, line_no);
    }
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

}  // namespace

std::string strip_radius_prefix(std::string_view question) {
    if (question.starts_with(kRadiusPrefix)) {
        question.remove_prefix(kRadiusPrefix.size());
    }
    return std::string(question);
}

std::string_view to_string(Hop h) { return h == Hop::ego_centric ? "ego_centric" : "ego_agnostic"; }

std::optional<Hop> parse_hop(std::string_view s) {
    if (s == "ego_centric") return Hop::ego_centric;
    if (s == "ego_agnostic") return Hop::ego_agnostic;
    return std::nullopt;
}

std::set<std::string> placeholders_in(std::string_view text) {
    std::set<std::string> out;
    for (std::size_t pos = text.find('<'); pos != std::string_view::npos; pos = text.find('<', pos + 1)) {
        const auto end = text.find('>', pos);
        if (end == std::string_view::npos) {
            throw Error(fmt::format("malformed placeholder at offset {} in \"{}\"", pos, text));
        }
        std::string name(text.substr(pos + 1, end - pos - 1));
        if (!kSlotNames.contains(name)) {
            throw Error(fmt::format("malformed placeholder <{}> in \"{}\"", name, text));
        }
        out.insert(std::move(name));
    }
    return out;
}

TemplateSet parse_templates(std::string_view jsonl) {
    TemplateSet out;
    std::set<std::string> ids;
    for_each_line(jsonl, [&](std::string_view line, std::size_t line_no) {
        const std::string where = fmt::format("templates line {}", line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(fmt::format("{}: {}", where, e.what()));
        }
        QuestionTemplate t;
        try {
            t.id = j.at("id").get<std::string>();
            const json& task = j.at("task");
            const auto parsed = task.is_string() ? parse_task(task.get<std::string>())
                                                 : task_from_number(task.get<long long>());
            if (!parsed) {
                throw Error(fmt::format("unknown task {}", task.dump()));
            }
            t.task = *parsed;
            const auto hop = parse_hop(j.at("hop").get<std::string>());
            if (!hop) {
                throw Error(fmt::format("unknown hop '{}'", j.at("hop").get<std::string>()));
            }
            t.hop = *hop;
            t.text = j.at("text").get<std::string>();
            for (const json& slot : j.at("required_slots")) {
                t.required_slots.insert(slot.get<std::string>());
            }
        } catch (const json::exception& e) {
            throw Error(fmt::format("{}: {}", where, e.what()));
        } catch (const Error& e) {
            throw Error(fmt::format("{}: {}", where, e.what()));
        }
        std::set<std::string> found;
        try {
            found = placeholders_in(t.text);
        } catch (const Error& e) {
            throw Error(fmt::format("{} ({}): {}", where, t.id, e.what()));
        }
        if (found != t.required_slots) {
            throw Error(fmt::format("{} ({}): slot mismatch between text and required_slots", where, t.id));
        }
        if ((t.hop == Hop::ego_agnostic) != found.contains("road")) {
            throw Error(fmt::format("{} ({}): <road> is required for ego_agnostic templates and only for them",
                                    where, t.id));
        }
        if (t.hop == Hop::ego_agnostic && found.contains("relation")) {
            throw Error(fmt::format("{} ({}): ego_agnostic templates cannot use <relation>", where, t.id));
        }
        if ((t.task == TaskId::color && found.contains("color")) ||
            (t.task == TaskId::classification && found.contains("type"))) {
            throw Error(fmt::format("{} ({}): template names its own answer", where, t.id));
        }
        if (!ids.insert(t.id).second) {
            throw Error(fmt::format("{}: duplicate template id '{}'", where, t.id));
        }
        out.push_back(std::move(t));
    });
    for (TaskId task : kAllTasks) {
        for (Hop hop : {Hop::ego_centric, Hop::ego_agnostic}) {
            const bool covered = std::any_of(out.begin(), out.end(), [&](const QuestionTemplate& t) {
                return t.task == task && t.hop == hop;
            });
            if (!covered) {
                throw Error(fmt::format("task {} uncovered ({} templates)", task_number(task), to_string(hop)));
            }
        }
    }
    return out;
}

TemplateSet load_templates(const std::filesystem::path& path) { return parse_templates(read_file(path)); }

std::string_view relation_phrase(RelationKind k) {
    switch (k) {
        case RelationKind::front: return "in front of me";
        case RelationKind::rear: return "behind me";
        case RelationKind::left: return "to my left";
        case RelationKind::right: return "to my right";
        case RelationKind::leftlane: return "on my left lane";
        case RelationKind::rightlane: return "on my right lane";
        case RelationKind::samelane: return "in my lane";
        case RelationKind::road: return "on the road";
        case RelationKind::surrounding: return "around me";
    }
    return "around me";
}

NumericResult QAPair::truth() const { return answer_from_json(task, answer, matched_ids); }

json to_json(const QAPair& qa) {
    return json{{"question", qa.question},
                {"answer", qa.answer},
                {"meta",
                 {{"scene_id", qa.scene_id},
                  {"ego_id", qa.ego_id},
                  {"task", task_number(qa.task)},
                  {"template_id", qa.template_id},
                  {"hop", std::string(to_string(qa.hop))},
                  {"params", to_json(qa.params)},
                  {"matched_ids", qa.matched_ids}}}};
}

QAPair qa_from_json(const json& j) {
    QAPair qa;
    qa.question = j.at("question").get<std::string>();
    qa.answer = j.at("answer");
    const json& meta = j.at("meta");
    qa.scene_id = meta.at("scene_id").get<std::int64_t>();
    qa.ego_id = meta.at("ego_id").get<std::string>();
    const auto task = task_from_number(meta.at("task").get<long long>());
    if (!task) {
        throw Error("qa pair: task out of range");
    }
    qa.task = *task;
    qa.template_id = meta.value("template_id", "");
    qa.hop = parse_hop(meta.value("hop", "ego_centric")).value_or(Hop::ego_centric);
    qa.params = params_from_json(meta.at("params"));
    qa.matched_ids = meta.value("matched_ids", std::vector<std::string>{});
    return qa;
}

std::vector<QAPair> parse_dataset(std::string_view jsonl) {
    std::vector<QAPair> out;
    for_each_line(jsonl, [&](std::string_view line, std::size_t line_no) {
        try {
            out.push_back(qa_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(fmt::format("dataset line {}: {}", line_no, e.what()));
        }
    });
    return out;
}

std::vector<QAPair> load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

std::string render_dataset(const std::vector<QAPair>& pairs) {
    std::string out;
    for (const QAPair& qa : pairs) {
        out += to_json(qa).dump();
        out += '\n';
    }
    return out;
}

namespace {

struct Referent {
    const ObjectInfo* object;
    double distance;
};

using AttributeLookup = std::function<const AttributeValue&(const std::string& id, const char* name)>;

double number(const AttributeValue& v) { return std::get<double>(v); }
const std::string& text(const AttributeValue& v) { return std::get<std::string>(v); }

json answer_for(TaskId task, const std::vector<Referent>& refs, const AttributeLookup& lookup) {
    switch (task) {
        case TaskId::count: return static_cast<long long>(refs.size());
        case TaskId::existence: return !refs.empty();
        default: break;
    }
    json out = json::array();
    for (const Referent& r : refs) {
        const std::string& id = r.object->id;
        switch (task) {
            case TaskId::velocity: out.push_back(number(lookup(id, "v"))); break;
            case TaskId::acceleration: out.push_back(number(lookup(id, "a"))); break;
            case TaskId::heading: out.push_back(number(lookup(id, "h"))); break;
            case TaskId::color: out.push_back(text(lookup(id, "co"))); break;
            case TaskId::classification: out.push_back(text(lookup(id, "ty"))); break;
            case TaskId::status: out.push_back(text(lookup(id, "sg"))); break;
            case TaskId::size:
                out.push_back({number(lookup(id, "le")), number(lookup(id, "wi")), number(lookup(id, "he"))});
                break;
            case TaskId::distance: out.push_back(r.distance); break;
            default: break;
        }
    }
    return out;
}

bool attributes_match(const ObjectInfo& o, const QueryParams& p) {
    return (!p.vtype || o.ty == *p.vtype) && (!p.color || o.co == *p.color);
}

std::vector<Referent> graph_referents(const ERGraph& g, const QueryParams& p) {
    std::vector<Referent> out;
    for (const GraphEdge& e : g.edges) {
        if (e.satisfies(p.relation) && attributes_match(e.object, p)) {
            out.push_back({&e.object, e.distance});
        }
    }
    return out;
}

std::vector<Referent> road_referents(const LinguisticScene& ls, const ObjectInfo& ego, const QueryParams& p) {
    std::vector<Referent> out;
    for (const ObjectInfo& o : ls.objects) {
        if (o.id != ego.id && o.rd == *p.road && attributes_match(o, p)) {
            out.push_back({&o, planar_distance(ego, o)});
        }
    }
    std::sort(out.begin(), out.end(), [](const Referent& a, const Referent& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.object->id < b.object->id;
    });
    return out;
}

/// Every slot filling of `tmpl` whose referent set is empty.
std::vector<QueryParams> negative_fillings(const QuestionTemplate& tmpl, const std::vector<QueryParams>& bases,
                                           const std::function<bool(const QueryParams&)>& has_referent) {
    std::vector<QueryParams> out;
    std::vector<std::optional<VehicleType>> types = {std::nullopt};
    std::vector<std::optional<Color>> colors = {std::nullopt};
    if (tmpl.required_slots.contains("type")) {
        types.assign(kVehicleTypes.begin(), kVehicleTypes.end());
    }
    if (tmpl.required_slots.contains("color")) {
        colors.assign(kColors.begin(), kColors.end());
    }
    for (const QueryParams& base : bases) {
        for (const auto& ty : types) {
            for (const auto& co : colors) {
                QueryParams p = base;
                p.vtype = ty;
                p.color = co;
                if (!has_referent(p)) {
                    out.push_back(p);
                }
            }
        }
    }
    return out;
}

std::string fill_text(const QuestionTemplate& tmpl, const QueryParams& p) {
    std::string q = tmpl.text;
    if (p.vtype) replace_all(q, "<type>", to_string(*p.vtype));
    if (p.color) replace_all(q, "<color>", to_string(*p.color));
    if (p.road) replace_all(q, "<road>", *p.road);
    replace_all(q, "<relation>", relation_phrase(p.relation));
    return q;
}

}  // namespace

QAPair instantiate(const QuestionTemplate& tmpl, const AERGraph& aer, const LinguisticScene& ls, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const ERGraph& g = aer.base();
    const ObjectInfo& ego = g.ego;
    const bool want_type = tmpl.required_slots.contains("type");
    const bool want_color = tmpl.required_slots.contains("color");
    const bool negative = tmpl.task == TaskId::existence && uniform01(rng) < 0.5;

    QueryParams params;
    std::vector<Referent> refs;
    AttributeLookup lookup;
    std::map<std::string, AttributeMap> scene_attributes;

    if (tmpl.hop == Hop::ego_centric) {
        const GraphEdge* seed_edge = g.edge(aer.masked().entity);
        if (seed_edge == nullptr) {
            throw InstantiationError(fmt::format("template {}: masked entity '{}' is not related to the ego",
                                                 tmpl.id, aer.masked().entity));
        }
        if (want_type) params.vtype = seed_edge->object.ty;
        if (want_color) params.color = seed_edge->object.co;
        if (tmpl.required_slots.contains("relation")) {
            std::vector<RelationKind> options = {seed_edge->spatial};
            if (seed_edge->lane) {
                options.push_back(*seed_edge->lane);
            }
            options.push_back(RelationKind::surrounding);
            params.relation = options[uniform_index(rng, options.size())];
        }
        if (negative) {
            std::vector<QueryParams> bases;
            for (RelationKind k : kEgoRelations) {
                if (tmpl.required_slots.contains("relation") || k == RelationKind::surrounding) {
                    QueryParams b;
                    b.relation = k;
                    bases.push_back(b);
                }
            }
            const auto empties = negative_fillings(tmpl, bases, [&](const QueryParams& p) {
                return !graph_referents(g, p).empty();
            });
            if (!empties.empty()) {
                params = empties[uniform_index(rng, empties.size())];
            }
        }
        refs = graph_referents(g, params);
        lookup = [&aer](const std::string& id, const char* name) -> const AttributeValue& {
            return aer.attribute(id, name);
        };
    } else {
        std::vector<const ObjectInfo*> candidates;
        for (const ObjectInfo& o : ls.objects) {
            if (o.id != ego.id) {
                candidates.push_back(&o);
            }
        }
        if (candidates.empty()) {
            throw InstantiationError(fmt::format("template {}: scene has no object besides the ego", tmpl.id));
        }
        const ObjectInfo& seed_object = *candidates[uniform_index(rng, candidates.size())];
        params.relation = RelationKind::road;
        params.road = seed_object.rd;
        if (want_type) params.vtype = seed_object.ty;
        if (want_color) params.color = seed_object.co;
        if (negative) {
            std::vector<QueryParams> bases;
            for (const RoadSummary& road : ls.roads) {
                QueryParams b;
                b.relation = RelationKind::road;
                b.road = road.id;
                bases.push_back(b);
            }
            const auto empties = negative_fillings(tmpl, bases, [&](const QueryParams& p) {
                return !road_referents(ls, ego, p).empty();
            });
            if (!empties.empty()) {
                params = empties[uniform_index(rng, empties.size())];
            }
        }
        refs = road_referents(ls, ego, params);
        for (const Referent& r : refs) {
            scene_attributes.emplace(r.object->id, attributes_of(*r.object));
        }
        lookup = [&scene_attributes](const std::string& id, const char* name) -> const AttributeValue& {
            return scene_attributes.at(id).at(name);
        };
    }

    if (refs.empty() && tmpl.task != TaskId::existence && tmpl.task != TaskId::count) {
        throw InstantiationError(fmt::format("template {}: no referent", tmpl.id));
    }
    QAPair qa;
    qa.question = fill_text(tmpl, params);
    qa.answer = answer_for(tmpl.task, refs, lookup);
    qa.scene_id = ls.scene_id;
    qa.ego_id = ego.id;
    qa.task = tmpl.task;
    qa.template_id = tmpl.id;
    qa.hop = tmpl.hop;
    qa.params = params;
    for (const Referent& r : refs) {
        qa.matched_ids.push_back(r.object->id);
    }
    return qa;
}

std::string DatasetReport::render() const {
    std::string out = fmt::format("{:<20} {:>8} {:>10}\n", "task", "pairs", "shortfall");
    std::size_t total = 0;
    std::size_t total_short = 0;
    for (TaskId task : kAllTasks) {
        const auto n = per_task.contains(task) ? per_task.at(task) : 0;
        const auto s = shortfall.contains(task) ? shortfall.at(task) : 0;
        total += n;
        total_short += s;
        out += fmt::format("{:<20} {:>8} {:>10}\n", fmt::format("({}) {}", task_number(task), to_string(task)), n, s);
    }
    out += fmt::format("{:<20} {:>8} {:>10}\n", "total", total, total_short);
    return out;
}

std::vector<QAPair> generate_dataset(const std::vector<LinguisticScene>& scenes, const TemplateSet& templates,
                                     const DatasetOptions& options, DatasetReport* report) {
    if (options.n == 0) {
        throw Error("generate_dataset: n must be at least 1");
    }
    if (templates.empty()) {
        throw Error("generate_dataset: no templates");
    }
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (!scenes[i].av_ids().empty()) {
            usable.push_back(i);
        }
    }
    if (usable.empty()) {
        throw Error("generate_dataset: no scene contains an AV");
    }
    std::mt19937_64 rng(options.seed);
    DatasetReport local;
    std::vector<QAPair> out;
    out.reserve(options.n);
    for (std::size_t i = 0; i < options.n; ++i) {
        bool done = false;
        for (int attempt = 0; attempt < options.retry_budget && !done; ++attempt) {
            const LinguisticScene& ls = scenes[usable[uniform_index(rng, usable.size())]];
            const auto avs = ls.av_ids();
            const std::string& ego = avs[uniform_index(rng, avs.size())];
            const QuestionTemplate& tmpl = templates[uniform_index(rng, templates.size())];
            const std::uint64_t pair_seed = rng();
            try {
                ERGraph g = build_graph(ls, ego);
                MaskedAttribute mask{ego, "id"};
                if (tmpl.hop == Hop::ego_centric) {
                    if (g.edges.empty()) {
                        throw InstantiationError("ego has no related objects");
                    }
                    const std::string attr(task_attribute(tmpl.task));
                    mask = {g.edges[uniform_index(rng, g.edges.size())].object.id, attr.empty() ? "id" : attr};
                }
                QAPair qa = instantiate(tmpl, AERGraph(std::move(g), mask), ls, pair_seed);
                if (options.prefix_on) {
                    qa.question = std::string(kRadiusPrefix) + qa.question;
                }
                ++local.per_task[qa.task];
                out.push_back(std::move(qa));
                done = true;
            } catch (const InstantiationError&) {
                ++local.shortfall[tmpl.task];
            }
        }
        if (!done) {
            if (report != nullptr) {
                *report = local;
            }
            throw GenerationError(
                fmt::format("generate_dataset: pair {} not instantiable after {} draws\n{}", i, options.retry_budget,
                            local.render()),
                local);
        }
    }
    if (report != nullptr) {
        *report = std::move(local);
    }
    return out;
}

}  // namespace vrc
