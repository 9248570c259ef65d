#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <fmt/format.h>

#include "vrc/llm.hpp"

namespace vrc {

using nlohmann::json;

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::classification: return "classification";
        case Stage::extraction: return "extraction";
        case Stage::toolbox: return "toolbox";
        case Stage::enhancement: return "enhancement";
        case Stage::osp: return "osp";
    }
    return "classification";
}

namespace {

std::optional<Stage> parse_stage(std::string_view s) {
    for (Stage st : {Stage::classification, Stage::extraction, Stage::toolbox, Stage::enhancement, Stage::osp}) {
        if (to_string(st) == s) {
            return st;
        }
    }
    return std::nullopt;
}

bool contains(std::string_view text, std::string_view needle) { return text.find(needle) != std::string_view::npos; }

bool contains_any(std::string_view text, std::initializer_list<std::string_view> needles) {
    return std::any_of(needles.begin(), needles.end(), [&](std::string_view n) { return contains(text, n); });
}

std::vector<std::string> words_of(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string fmt_number(double v) { return fmt::format("{}", v); }

std::string compass(double h) {
    static constexpr std::array<const char*, 8> names = {"north",     "north-east", "east",     "south-east",
                                                         "south", "south-west", "west", "north-west"};
    const auto i = static_cast<std::size_t>(std::lround(std::fmod(h, 360.0) / 45.0)) % 8;
    return names[i];
}

}  // namespace

std::string normalize_question(std::string_view question) {
    std::string q = lower(question);
    const std::string prefix = lower(kRadiusPrefix);
    if (q.starts_with(prefix)) {
        q.erase(0, prefix.size());
    }
    std::string out;
    for (char c : q) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty() && out.back() != ' ') out += ' ';
        } else {
            out += c;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

AnswerKey AnswerKey::from_dataset(const std::vector<QAPair>& pairs) {
    AnswerKey key;
    for (const QAPair& qa : pairs) {
        key.add(qa.question, {qa.task, qa.params});
    }
    return key;
}

void AnswerKey::add(std::string_view question, Entry entry) { entries_.insert_or_assign(normalize_question(question), entry); }

const AnswerKey::Entry* AnswerKey::find(std::string_view question) const {
    auto it = entries_.find(normalize_question(question));
    return it == entries_.end() ? nullptr : &it->second;
}

TaskId heuristic_classify(std::string_view question) {
    const std::string q = normalize_question(question);
    if (contains_any(q, {"how far", "distance", "meters away", "how many meters", "how close"})) return TaskId::distance;
    if (contains_any(q, {"how many", "number of", "count", "crowded", "dense", "blocking"})) return TaskId::count;
    if (contains_any(q, {"signal", "blinker", "indicator", "lights"})) return TaskId::status;
    if (contains_any(q, {"accelerat", "decelerat", "speeding up", "slowing down"})) return TaskId::acceleration;
    if (contains_any(q, {"speed", "how fast", "velocity", "km/h"})) return TaskId::velocity;
    if (contains_any(q, {"heading", "direction", "toward"})) return TaskId::heading;
    if (contains_any(q, {"color", "colour"})) return TaskId::color;
    if (contains_any(q, {"size", "length", "width", "height", "how big", "how large", "dimension", "how long"}))
        return TaskId::size;
    if (contains_any(q, {"type", "kind", "what vehicle", "which vehicle"})) return TaskId::classification;
    return TaskId::existence;
}

QueryParams heuristic_extract(std::string_view question, const std::vector<std::string>& roads) {
    const std::string q = normalize_question(question);
    QueryParams p;
    for (const std::string& w : words_of(q)) {
        if (!p.vtype) {
            if (w == "car" || w == "cars") p.vtype = VehicleType::car;
            else if (w == "truck" || w == "trucks") p.vtype = VehicleType::truck;
            else if (w == "bus" || w == "buses") p.vtype = VehicleType::bus;
            else if (w == "motorcycle" || w == "motorcycles" || w == "motorbike") p.vtype = VehicleType::motorcycle;
        }
        if (!p.color) {
            p.color = parse_color(w == "grey" ? "gray" : w);
        }
    }
    for (const std::string& road : roads) {
        if (!road.empty() && contains(q, lower(road))) {
            p.relation = RelationKind::road;
            p.road = road;
            return p;
        }
    }
    if (contains(q, "left lane")) p.relation = RelationKind::leftlane;
    else if (contains(q, "right lane")) p.relation = RelationKind::rightlane;
    else if (contains_any(q, {"my lane", "same lane"})) p.relation = RelationKind::samelane;
    else if (contains_any(q, {"in front", "ahead"})) p.relation = RelationKind::front;
    else if (contains_any(q, {"behind", "rear"})) p.relation = RelationKind::rear;
    else if (contains_any(q, {"my left", "left of me", "left side"})) p.relation = RelationKind::left;
    else if (contains_any(q, {"my right", "right of me", "right side"})) p.relation = RelationKind::right;
    return p;
}

std::pair<std::string, std::string> describe_result(const NumericResult& r) {
    const auto& ids = r.matched_ids;
    if (r.task == TaskId::count) {
        const long long n = r.values.empty() ? 0 : std::llround(r.values[0]);
        return {fmt::format("There {} {} matching vehicle{}.", n == 1 ? "is" : "are", n, n == 1 ? "" : "s"),
                n > 3 ? "Traffic is dense here; keep extra distance and avoid unnecessary lane changes."
                      : "Traffic is light; keep a steady speed and stay attentive."};
    }
    if (r.task == TaskId::existence) {
        const bool yes = !r.values.empty() && r.values[0] != 0.0;
        return {yes ? "Yes, there is a matching vehicle." : "No, there is no matching vehicle.",
                yes ? "Check your mirrors before maneuvering near it." : "The way looks clear, but keep checking before you move."};
    }
    if (ids.empty()) {
        return {"No matching vehicle was found.", "Keep monitoring the surroundings."};
    }
    std::vector<std::string> parts;
    std::string advice = "Keep a safe distance and stay attentive.";
    const std::size_t n = r.stride > 0 ? r.values.size() / static_cast<std::size_t>(r.stride) : 0;
    for (std::size_t i = 0; i < n && i < ids.size(); ++i) {
        const double v = r.values[i * static_cast<std::size_t>(r.stride)];
        const std::string& id = ids[i];
        switch (r.task) {
            case TaskId::velocity:
                parts.push_back(fmt::format("{} is moving at {} m/s ({:.1f} km/h)", id, fmt_number(v), v * 3.6));
                break;
            case TaskId::acceleration:
                parts.push_back(fmt::format("{} is {} at {} m/s^2", id, v < 0 ? "decelerating" : "accelerating",
                                            fmt_number(std::abs(v))));
                if (v < -1.0) advice = "A nearby vehicle is braking; be ready to slow down.";
                break;
            case TaskId::heading:
                parts.push_back(fmt::format("{} is heading {} degrees ({})", id, fmt_number(v), compass(v)));
                break;
            case TaskId::color:
                parts.push_back(fmt::format("{} is {}", id, to_string(kColors.at(static_cast<std::size_t>(v)))));
                break;
            case TaskId::classification:
                parts.push_back(fmt::format("{} is a {}", id, to_string(kVehicleTypes.at(static_cast<std::size_t>(v)))));
                break;
            case TaskId::size:
                parts.push_back(fmt::format("{} measures {} m long, {} m wide and {} m high", id, fmt_number(v),
                                            fmt_number(r.values[i * 3 + 1]), fmt_number(r.values[i * 3 + 2])));
                if (v > 8.0) advice = "It is a long vehicle; allow extra room when passing.";
                break;
            case TaskId::status: {
                const Signal s = kSignals.at(static_cast<std::size_t>(v));
                if (s == Signal::none) {
                    parts.push_back(fmt::format("{} shows no signal", id));
                } else if (s == Signal::brake) {
                    parts.push_back(fmt::format("{} has its brake lights on", id));
                    advice = "A vehicle is braking; be ready to slow down.";
                } else {
                    parts.push_back(fmt::format("{} has its {} turn signal on", id, to_string(s)));
                    advice = "A vehicle intends to change lanes; give it room.";
                }
                break;
            }
            case TaskId::distance:
                parts.push_back(fmt::format("{} is {} m away", id, fmt_number(v)));
                if (v < 20.0) advice = "It is close; increase your following distance.";
                break;
            default: break;
        }
    }
    std::string text;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        text += (i ? "; " : "") + parts[i];
    }
    text += '.';
    text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    return {text, advice};
}

std::string final_line(const NumericResult& r) {
    std::string value;
    switch (r.task) {
        case TaskId::count: value = fmt::format("{}", r.values.empty() ? 0 : std::llround(r.values[0])); break;
        case TaskId::existence: value = !r.values.empty() && r.values[0] != 0.0 ? "yes" : "no"; break;
        default: {
            const json answer = answer_to_json(r);
            std::vector<std::string> items;
            for (const json& a : answer) {
                if (a.is_string()) {
                    const std::string v = a.get<std::string>();
                    items.push_back(r.task == TaskId::status && v == "none" ? "no signal" : v);
                } else if (a.is_array()) {
                    items.push_back(fmt::format("{} x {} x {}", fmt_number(a[0].get<double>()),
                                                fmt_number(a[1].get<double>()), fmt_number(a[2].get<double>())));
                } else {
                    items.push_back(fmt_number(a.get<double>()));
                }
            }
            value = items.empty() ? "none" : fmt::format("{}", fmt::join(items, ", "));
        }
    }
    return "FINAL: " + value;
}

namespace {

std::vector<std::string> road_names(const RequestContext& ctx) {
    std::vector<std::string> out = ctx.roads;
    if (out.empty() && ctx.scene != nullptr) {
        for (const RoadSummary& r : ctx.scene->roads) out.push_back(r.id);
    }
    return out;
}

}  // namespace

std::string MockOracleBackend::complete(const ChatRequest& request) {
    const RequestContext& ctx = request.context;
    const AnswerKey::Entry* hit = key_.find(ctx.question);
    switch (ctx.stage) {
        case Stage::classification: {
            const TaskId t = hit ? hit->task : heuristic_classify(ctx.question);
            return json{{"task", task_number(t)}}.dump();
        }
        case Stage::extraction: {
            const QueryParams p = hit ? hit->params : heuristic_extract(ctx.question, road_names(ctx));
            return to_json(p).dump();
        }
        case Stage::enhancement: {
            if (!ctx.numeric) {
                throw BackendError(BackendError::Kind::protocol, "enhancement request carries no result");
            }
            const auto [answer, advice] = describe_result(*ctx.numeric);
            return json{{"answer", answer}, {"advice", advice}}.dump();
        }
        case Stage::osp: {
            if (ctx.scene == nullptr || ctx.scene->find(ctx.ego_id) == nullptr) {
                return "I cannot tell from the scene.\nFINAL: unknown";
            }
            const TaskId t = hit ? hit->task : heuristic_classify(ctx.question);
            const QueryParams p = hit ? hit->params : heuristic_extract(ctx.question, road_names(ctx));
            const NumericResult r = execute(t, p, *ctx.scene, ctx.ego_id);
            return describe_result(r).first + "\n" + final_line(r);
        }
        case Stage::toolbox: break;
    }
    throw BackendError(BackendError::Kind::protocol, "mock oracle: unsupported stage");
}

MockNoisyBackend::MockNoisyBackend(AnswerKey key, double classification_error_rate, double extraction_error_rate,
                                   std::uint64_t seed)
    : oracle_(std::move(key)),
      classification_error_rate_(classification_error_rate),
      extraction_error_rate_(extraction_error_rate),
      seed_(seed) {
    for (double p : {classification_error_rate, extraction_error_rate}) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error("mock_noisy: error rates must lie in [0, 1]");
        }
    }
}

std::string MockNoisyBackend::complete(const ChatRequest& request) {
    const RequestContext& ctx = request.context;
    std::string reply = oracle_.complete(request);
    const std::uint64_t h = splitmix(fnv1a(normalize_question(ctx.question), fnv1a(to_string(ctx.stage), seed_)));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    const std::uint64_t pick = splitmix(h);
    if (ctx.stage == Stage::classification && u < classification_error_rate_) {
        const int truth = json::parse(reply).at("task").get<int>();
        const int wrong = (truth - 1 + 1 + static_cast<int>(pick % 9)) % 10 + 1;
        return json{{"task", wrong}}.dump();
    }
    if (ctx.stage == Stage::extraction && u < extraction_error_rate_) {
        QueryParams p = params_from_json(json::parse(reply));
        static constexpr std::array<RelationKind, 8> kinds = {
            RelationKind::front,    RelationKind::rear,      RelationKind::left,     RelationKind::right,
            RelationKind::leftlane, RelationKind::rightlane, RelationKind::samelane, RelationKind::surrounding};
        RelationKind next = kinds[pick % kinds.size()];
        if (next == p.relation) next = kinds[(pick + 1) % kinds.size()];
        p.relation = next;
        p.road.reset();
        return to_json(p).dump();
    }
    return reply;
}

std::vector<MockScriptedBackend::Entry> MockScriptedBackend::parse_transcript(const json& j) {
    const json& list = j.is_object() ? j.at("transcript") : j;
    std::vector<Entry> out;
    for (const json& e : list) {
        Entry entry;
        if (e.contains("stage")) {
            entry.stage = parse_stage(e.at("stage").get<std::string>());
            if (!entry.stage) throw Error(fmt::format("transcript: unknown stage {}", e.at("stage").dump()));
        }
        if (e.contains("match")) entry.match = e.at("match").get<std::string>();
        entry.response = e.value("response", "");
        if (e.contains("error")) {
            const std::string kind = e.at("error").get<std::string>();
            if (kind == "timeout") entry.error = BackendError::Kind::timeout;
            else if (kind == "unreachable") entry.error = BackendError::Kind::unreachable;
            else entry.error = BackendError::Kind::protocol;
        }
        out.push_back(std::move(entry));
    }
    return out;
}

std::string MockScriptedBackend::complete(const ChatRequest& request) {
    const std::string& last = request.messages.empty() ? std::string() : request.messages.back().content;
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < transcript_.size(); ++i) {
        const Entry& e = transcript_[i];
        if (used_[i] || (e.stage && *e.stage != request.context.stage) ||
            (e.match && last.find(*e.match) == std::string::npos)) {
            continue;
        }
        used_[i] = true;
        if (e.error) {
            throw BackendError(*e.error, fmt::format("scripted {} failure", *e.error == BackendError::Kind::timeout
                                                                                ? "timeout"
                                                                                : "backend"));
        }
        return e.response;
    }
    throw BackendError(BackendError::Kind::exhausted, "scripted backend: no transcript entry matches the request");
}

std::size_t MockScriptedBackend::remaining() const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(std::count(used_.begin(), used_.end(), false));
}

std::unique_ptr<LlmBackend> make_backend(const json& config, const AnswerKey& key) {
    const std::string kind = config.value("kind", "");
    if (kind == "mock_oracle") {
        return std::make_unique<MockOracleBackend>(key);
    }
    if (kind == "mock_noisy") {
        return std::make_unique<MockNoisyBackend>(key, config.value("classification_error_rate", 0.0),
                                                  config.value("extraction_error_rate", 0.0),
                                                  config.value("seed", std::uint64_t{1}));
    }
    if (kind == "mock_scripted") {
        if (config.contains("transcript_file")) {
            std::ifstream in(config.at("transcript_file").get<std::string>());
            if (!in) throw NotFoundError("mock_scripted: cannot open transcript_file");
            return std::make_unique<MockScriptedBackend>(MockScriptedBackend::parse_transcript(json::parse(in)));
        }
        return std::make_unique<MockScriptedBackend>(MockScriptedBackend::parse_transcript(config.at("transcript")));
    }
    if (kind == "remote") {
        RemoteBackend::Config c;
        c.endpoint = config.at("endpoint").get<std::string>();
        c.model = config.at("model").get<std::string>();
        c.timeout_s = config.value("timeout_s", 120.0);
        c.concurrency = config.value("concurrency", std::size_t{1});
        c.api_key = config.value("api_key", "");
        if (c.api_key.empty() && config.contains("api_key_env")) {
            if (const char* v = std::getenv(config.at("api_key_env").get<std::string>().c_str())) c.api_key = v;
        }
        return std::make_unique<RemoteBackend>(std::move(c));
    }
    throw Error(fmt::format("backend config: unknown kind '{}'", kind));
}

}  // namespace vrc
