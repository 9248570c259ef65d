#include "vrc/cop.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace vrc {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFoundError(fmt::format("prompt file '{}' not found", path));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

double ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::string roads_line(const LinguisticScene& ls) {
    std::vector<std::string> parts;
    for (const RoadSummary& r : ls.roads) {
        parts.push_back(fmt::format("{} (lanes {})", r.id, fmt::join(r.lanes, ", ")));
    }
    return parts.empty() ? "none" : fmt::format("{}", fmt::join(parts, "; "));
}

json objects_json(std::vector<ObjectInfo> objects) {
    LinguisticScene sub;
    sub.objects = std::move(objects);
    return json::parse(render_ls(sub)).at("objects");
}

}  // namespace

std::string_view to_string(BackendError::Kind k) {
    switch (k) {
        case BackendError::Kind::timeout: return "timeout";
        case BackendError::Kind::unreachable: return "unreachable";
        case BackendError::Kind::protocol: return "protocol";
        case BackendError::Kind::exhausted: return "exhausted";
    }
    return "protocol";
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
    const auto h = text.find("[head]");
    const auto b = text.find("[body]");
    if (h == std::string_view::npos || b == std::string_view::npos || b < h) {
        throw Error("prompt template: expected a [head] section followed by a [body] section");
    }
    PromptTemplate t;
    t.head = trim(text.substr(h + 6, b - h - 6));
    t.body = trim(text.substr(b + 6));
    if (t.head.empty() || t.body.empty()) {
        throw Error("prompt template: head and body must be non-empty");
    }
    return t;
}

std::string fill_slots(std::string_view text, const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            return out;
        }
        const auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw Error("prompt template: unclosed '{{' slot");
        }
        const std::string name(text.substr(open + 2, close - open - 2));
        auto it = values.find(name);
        if (it == values.end()) {
            throw Error(fmt::format("prompt template: no value for slot '{}'", name));
        }
        out.append(text.substr(pos, open - pos));
        out.append(it->second);
        pos = close + 2;
    }
}

std::vector<ChatMessage> PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    return {{"system", fill_slots(head, values)}, {"user", fill_slots(body, values)}};
}

PromptSet PromptSet::load(const std::string& dir) {
    PromptSet p;
    p.p_tc = PromptTemplate::parse(read_file(dir + "/p_tc.txt"));
    p.p_pe = PromptTemplate::parse(read_file(dir + "/p_pe.txt"));
    p.p_ce = PromptTemplate::parse(read_file(dir + "/p_ce.txt"));
    p.osp = PromptTemplate::parse(read_file(dir + "/osp_base.txt"));
    p.existence_rule = trim(read_file(dir + "/existence_rule.txt"));
    p.osp_fields = trim(read_file(dir + "/osp_fields.txt"));
    p.osp_rules = trim(read_file(dir + "/osp_rules.txt"));
    p.osp_examples = trim(read_file(dir + "/osp_examples.txt"));
    return p;
}

std::optional<json> find_json_object(std::string_view reply) {
    std::string text(reply);
    for (auto t = text.find("<think>"); t != std::string::npos; t = text.find("<think>")) {
        const auto end = text.find("</think>", t);
        text.erase(t, end == std::string::npos ? std::string::npos : end + 8 - t);
    }
    for (auto open = text.find('{'); open != std::string::npos; open = text.find('{', open + 1)) {
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = open; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (c == '\\') ++i;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                json j = json::parse(text.substr(open, i - open + 1), nullptr, false);
                if (!j.is_discarded() && j.is_object()) return j;
                break;
            }
        }
    }
    return std::nullopt;
}

std::vector<std::string> road_ids(const LinguisticScene& ls) {
    std::vector<std::string> out;
    for (const RoadSummary& r : ls.roads) out.push_back(r.id);
    return out;
}

ChatRequest CopPipeline::tc_request(const std::string& question) const {
    ChatRequest r;
    r.messages = prompts_.p_tc.render(
        {{"question", question},
         {"existence_rule", prompts_.restrictive_rule_on ? " " + prompts_.existence_rule : std::string()}});
    r.context.stage = Stage::classification;
    r.context.question = question;
    return r;
}

ChatRequest CopPipeline::pe_request(const std::string& question, const std::vector<std::string>& roads) const {
    ChatRequest r;
    r.messages = prompts_.p_pe.render(
        {{"question", question}, {"roads", roads.empty() ? "none" : fmt::format("{}", fmt::join(roads, ", "))}});
    r.context.stage = Stage::extraction;
    r.context.question = question;
    r.context.roads = roads;
    return r;
}

ChatRequest CopPipeline::ce_request(const std::string& question, const NumericResult& numeric,
                                    const LinguisticScene& ls, const std::string& ego_id) const {
    std::vector<ObjectInfo> matched;
    for (const std::string& id : numeric.matched_ids) {
        if (const ObjectInfo* o = ls.find(id)) matched.push_back(*o);
    }
    std::vector<ObjectInfo> ego;
    if (const ObjectInfo* e = ls.find(ego_id)) ego.push_back(*e);
    const json ego_json = objects_json(std::move(ego));
    ChatRequest r;
    r.messages = prompts_.p_ce.render({{"question", question},
                                       {"task_name", std::string(to_string(numeric.task))},
                                       {"numeric", answer_to_json(numeric).dump()},
                                       {"objects", objects_json(std::move(matched)).dump()},
                                       {"ego", ego_json.empty() ? "null" : ego_json[0].dump()}});
    r.context.stage = Stage::enhancement;
    r.context.question = question;
    r.context.ego_id = ego_id;
    r.context.scene = &ls;
    r.context.task = numeric.task;
    r.context.numeric = numeric;
    return r;
}

json CopPipeline::ask_json(ChatRequest request, std::string_view format_hint,
                           const std::function<void(const json&)>& check) const {
    const Stage stage = request.context.stage;
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string reply;
        try {
            reply = backend_.complete(request);
        } catch (const BackendError& e) {
            throw StageError(stage, fmt::format("{} stage: {}", to_string(stage), e.what()), e.kind);
        }
        if (auto j = find_json_object(reply)) {
            try {
                check(*j);
                return *j;
            } catch (const std::exception& e) {
                problem = e.what();
            }
        } else {
            problem = "no JSON object in reply";
        }
        request.messages.push_back({"assistant", reply});
        request.messages.push_back(
            {"user", fmt::format("Your previous reply could not be used ({}). Reply again with only the JSON "
                                 "object {} and nothing else.",
                                 problem, format_hint)});
    }
    throw StageError(stage, fmt::format("{} stage: unparseable reply after repair: {}", to_string(stage), problem));
}

TaskId CopPipeline::classify(const std::string& question) const {
    if (trim(question).empty()) throw Error("question is empty");
    std::optional<TaskId> task;
    ask_json(tc_request(question), R"({"task": <integer 1-10>})", [&](const json& j) {
        const json& t = j.at("task");
        if (t.is_number_integer()) task = task_from_number(t.get<long long>());
        else if (t.is_string()) {
            const std::string s = t.get<std::string>();
            task = parse_task(s);
            if (!task && !s.empty() && std::all_of(s.begin(), s.end(), ::isdigit) && s.size() < 4)
                task = task_from_number(std::stoll(s));
        }
        if (!task) throw Error(fmt::format("task {} is not one of 1-10", t.dump()));
    });
    return *task;
}

QueryParams CopPipeline::extract(const std::string& question, const std::vector<std::string>& roads) const {
    if (trim(question).empty()) throw Error("question is empty");
    QueryParams p;
    ask_json(pe_request(question, roads), R"({"vtype": ..., "color": ..., "relation": ..., "road": ...})",
             [&](const json& j) { p = params_from_json(j); });
    return p;
}

std::pair<std::string, std::string> CopPipeline::enhance(const std::string& question, const NumericResult& numeric,
                                                         const LinguisticScene& ls, const std::string& ego_id) const {
    std::pair<std::string, std::string> out;
    ask_json(ce_request(question, numeric, ls, ego_id), R"({"answer": "...", "advice": "..."})", [&](const json& j) {
        out = {j.at("answer").get<std::string>(), j.at("advice").get<std::string>()};
    });
    return out;
}

CoPResult CopPipeline::answer(const std::string& question, const LinguisticScene& ls,
                              const std::string& ego_id) const {
    if (ls.find(ego_id) == nullptr) {
        throw NotFoundError(fmt::format("ego '{}' not in scene {}", ego_id, ls.scene_id));
    }
    CoPResult r;
    r.question = question;
    r.ego_id = ego_id;
    r.scene_id = ls.scene_id;
    auto fail = [&](Stage stage, const std::string& message, std::optional<BackendError::Kind> kind) {
        r.error = CoPResult::Failure{stage, message, kind};
        return r;
    };
    auto start = std::chrono::steady_clock::now();
    try {
        r.task = classify(question);
        r.timings.classification_ms = ms_since(start);

        start = std::chrono::steady_clock::now();
        r.params = extract(question, road_ids(ls));
        r.timings.extraction_ms = ms_since(start);
    } catch (const StageError& e) {
        (r.task ? r.timings.extraction_ms : r.timings.classification_ms) = ms_since(start);
        return fail(e.stage, e.what(), e.backend);
    } catch (const Error& e) {
        return fail(Stage::classification, e.what(), std::nullopt);
    }

    start = std::chrono::steady_clock::now();
    try {
        r.numeric = execute(*r.task, *r.params, ls, ego_id);
        r.timings.toolbox_ms = ms_since(start);
    } catch (const Error& e) {
        r.timings.toolbox_ms = ms_since(start);
        return fail(Stage::toolbox, fmt::format("toolbox stage: {}", e.what()), std::nullopt);
    }

    start = std::chrono::steady_clock::now();
    try {
        std::tie(r.semantic, r.advice) = enhance(question, *r.numeric, ls, ego_id);
        r.timings.enhancement_ms = ms_since(start);
    } catch (const StageError& e) {
        r.timings.enhancement_ms = ms_since(start);
        return fail(e.stage, e.what(), e.backend);
    }
    r.answer = r.advice.empty() ? r.semantic : r.semantic + " " + r.advice;
    return r;
}

json to_json(const CoPResult& r) {
    json j;
    j["question"] = r.question;
    j["ego_id"] = r.ego_id;
    j["scene_id"] = r.scene_id;
    j["task"] = r.task ? json(std::string(to_string(*r.task))) : json(nullptr);
    j["task_id"] = r.task ? json(task_number(*r.task)) : json(nullptr);
    j["params"] = r.params ? to_json(*r.params) : json(nullptr);
    if (r.numeric) {
        j["numeric"] = to_json(*r.numeric);
        j["result"] = answer_to_json(*r.numeric);
        j["matched_ids"] = r.numeric->matched_ids;
    } else {
        j["numeric"] = nullptr;
        j["result"] = nullptr;
        j["matched_ids"] = json::array();
    }
    j["semantic"] = r.semantic;
    j["advice"] = r.advice;
    j["answer"] = r.answer;
    j["timings"] = {{"classification_ms", r.timings.classification_ms},
                    {"extraction_ms", r.timings.extraction_ms},
                    {"toolbox_ms", r.timings.toolbox_ms},
                    {"enhancement_ms", r.timings.enhancement_ms}};
    if (r.error) {
        j["error"] = {{"stage", std::string(to_string(r.error->stage))},
                      {"message", r.error->message},
                      {"backend", r.error->backend ? json(std::string(to_string(*r.error->backend))) : json(nullptr)}};
    } else {
        j["error"] = nullptr;
    }
    return j;
}

ChatRequest osp_request(int variant, const std::string& question, const LinguisticScene& ls,
                        const std::string& ego_id, const PromptSet& prompts) {
    std::string extra;
    switch (variant) {
        case 1: break;
        case 2: extra = prompts.osp_fields; break;
        case 3: extra = prompts.osp_rules; break;
        case 4: extra = prompts.osp_examples; break;
        default: throw Error(fmt::format("OSP variant must be 1-4, got {}", variant));
    }
    ChatRequest r;
    r.messages = prompts.osp.render({{"roads", roads_line(ls)},
                                     {"ego_id", ego_id},
                                     {"scene", render_ls(ls)},
                                     {"variant_content", extra.empty() ? extra : extra + "\n"},
                                     {"question", question}});
    r.context.stage = Stage::osp;
    r.context.question = question;
    r.context.ego_id = ego_id;
    r.context.scene = &ls;
    return r;
}

std::string osp_answer(int variant, const std::string& question, const LinguisticScene& ls,
                       const std::string& ego_id, const PromptSet& prompts, LlmBackend& backend) {
    return backend.complete(osp_request(variant, question, ls, ego_id, prompts));
}

}  // namespace vrc
