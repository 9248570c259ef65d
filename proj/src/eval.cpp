#include "vrc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <regex>
#include <thread>

#include <fmt/format.h>

namespace vrc {

using nlohmann::json;

bool grade_numeric(const NumericResult& pred, const NumericResult& truth) {
    if (pred.values.size() != truth.values.size()) {
        return false;
    }
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        if (!(std::abs(pred.values[i] - truth.values[i]) <= 1e-6)) {
            return false;
        }
    }
    return true;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n.;\"'`*");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n.;\"'`*");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_items(const std::string& value) {
    static const std::regex sep(R"(\s*(?:,|;|\band\b)\s*)");
    std::vector<std::string> out;
    for (std::sregex_token_iterator it(value.begin(), value.end(), sep, -1), end; it != end; ++it) {
        std::string item = trim(it->str());
        if (!item.empty()) out.push_back(std::move(item));
    }
    return out;
}

std::vector<double> numbers_in(const std::string& text) {
    static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?)");
    std::vector<double> out;
    for (std::sregex_iterator it(text.begin(), text.end(), number), end; it != end; ++it) {
        out.push_back(std::stod(it->str()));
    }
    return out;
}

bool is_empty_answer(const std::string& v) { return v.empty() || v == "none" || v == "n/a" || v == "nothing"; }

template <typename Parse>
std::optional<std::string> first_word(const std::string& item, Parse parse) {
    static const std::regex word(R"([a-z]+)");
    for (std::sregex_iterator it(item.begin(), item.end(), word), end; it != end; ++it) {
        std::string w = it->str();
        if (w == "grey") w = "gray";
        if (parse(w)) return w;
        for (std::string_view suffix : {"es", "s"}) {
            if (w.size() > suffix.size() + 1 && w.ends_with(suffix)) {
                const std::string singular = w.substr(0, w.size() - suffix.size());
                if (parse(singular)) return singular;
            }
        }
    }
    return std::nullopt;
}

std::optional<json> final_value_as_answer(TaskId task, const std::string& value) {
    switch (task) {
        case TaskId::existence: {
            if (value.starts_with("yes") || value == "true" || value == "1") return json(true);
            if (value.starts_with("no") || value == "false" || value == "0") return json(false);
            return std::nullopt;
        }
        case TaskId::count: {
            if (is_empty_answer(value)) return json(0);
            const auto n = numbers_in(value);
            if (n.empty() || n[0] != std::floor(n[0]) || n[0] < 0) return std::nullopt;
            return json(static_cast<long long>(n[0]));
        }
        default: break;
    }
    json arr = json::array();
    if (is_empty_answer(value)) return arr;
    for (const std::string& item : split_items(value)) {
        if (task == TaskId::color || task == TaskId::classification || task == TaskId::status) {
            std::optional<std::string> w;
            if (task == TaskId::color) w = first_word(item, [](const std::string& s) { return parse_color(s).has_value(); });
            if (task == TaskId::classification)
                w = first_word(item, [](const std::string& s) { return parse_vehicle_type(s).has_value(); });
            if (task == TaskId::status) {
                w = item.find("no signal") != std::string::npos || item == "off"
                        ? std::optional<std::string>("none")
                        : first_word(item, [](const std::string& s) { return parse_signal(s).has_value(); });
            }
            if (!w) return std::nullopt;
            arr.push_back(*w);
        } else if (task == TaskId::size) {
            const auto n = numbers_in(item);
            if (n.size() != 3) return std::nullopt;
            arr.push_back(n);
        } else {
            const auto n = numbers_in(item);
            if (n.empty()) return std::nullopt;
            arr.push_back(n[0]);
        }
    }
    return arr;
}

}  // namespace

std::optional<NumericResult> parse_final_answer(TaskId task, std::string_view text) {
    const std::string t = lower(text);
    const auto at = t.rfind("final:");
    if (at == std::string::npos) {
        return std::nullopt;
    }
    std::string value = t.substr(at + 6);
    value = trim(value.substr(0, value.find('\n')));
    const auto answer = final_value_as_answer(task, value);
    if (!answer) {
        return std::nullopt;
    }
    try {
        return answer_from_json(task, *answer);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

PipelineSpec PipelineSpec::parse(std::string_view name) {
    if (name == "cop") return {Kind::cop, 0};
    if (name.size() == 4 && name.starts_with("osp") && name[3] >= '1' && name[3] <= '4') {
        return {Kind::osp, name[3] - '0'};
    }
    throw Error(fmt::format("unknown pipeline '{}' (expected cop or osp1..osp4)", name));
}

std::string PipelineSpec::name() const { return kind == Kind::cop ? "cop" : fmt::format("osp{}", variant); }

json to_json(const GradeRecord& r) {
    auto opt_task = [](const std::optional<TaskId>& t) { return t ? json(std::string(to_string(*t))) : json(nullptr); };
    return {{"index", r.index},
            {"scene_id", r.scene_id},
            {"ego_id", r.ego_id},
            {"template_id", r.template_id},
            {"question", r.question},
            {"task", std::string(to_string(r.task))},
            {"predicted_task", opt_task(r.predicted_task)},
            {"predicted", r.predicted ? answer_to_json(*r.predicted) : json(nullptr)},
            {"predicted_ids", r.predicted ? json(r.predicted->matched_ids) : json(nullptr)},
            {"task_correct", r.task_correct ? json(*r.task_correct) : json(nullptr)},
            {"numeric_correct", r.numeric_correct},
            {"timings",
             {{"classification_ms", r.timings.classification_ms},
              {"extraction_ms", r.timings.extraction_ms},
              {"toolbox_ms", r.timings.toolbox_ms},
              {"enhancement_ms", r.timings.enhancement_ms}}},
            {"total_ms", r.total_ms},
            {"error_stage", r.error_stage ? json(*r.error_stage) : json(nullptr)},
            {"error", r.error},
            {"reply", r.reply}};
}

GradeRecord grade_record_from_json(const json& j) {
    auto task_of = [](const json& v) {
        auto t = parse_task(v.get<std::string>());
        if (!t) throw Error(fmt::format("grade record: unknown task {}", v.dump()));
        return *t;
    };
    GradeRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.scene_id = j.at("scene_id").get<std::int64_t>();
    r.ego_id = j.at("ego_id").get<std::string>();
    r.template_id = j.value("template_id", "");
    r.question = j.at("question").get<std::string>();
    r.task = task_of(j.at("task"));
    if (!j.at("predicted_task").is_null()) r.predicted_task = task_of(j.at("predicted_task"));
    if (!j.at("predicted").is_null()) {
        const TaskId t = r.predicted_task.value_or(r.task);
        r.predicted = answer_from_json(t, j.at("predicted"), j.at("predicted_ids").get<std::vector<std::string>>());
    }
    if (!j.at("task_correct").is_null()) r.task_correct = j.at("task_correct").get<bool>();
    r.numeric_correct = j.at("numeric_correct").get<bool>();
    const json& t = j.at("timings");
    r.timings = {t.at("classification_ms").get<double>(), t.at("extraction_ms").get<double>(),
                 t.at("toolbox_ms").get<double>(), t.at("enhancement_ms").get<double>()};
    r.total_ms = j.at("total_ms").get<double>();
    if (!j.at("error_stage").is_null()) r.error_stage = j.at("error_stage").get<std::string>();
    r.error = j.value("error", "");
    r.reply = j.value("reply", "");
    return r;
}

LatencyStats latency_stats(std::vector<double> samples) {
    LatencyStats s;
    s.n = samples.size();
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
    auto rank = [&](double p) {
        const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
        return samples[std::max<std::size_t>(k, 1) - 1];
    };
    s.p50 = rank(0.50);
    s.p95 = rank(0.95);
    return s;
}

std::array<std::array<int, 10>, 10> pairwise_matrix(const TaskScores& a_q) {
    std::array<std::array<int, 10>, 10> m{};
    for (std::size_t i = 0; i < 10; ++i) {
        for (std::size_t j = 0; j < 10; ++j) {
            if (i == j || std::isnan(a_q[i]) || std::isnan(a_q[j])) continue;
            m[i][j] = (a_q[i] > a_q[j]) - (a_q[i] < a_q[j]);
        }
    }
    return m;
}

TaskBias pairwise_bias(const TaskScores& a_q) {
    const auto m = pairwise_matrix(a_q);
    TaskBias b{};
    for (std::size_t i = 0; i < 10; ++i) b[i] = std::accumulate(m[i].begin(), m[i].end(), 0);
    return b;
}

TaskBias extremal_bias(const TaskScores& a_q) {
    TaskBias b{};
    for (std::size_t i = 0; i < 10; ++i) {
        if (std::isnan(a_q[i])) continue;
        bool top = true;
        bool bottom = true;
        bool any = false;
        for (std::size_t j = 0; j < 10; ++j) {
            if (j == i || std::isnan(a_q[j])) continue;
            any = true;
            top = top && a_q[i] >= a_q[j];
            bottom = bottom && a_q[i] < a_q[j];
        }
        if (any) b[i] = top ? 1 : bottom ? -1 : 0;
    }
    return b;
}

TaskBias sum_bias(const std::vector<TaskBias>& per_model) {
    TaskBias out{};
    for (const TaskBias& b : per_model) {
        for (std::size_t i = 0; i < 10; ++i) out[i] += b[i];
    }
    return out;
}

TaskScores MetricsReport::scores() const {
    TaskScores s;
    s.fill(std::numeric_limits<double>::quiet_NaN());
    for (const TaskRow& row : rows) {
        if (row.a_q) s[static_cast<std::size_t>(task_number(row.task) - 1)] = *row.a_q;
    }
    return s;
}

MetricsReport compute_metrics(const std::vector<GradeRecord>& records, json config) {
    if (records.empty()) {
        throw Error("metrics: no grade records");
    }
    MetricsReport rep;
    rep.config = std::move(config);
    rep.n = records.size();
    const bool has_task_ids = std::all_of(records.begin(), records.end(), [](const auto& r) { return r.task_correct.has_value(); });
    for (TaskId t : kAllTasks) rep.rows.push_back({t});
    std::size_t total_c = 0;
    std::size_t total_tc = 0;
    for (const GradeRecord& r : records) {
        TaskRow& row = rep.rows[static_cast<std::size_t>(task_number(r.task) - 1)];
        ++row.n_q;
        row.n_c += r.numeric_correct;
        row.n_task_correct += r.task_correct.value_or(false);
        total_c += r.numeric_correct;
        total_tc += r.task_correct.value_or(false);
    }
    double sum_q = 0.0;
    double sum_c = 0.0;
    std::size_t tasks = 0;
    for (TaskRow& row : rep.rows) {
        if (row.n_q == 0) continue;
        row.a_q = 100.0 * static_cast<double>(row.n_c) / static_cast<double>(row.n_q);
        if (has_task_ids) row.a_c = 100.0 * static_cast<double>(row.n_task_correct) / static_cast<double>(row.n_q);
        sum_q += *row.a_q;
        sum_c += row.a_c.value_or(0.0);
        ++tasks;
    }
    rep.avg_a_q = sum_q / static_cast<double>(tasks);
    rep.micro_a_q = 100.0 * static_cast<double>(total_c) / static_cast<double>(records.size());
    if (has_task_ids) {
        rep.avg_a_c = sum_c / static_cast<double>(tasks);
        rep.micro_a_c = 100.0 * static_cast<double>(total_tc) / static_cast<double>(records.size());
    }
    const TaskScores scores = rep.scores();
    rep.pairwise = pairwise_matrix(scores);
    const TaskBias pb = pairwise_bias(scores);
    const TaskBias eb = extremal_bias(scores);
    for (std::size_t i = 0; i < 10; ++i) {
        rep.rows[i].bias = pb[i];
        rep.rows[i].extremal = eb[i];
    }

    std::map<std::string, std::vector<double>> samples;
    for (const GradeRecord& r : records) {
        if (has_task_ids) {
            samples["classification"].push_back(r.timings.classification_ms);
            samples["extraction"].push_back(r.timings.extraction_ms);
            samples["toolbox"].push_back(r.timings.toolbox_ms);
            samples["enhancement"].push_back(r.timings.enhancement_ms);
        }
        samples["total"].push_back(r.total_ms);
    }
    for (auto& [stage, v] : samples) rep.latency[stage] = latency_stats(std::move(v));

    if (has_task_ids) {
        std::map<std::string, std::size_t> counts;
        std::size_t n_exist = 0;
        for (const GradeRecord& r : records) {
            if (r.task != TaskId::existence) continue;
            ++n_exist;
            ++counts[r.predicted_task ? std::string(to_string(*r.predicted_task)) : "none"];
        }
        if (n_exist > 0) {
            std::vector<std::string> columns;
            for (TaskId t : kAllTasks) {
                if (t != TaskId::existence) columns.emplace_back(to_string(t));
            }
            columns.emplace_back("none");
            columns.emplace_back(to_string(TaskId::existence));
            for (const std::string& c : columns) {
                rep.existence_breakdown.emplace_back(c, 100.0 * static_cast<double>(counts[c]) / static_cast<double>(n_exist));
            }
        }
    }
    return rep;
}

json to_json(const MetricsReport& r) {
    json rows = json::array();
    for (const TaskRow& row : r.rows) {
        rows.push_back({{"task", std::string(to_string(row.task))},
                        {"task_id", task_number(row.task)},
                        {"n_q", row.n_q},
                        {"n_c", row.n_c},
                        {"n_task_correct", row.n_task_correct},
                        {"a_c", row.a_c ? json(*row.a_c) : json(nullptr)},
                        {"a_q", row.a_q ? json(*row.a_q) : json(nullptr)},
                        {"bias", row.bias},
                        {"extremal", row.extremal}});
    }
    json latency = json::object();
    for (const auto& [stage, s] : r.latency) {
        latency[stage] = {{"n", s.n}, {"mean_ms", s.mean}, {"p50_ms", s.p50}, {"p95_ms", s.p95}};
    }
    json breakdown = json::object();
    for (const auto& [k, v] : r.existence_breakdown) breakdown[k] = v;
    return {{"config", r.config},
            {"n", r.n},
            {"tasks", rows},
            {"average", {{"a_c", r.avg_a_c ? json(*r.avg_a_c) : json(nullptr)}, {"a_q", r.avg_a_q}}},
            {"micro", {{"a_c", r.micro_a_c ? json(*r.micro_a_c) : json(nullptr)}, {"a_q", r.micro_a_q}}},
            {"pairwise", r.pairwise},
            {"latency", latency},
            {"existence_breakdown", r.existence_breakdown.empty() ? json(nullptr) : breakdown}};
}

std::string render_report(const MetricsReport& r) {
    auto pct = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("N/A"); };
    std::string out;
    if (r.config.contains("model")) {
        out += fmt::format("model: {}  pipeline: {}  prefix: {}  rule: {}\n", r.config.value("model", ""),
                           r.config.value("pipeline", ""), r.config.value("prefix_on", true) ? "on" : "off",
                           r.config.value("rule_on", true) ? "on" : "off");
    }
    out += fmt::format("{:<22}{:>8}{:>8}{:>7}{:>5}\n", "Query task", "A_C", "A_Q", "N_q", "B");
    for (const TaskRow& row : r.rows) {
        out += fmt::format("{:<22}{:>8}{:>8}{:>7}{:>5}\n", fmt::format("({}) {}", task_number(row.task), to_string(row.task)),
                           pct(row.a_c), pct(row.a_q), row.n_q, fmt::format("{:+d}", row.bias));
    }
    out += fmt::format("{:<22}{:>8}{:>8}{:>7}{:>5}\n", "Average", pct(r.avg_a_c), pct(r.avg_a_q), r.n, "--");
    if (!r.existence_breakdown.empty()) {
        out += "\nExistence questions classified as (%):\n";
        for (const auto& [k, v] : r.existence_breakdown) out += fmt::format("  {:<16}{:>7.2f}\n", k, v);
    }
    out += "\nLatency (ms):\n";
    out += fmt::format("  {:<16}{:>7}{:>10}{:>10}{:>10}\n", "stage", "n", "mean", "p50", "p95");
    for (const char* stage : {"classification", "extraction", "toolbox", "enhancement", "total"}) {
        auto it = r.latency.find(stage);
        if (it == r.latency.end()) continue;
        const LatencyStats& s = it->second;
        out += fmt::format("  {:<16}{:>7}{:>10.3f}{:>10.3f}{:>10.3f}\n", stage, s.n, s.mean, s.p50, s.p95);
    }
    return out;
}

std::string question_for(const QAPair& qa, bool prefix_on) {
    const std::string bare = strip_radius_prefix(qa.question);
    return prefix_on ? std::string(kRadiusPrefix) + bare : bare;
}

EvalOutput run_eval(const std::vector<QAPair>& dataset, const std::vector<LinguisticScene>& scenes,
                    const PromptSet& prompts, LlmBackend& backend, const EvalOptions& options) {
    const std::size_t n = options.limit > 0 ? std::min(options.limit, dataset.size()) : dataset.size();
    if (n == 0) {
        throw Error("eval: dataset is empty");
    }
    std::map<std::int64_t, const LinguisticScene*> by_id;
    for (const LinguisticScene& ls : scenes) by_id[ls.scene_id] = &ls;
    for (std::size_t i = 0; i < n; ++i) {
        if (!by_id.contains(dataset[i].scene_id)) {
            throw NotFoundError(fmt::format("eval: scene {} of question {} is not in the scene file", dataset[i].scene_id, i));
        }
    }
    PromptSet p = prompts;
    p.restrictive_rule_on = options.rule_on;
    const CopPipeline cop(p, backend);

    std::vector<std::optional<GradeRecord>> slots(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex abort_mutex;
    std::string abort_reason;

    auto grade_one = [&](std::size_t i) {
        const QAPair& qa = dataset[i];
        const LinguisticScene& ls = *by_id.at(qa.scene_id);
        GradeRecord rec;
        rec.index = i;
        rec.scene_id = qa.scene_id;
        rec.ego_id = qa.ego_id;
        rec.template_id = qa.template_id;
        rec.task = qa.task;
        rec.question = question_for(qa, options.prefix_on);
        const NumericResult truth = qa.truth();
        std::optional<BackendError::Kind> backend_kind;
        const auto start = std::chrono::steady_clock::now();
        if (options.pipeline.kind == PipelineSpec::Kind::cop) {
            const CoPResult r = cop.answer(rec.question, ls, qa.ego_id);
            rec.predicted_task = r.task;
            rec.predicted = r.numeric;
            rec.timings = r.timings;
            rec.task_correct = r.task == qa.task;
            rec.numeric_correct = *rec.task_correct && r.numeric && grade_numeric(*r.numeric, truth);
            rec.reply = r.answer;
            if (r.error) {
                rec.error_stage = std::string(to_string(r.error->stage));
                rec.error = r.error->message;
                backend_kind = r.error->backend;
            }
        } else {
            try {
                rec.reply = osp_answer(options.pipeline.variant, rec.question, ls, qa.ego_id, p, backend);
                rec.predicted = parse_final_answer(qa.task, rec.reply);
                rec.numeric_correct = rec.predicted && grade_numeric(*rec.predicted, truth);
            } catch (const BackendError& e) {
                rec.error_stage = std::string(to_string(Stage::osp));
                rec.error = e.what();
                backend_kind = e.kind;
            }
        }
        rec.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (backend_kind == BackendError::Kind::unreachable) {
            std::lock_guard lock(abort_mutex);
            if (!abort.exchange(true)) abort_reason = rec.error;
            return;
        }
        slots[i] = std::move(rec);
    };

    const std::size_t workers =
        std::max<std::size_t>(1, std::min({options.concurrency, backend.max_concurrency(), n}));
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (!abort) {
                const std::size_t i = next++;
                if (i >= n) return;
                try {
                    grade_one(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    abort = true;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    EvalOutput out;
    for (auto& s : slots) {
        if (s) out.records.push_back(std::move(*s));
    }
    out.aborted = abort;
    out.abort_reason = abort_reason;
    if (!out.records.empty()) {
        out.report = compute_metrics(out.records, {{"model", backend.model_id()},
                                                   {"pipeline", options.pipeline.name()},
                                                   {"prefix_on", options.prefix_on},
                                                   {"rule_on", options.rule_on},
                                                   {"concurrency", workers},
                                                   {"questions", n},
                                                   {"aborted", out.aborted}});
    }
    return out;
}

}  // namespace vrc
