#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrc/cop.hpp"
#include "vrc/qa_gen.hpp"

namespace vrc {

/// True iff both vectors have the same length and agree component-wise within
/// 1e-6 (enumeration codes, counts and booleans are integral, so this is
/// exact for them).
bool grade_numeric(const NumericResult& pred, const NumericResult& truth);

/// Reads the last "FINAL: <value>" line of a free-text answer as a result of
/// `task`. Units and articles are ignored; "none" is the empty answer.
std::optional<NumericResult> parse_final_answer(TaskId task, std::string_view text);

struct PipelineSpec {
    enum class Kind { cop, osp } kind = Kind::cop;
    int variant = 0;  // 1..4 for OSP

    /// "cop", "osp1" .. "osp4".
    static PipelineSpec parse(std::string_view name);
    std::string name() const;
};

struct GradeRecord {
    std::size_t index = 0;
    std::int64_t scene_id = 0;
    std::string ego_id;
    std::string template_id;
    std::string question;  // as sent
    TaskId task = TaskId::existence;
    std::optional<TaskId> predicted_task;
    std::optional<NumericResult> predicted;
    std::optional<bool> task_correct;  // absent when the pipeline emits no task id
    bool numeric_correct = false;
    StageTimings timings;
    double total_ms = 0.0;
    std::optional<std::string> error_stage;
    std::string error;
    std::string reply;  // raw OSP reply, or the CoP answer text
};

nlohmann::json to_json(const GradeRecord& r);
GradeRecord grade_record_from_json(const nlohmann::json& j);

struct LatencyStats {
    std::size_t n = 0;
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
};

/// Nearest-rank percentiles.
LatencyStats latency_stats(std::vector<double> samples);

using TaskScores = std::array<double, 10>;  // NaN marks a task without questions
using TaskBias = std::array<int, 10>;

/// sign(A_i - A_j); antisymmetric, zero on ties and missing tasks.
std::array<std::array<int, 10>, 10> pairwise_matrix(const TaskScores& a_q);
/// Row sums of the pairwise matrix: +9 for a strict maximum over ten tasks.
TaskBias pairwise_bias(const TaskScores& a_q);
/// +1 when a task is at the top (ties included), -1 when strictly below all
/// others, else 0.
TaskBias extremal_bias(const TaskScores& a_q);
/// Per-task sum over models.
TaskBias sum_bias(const std::vector<TaskBias>& per_model);

struct TaskRow {
    TaskId task = TaskId::existence;
    std::size_t n_q = 0;
    std::size_t n_c = 0;             // numerically correct
    std::size_t n_task_correct = 0;  // classification correct
    std::optional<double> a_c;       // percent; absent for OSP
    std::optional<double> a_q;       // percent; absent when n_q == 0
    int bias = 0;
    int extremal = 0;
};

struct MetricsReport {
    nlohmann::json config;  // model id, pipeline, toggles, ...
    std::size_t n = 0;
    std::vector<TaskRow> rows;  // one per task, in task order
    std::optional<double> avg_a_c;
    double avg_a_q = 0.0;  // mean over tasks with questions
    std::optional<double> micro_a_c;
    double micro_a_q = 0.0;
    std::array<std::array<int, 10>, 10> pairwise{};
    std::map<std::string, LatencyStats> latency;  // per stage plus "total"
    /// Share (percent) of existence questions per predicted task, plus "none"
    /// for classification failures. Empty for pipelines without task ids.
    std::vector<std::pair<std::string, double>> existence_breakdown;

    TaskScores scores() const;
};

/// Throws on empty input.
MetricsReport compute_metrics(const std::vector<GradeRecord>& records, nlohmann::json config = nlohmann::json::object());

nlohmann::json to_json(const MetricsReport& r);
/// Per-task rows "(i) task  A_C  A_Q  N_q  B", an Average row, the existence
/// breakdown and per-stage latency.
std::string render_report(const MetricsReport& r);

struct EvalOptions {
    PipelineSpec pipeline;
    bool prefix_on = true;
    bool rule_on = true;
    std::size_t concurrency = 8;
    std::size_t limit = 0;  // 0 = whole dataset
};

struct EvalOutput {
    std::vector<GradeRecord> records;  // in dataset order; partial when aborted
    std::optional<MetricsReport> report;
    bool aborted = false;
    std::string abort_reason;
};

/// The question as sent for the prefix toggle.
std::string question_for(const QAPair& qa, bool prefix_on);

/// Answers every pair against its scene and grades it. Requests run on up to
/// min(options.concurrency, backend.max_concurrency()) threads. An unreachable
/// backend stops the run; finished records are still returned.
EvalOutput run_eval(const std::vector<QAPair>& dataset, const std::vector<LinguisticScene>& scenes,
                    const PromptSet& prompts, LlmBackend& backend, const EvalOptions& options);

}  // namespace vrc
