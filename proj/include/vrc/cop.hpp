#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrc/llm.hpp"
#include "vrc/scene.hpp"
#include "vrc/toolbox.hpp"

namespace vrc {

/// A prompt file: `[head]` becomes the system message, `[body]` the user
/// message. `{{name}}` slots are filled at render time.
struct PromptTemplate {
    std::string head;
    std::string body;

    static PromptTemplate parse(std::string_view text);
    /// Throws when a slot has no value.
    std::vector<ChatMessage> render(const std::map<std::string, std::string>& values) const;
};

/// Replaces every `{{name}}`; throws on a slot missing from `values`.
std::string fill_slots(std::string_view text, const std::map<std::string, std::string>& values);

struct PromptSet {
    PromptTemplate p_tc;
    PromptTemplate p_pe;
    PromptTemplate p_ce;
    PromptTemplate osp;
    std::string existence_rule;
    std::string osp_fields;
    std::string osp_rules;
    std::string osp_examples;
    bool restrictive_rule_on = true;

    static PromptSet load(const std::string& dir = VRC_DATA_DIR "/prompts");
};

/// A failed pipeline stage.
class StageError : public Error {
public:
    StageError(Stage stage, const std::string& message, std::optional<BackendError::Kind> backend = std::nullopt)
        : Error(message), stage(stage), backend(backend) {}
    Stage stage;
    std::optional<BackendError::Kind> backend;
};

std::string_view to_string(BackendError::Kind k);

struct StageTimings {
    double classification_ms = 0.0;
    double extraction_ms = 0.0;
    double toolbox_ms = 0.0;
    double enhancement_ms = 0.0;
};

struct CoPResult {
    std::string question;
    std::string ego_id;
    std::int64_t scene_id = 0;
    std::optional<TaskId> task;
    std::optional<QueryParams> params;
    std::optional<NumericResult> numeric;
    std::string semantic;
    std::string advice;
    std::string answer;  // semantic followed by advice
    StageTimings timings;

    struct Failure {
        Stage stage;
        std::string message;
        std::optional<BackendError::Kind> backend;
    };
    std::optional<Failure> error;
};

nlohmann::json to_json(const CoPResult& r);

/// First JSON object in a model reply, skipping reasoning blocks, code fences
/// and surrounding prose.
std::optional<nlohmann::json> find_json_object(std::string_view reply);

/// Classification → extraction → toolbox → enhancement.
class CopPipeline {
public:
    CopPipeline(PromptSet prompts, LlmBackend& backend) : prompts_(std::move(prompts)), backend_(backend) {}

    ChatRequest tc_request(const std::string& question) const;
    ChatRequest pe_request(const std::string& question, const std::vector<std::string>& roads) const;
    ChatRequest ce_request(const std::string& question, const NumericResult& numeric, const LinguisticScene& ls,
                           const std::string& ego_id) const;

    /// Throw StageError.
    TaskId classify(const std::string& question) const;
    QueryParams extract(const std::string& question, const std::vector<std::string>& roads) const;
    std::pair<std::string, std::string> enhance(const std::string& question, const NumericResult& numeric,
                                                const LinguisticScene& ls, const std::string& ego_id) const;

    /// Stage failures are reported in the result; an unknown ego throws
    /// NotFoundError before any stage runs.
    CoPResult answer(const std::string& question, const LinguisticScene& ls, const std::string& ego_id) const;

    const PromptSet& prompts() const { return prompts_; }
    LlmBackend& backend() const { return backend_; }

private:
    /// Sends the request and returns the first reply object `check` accepts
    /// (it throws on rejection), retrying once with a repair instruction.
    nlohmann::json ask_json(ChatRequest request, std::string_view format_hint,
                            const std::function<void(const nlohmann::json&)>& check) const;

    PromptSet prompts_;
    LlmBackend& backend_;
};

std::vector<std::string> road_ids(const LinguisticScene& ls);

/// One-shot prompt baseline. Variant 1 is role + scene + constraints; 2 adds
/// field meanings, 3 inference rules, 4 worked examples.
ChatRequest osp_request(int variant, const std::string& question, const LinguisticScene& ls,
                        const std::string& ego_id, const PromptSet& prompts);
/// Raw reply text, graded downstream. Throws BackendError.
std::string osp_answer(int variant, const std::string& question, const LinguisticScene& ls,
                       const std::string& ego_id, const PromptSet& prompts, LlmBackend& backend);

}  // namespace vrc
