#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrc/scene.hpp"
#include "vrc/scene_graph.hpp"
#include "vrc/toolbox.hpp"

namespace vrc {

/// Questions carrying the radius hint start with this text.
inline constexpr std::string_view kRadiusPrefix = "within an 100-meter radius, ";

/// Removes kRadiusPrefix when present.
std::string strip_radius_prefix(std::string_view question);

enum class Hop { ego_centric, ego_agnostic };

std::string_view to_string(Hop h);
std::optional<Hop> parse_hop(std::string_view s);

/// Question template. Placeholders are <type>, <color>, <relation> and <road>;
/// `required_slots` names them without brackets.
struct QuestionTemplate {
    std::string id;
    TaskId task = TaskId::existence;
    Hop hop = Hop::ego_centric;
    std::string text;
    std::set<std::string> required_slots;
};

/// Placeholder names appearing in a template text, in order of first use.
std::set<std::string> placeholders_in(std::string_view text);

using TemplateSet = std::vector<QuestionTemplate>;

/// Parses and validates a JSONL template file. Every task needs at least one
/// template of each hop class; placeholders must equal required_slots;
/// ego-agnostic templates need <road> and ego-centric ones must not use it;
/// color and classification templates may not name their own answer.
TemplateSet parse_templates(std::string_view jsonl);
TemplateSet load_templates(const std::filesystem::path& path);

/// Phrase substituted for <relation>.
std::string_view relation_phrase(RelationKind k);

struct QAPair {
    std::string question;
    nlohmann::json answer;
    std::int64_t scene_id = 0;
    std::string ego_id;
    TaskId task = TaskId::existence;
    std::string template_id;
    Hop hop = Hop::ego_centric;
    QueryParams params;
    std::vector<std::string> matched_ids;

    /// The stored answer as a toolbox result.
    NumericResult truth() const;
};

nlohmann::json to_json(const QAPair& qa);
QAPair qa_from_json(const nlohmann::json& j);
std::vector<QAPair> parse_dataset(std::string_view jsonl);
std::vector<QAPair> load_dataset(const std::filesystem::path& path);
std::string render_dataset(const std::vector<QAPair>& pairs);

/// Raised when a template cannot be instantiated against a graph; callers
/// retry with another draw.
class InstantiationError : public Error {
public:
    using Error::Error;
};

/// Fills `tmpl` from the AER graph. One-hop templates take slots from the
/// masked entity (its type, color and one of its relations to the ego);
/// zero-hop templates take them from a scene object drawn with `seed` and
/// filter by road only. Answers are computed from the graph attributes (or
/// the scene for zero-hop) without going through the toolbox. About half of
/// the existence questions are turned into negatives when some slot filling
/// has no referent.
QAPair instantiate(const QuestionTemplate& tmpl, const AERGraph& aer, const LinguisticScene& ls, std::uint64_t seed);

struct DatasetOptions {
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    bool prefix_on = true;
    int retry_budget = 50;
};

struct DatasetReport {
    std::map<TaskId, std::size_t> per_task;
    std::map<TaskId, std::size_t> shortfall;  // failed draws per task

    /// Task distribution table, one row per task plus a total.
    std::string render() const;
};

class GenerationError : public Error {
public:
    GenerationError(const std::string& message, DatasetReport report) : Error(message), report(std::move(report)) {}
    DatasetReport report;
};

/// Draws scenes, AV egos and templates uniformly. Deterministic given the seed.
std::vector<QAPair> generate_dataset(const std::vector<LinguisticScene>& scenes, const TemplateSet& templates,
                                     const DatasetOptions& options, DatasetReport* report = nullptr);

}  // namespace vrc
