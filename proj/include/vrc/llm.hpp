#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrc/qa_gen.hpp"
#include "vrc/scene.hpp"
#include "vrc/toolbox.hpp"

namespace vrc {

enum class Stage { classification, extraction, toolbox, enhancement, osp };

std::string_view to_string(Stage s);

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

/// What a request is about. Never sent over the wire; mock backends read it
/// instead of parsing prompt text.
struct RequestContext {
    Stage stage = Stage::classification;
    std::string question;  // as asked, possibly with the radius prefix
    std::string ego_id;
    std::vector<std::string> roads;  // known road names
    const LinguisticScene* scene = nullptr;
    std::optional<TaskId> task;
    std::optional<NumericResult> numeric;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    RequestContext context;
};

/// Wire body of a chat-completion request.
nlohmann::json to_wire(const ChatRequest& request, const std::string& model);

class BackendError : public Error {
public:
    enum class Kind { timeout, unreachable, protocol, exhausted };
    BackendError(Kind kind, const std::string& message) : Error(message), kind(kind) {}
    Kind kind;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    /// Returns the assistant message content.
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string model_id() const = 0;
    /// Requests the backend accepts at once; callers never exceed it.
    virtual std::size_t max_concurrency() const { return 1; }
};

/// Chat-completion HTTP endpoint, e.g. http://localhost:11434/v1/chat/completions.
class RemoteBackend : public LlmBackend {
public:
    struct Config {
        std::string endpoint;
        std::string model;
        double timeout_s = 120.0;
        std::size_t concurrency = 1;
        std::string api_key;  // sent as a bearer token when non-empty
    };

    explicit RemoteBackend(Config config);
    std::string complete(const ChatRequest& request) override;
    std::string model_id() const override { return config_.model; }
    std::size_t max_concurrency() const override { return config_.concurrency; }

private:
    Config config_;
    std::string base_;  // scheme://host:port
    std::string path_;
};

/// Lower-cased question with the radius prefix removed and whitespace collapsed.
std::string normalize_question(std::string_view question);

/// Ground truth (task, params) per question text.
class AnswerKey {
public:
    struct Entry {
        TaskId task;
        QueryParams params;
    };

    static AnswerKey from_dataset(const std::vector<QAPair>& pairs);
    void add(std::string_view question, Entry entry);
    const Entry* find(std::string_view question) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, Entry, std::less<>> entries_;
};

/// Keyword classifier used when a question is not in the answer key.
TaskId heuristic_classify(std::string_view question);
/// Rule-based slot filler used when a question is not in the answer key.
QueryParams heuristic_extract(std::string_view question, const std::vector<std::string>& roads);
/// Plain-text answer and advice for a toolbox result.
std::pair<std::string, std::string> describe_result(const NumericResult& result);
/// The OSP "FINAL: <value>" rendering of a result.
std::string final_line(const NumericResult& result);

/// Answers from the key (falling back to the heuristics) and computes
/// enhancement and OSP replies with the toolbox.
class MockOracleBackend : public LlmBackend {
public:
    explicit MockOracleBackend(AnswerKey key = {}) : key_(std::move(key)) {}
    std::string complete(const ChatRequest& request) override;
    std::string model_id() const override { return "mock-oracle"; }
    std::size_t max_concurrency() const override { return 64; }

private:
    AnswerKey key_;
};

/// The oracle with seeded, per-question errors injected into classification
/// and extraction.
class MockNoisyBackend : public LlmBackend {
public:
    MockNoisyBackend(AnswerKey key, double classification_error_rate, double extraction_error_rate,
                     std::uint64_t seed);
    std::string complete(const ChatRequest& request) override;
    std::string model_id() const override { return "mock-noisy"; }
    std::size_t max_concurrency() const override { return 64; }

private:
    MockOracleBackend oracle_;
    double classification_error_rate_;
    double extraction_error_rate_;
    std::uint64_t seed_;
};

/// Replays a transcript. Each entry is consumed once, in order, by the first
/// request whose stage (if given) and substring match (if given) fit.
class MockScriptedBackend : public LlmBackend {
public:
    struct Entry {
        std::optional<Stage> stage;
        std::optional<std::string> match;  // substring of the last user message
        std::string response;
        std::optional<BackendError::Kind> error;
    };

    explicit MockScriptedBackend(std::vector<Entry> transcript)
        : transcript_(std::move(transcript)), used_(transcript_.size(), false) {}
    static std::vector<Entry> parse_transcript(const nlohmann::json& j);
    std::string complete(const ChatRequest& request) override;
    std::string model_id() const override { return "mock-scripted"; }
    std::size_t remaining() const;

private:
    mutable std::mutex mutex_;
    std::vector<Entry> transcript_;
    std::vector<bool> used_;
};

/// Builds a backend from its JSON config: {"kind": "remote" | "mock_oracle" |
/// "mock_noisy" | "mock_scripted", ...}. Mocks built from the oracle use `key`.
std::unique_ptr<LlmBackend> make_backend(const nlohmann::json& config, const AnswerKey& key = {});

}  // namespace vrc
