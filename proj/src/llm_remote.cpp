#include <regex>

#include <fmt/format.h>
#include <httplib.h>

#include "vrc/llm.hpp"

namespace vrc {

using nlohmann::json;

json to_wire(const ChatRequest& request, const std::string& model) {
    json messages = json::array();
    for (const ChatMessage& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    return {{"model", model}, {"messages", std::move(messages)}, {"temperature", 0}};
}

RemoteBackend::RemoteBackend(Config config) : config_(std::move(config)) {
    static const std::regex url(R"(^(https?)://([^/:]+)(:\d+)?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url)) {
        throw Error(fmt::format("remote backend: malformed endpoint '{}'", config_.endpoint));
    }
    if (m[1] != "http") {
        throw Error("remote backend: only http endpoints are supported");
    }
    base_ = fmt::format("http://{}{}", m[2].str(), m[3].str());
    path_ = m[4].matched ? m[4].str() : "/v1/chat/completions";
    if (config_.model.empty()) {
        throw Error("remote backend: model is empty");
    }
    if (!(config_.timeout_s > 0.0)) {
        throw Error("remote backend: timeout_s must be positive");
    }
    if (config_.concurrency == 0) {
        throw Error("remote backend: concurrency must be at least 1");
    }
}

std::string RemoteBackend::complete(const ChatRequest& request) {
    httplib::Client client(base_);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    const std::string body = to_wire(request, config_.model).dump();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
        const httplib::Error err = res.error();
        const std::string what = fmt::format("{} request to {}: {}", to_string(request.context.stage), base_,
                                             httplib::to_string(err));
        switch (err) {
            case httplib::Error::Read:
            case httplib::Error::Write:
            case httplib::Error::ConnectionTimeout:
                throw BackendError(BackendError::Kind::timeout, what);
            default:
                throw BackendError(BackendError::Kind::unreachable, what);
        }
    }
    if (res->status != 200) {
        throw BackendError(BackendError::Kind::protocol,
                           fmt::format("{} request: HTTP {}", to_string(request.context.stage), res->status));
    }
    try {
        const json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(BackendError::Kind::protocol,
                           fmt::format("{} request: malformed reply: {}", to_string(request.context.stage), e.what()));
    }
}

}  // namespace vrc
