#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "advscene/llm.hpp"

namespace advscene {

namespace {

[[noreturn]] void provider_fail(const std::string& msg) {
    throw DslError({DslPhase::Provider, msg, {1, 1, 0}});
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.timeout_s <= 0.0) throw WorldError("provider timeout must be positive");
    if (cfg_.endpoint.empty()) throw WorldError("provider endpoint is empty");
    if (cfg_.path.empty() || cfg_.path.front() != '/') {
        throw WorldError("provider path must start with '/'");
    }
}

std::string HttpProvider::chat(const std::string& system,
                               const std::vector<LlmMessage>& turns) {
    nlohmann::json messages = nlohmann::json::array();
    messages.push_back({{"role", "system"}, {"content", system}});
    for (const LlmMessage& m : turns) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    const nlohmann::json body = {
        {"model", cfg_.model},
        {"temperature", cfg_.temperature},
        {"messages", messages},
    };

    httplib::Client cli(cfg_.endpoint);
    const auto sec = static_cast<time_t>(cfg_.timeout_s);
    const auto usec = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(sec)) * 1e6);
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto res = cli.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) {
        provider_fail("request to " + cfg_.endpoint + " failed: " + to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        provider_fail("provider returned status " + std::to_string(res->status));
    }
    try {
        const auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        provider_fail(std::string("malformed completion payload: ") + e.what());
    }
}

}  // namespace advscene
