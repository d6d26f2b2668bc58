#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"
#include "knowdit/errors.hpp"
#include "knowdit/llm.hpp"

namespace knowdit {

using nlohmann::json;

HttpProvider::HttpProvider(std::string base_url, std::string api_key,
                           std::map<Role, std::string> model_names)
    : base_url_(std::move(base_url)),
      api_key_(std::move(api_key)),
      model_names_(std::move(model_names)) {}

Completion HttpProvider::complete(TemplateId, Role role, const std::string& prompt) {
    auto model_it = model_names_.find(role);
    if (model_it == model_names_.end()) throw ProviderError("no model name for role");

    json body = {
        {"model", model_it->second},
        {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
    };

    httplib::Client client(base_url_);
    client.set_read_timeout(300, 0);
    httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw ProviderError("transport failure talking to " + base_url_);
    if (res->status != 200) {
        throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " +
                            res->body);
    }
    json doc;
    try {
        doc = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw ProviderError(std::string("unparseable provider response: ") + e.what());
    }
    try {
        Completion c;
        c.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        if (doc.contains("usage")) {
            c.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
            c.completion_tokens = doc["usage"].value("completion_tokens", 0L);
        }
        return c;
    } catch (const json::exception& e) {
        throw ProviderError(std::string("unexpected provider response shape: ") + e.what());
    }
}

}  // namespace knowdit
