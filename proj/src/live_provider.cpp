// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <medloop/errors.hpp>
#include <medloop/llm_gateway.hpp>

#include <fmt/format.h>

#include <cstdlib>

namespace medloop
{

namespace
{
    auto env(const char* name) -> std::string
    {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string();
    }

    struct SplitUrl
    {
        std::string origin; // scheme://host[:port]
        std::string prefix; // path without trailing slash
    };

    auto split_url(const std::string& url) -> SplitUrl
    {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos)
            throw TransportError("base URL lacks a scheme: " + url);
        auto path_start = url.find('/', scheme_end + 3);
        SplitUrl s;
        s.origin = url.substr(0, path_start);
        s.prefix = path_start == std::string::npos ? std::string() : url.substr(path_start);
        while (!s.prefix.empty() && s.prefix.back() == '/')
            s.prefix.pop_back();
        return s;
    }

    auto as_count(const nlohmann::json& j, const char* key) -> std::int64_t
    {
        if (!j.is_object() || !j.contains(key) || !j[key].is_number())
            return 0;
        return std::max<std::int64_t>(0, j[key].get<std::int64_t>());
    }
} // namespace

auto live_options_from_env(double timeout_seconds, TokenPrices prices) -> LiveProviderOptions
{
    LiveProviderOptions o;
    o.api_key = env("MEDLOOP_API_KEY");
    if (o.api_key.empty())
        o.api_key = env("OPENAI_API_KEY");
    o.base_url = env("MEDLOOP_BASE_URL");
    if (o.base_url.empty())
        o.base_url = env("OPENAI_BASE_URL");
    if (o.base_url.empty())
        o.base_url = "https://api.deepseek.com";
    if (o.api_key.empty())
        throw AuthError("no API key: set MEDLOOP_API_KEY or OPENAI_API_KEY");
    o.timeout_seconds = timeout_seconds;
    o.prices = prices;
    return o;
}

LiveProvider::LiveProvider(LiveProviderOptions options): options_(std::move(options)) {}

auto LiveProvider::request_body(const ChatRequest& request) -> nlohmann::json
{
    nlohmann::json body = request.extra.is_object() ? request.extra : nlohmann::json::object();
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    body["top_p"] = request.top_p;
    body["max_tokens"] = request.max_tokens;
    body["stream"] = false;
    auto messages = nlohmann::json::array();
    for (const auto& m: request.messages)
        messages.push_back({ { "role", to_string(m.role) }, { "content", m.content } });
    body["messages"] = messages;
    return body;
}

auto LiveProvider::parse_reply(const nlohmann::json& body, const TokenPrices& prices) -> ChatResponse
{
    try
    {
        const auto& choice = body.at("choices").at(0);
        ChatResponse r;
        const auto& content = choice.at("message").at("content");
        r.content = content.is_null() ? std::string() : content.get<std::string>();
        auto usage = body.value("usage", nlohmann::json::object());
        auto in = as_count(usage, "prompt_tokens");
        auto out = as_count(usage, "completion_tokens");
        auto cache = as_count(usage, "prompt_cache_hit_tokens");
        if (cache == 0 && usage.contains("prompt_tokens_details"))
            cache = as_count(usage["prompt_tokens_details"], "cached_tokens");
        r.usage = TokenUsage::from_counts(in, out, std::min(cache, in), prices);
        return r;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TransportError(std::string("malformed completion reply: ") + e.what());
    }
}

auto LiveProvider::complete(const ChatRequest& request, const CallTags&) -> ChatResponse
{
    auto url = split_url(options_.base_url);
    httplib::Client client(url.origin);
    auto secs = static_cast<time_t>(options_.timeout_seconds);
    client.set_connection_timeout(std::min<time_t>(secs, 30), 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    client.set_bearer_token_auth(options_.api_key);

    auto payload = request_body(request).dump();
    auto res = client.Post(url.prefix + "/chat/completions", payload, "application/json");
    if (!res)
        throw TransportError(fmt::format("request to {} failed: {}", url.origin, httplib::to_string(res.error())));
    if (res->status == 401 || res->status == 403)
        throw AuthError(fmt::format("endpoint rejected credentials (HTTP {})", res->status));
    if (res->status != 200)
        throw TransportError(fmt::format("HTTP {} from {}", res->status, url.origin));
    nlohmann::json body;
    try
    {
        body = nlohmann::json::parse(res->body);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TransportError(std::string("non-JSON completion reply: ") + e.what());
    }
    return parse_reply(body, options_.prices);
}

} // namespace medloop
