// SPDX-License-Identifier: Apache-2.0
#include <medloop/errors.hpp>
#include <medloop/llm_gateway.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <thread>

namespace medloop
{

auto to_string(Role role) -> std::string_view
{
    switch (role)
    {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

void ChatRequest::validate() const
{
    if (messages.empty())
        throw PreconditionError("chat request has no messages");
    for (std::size_t i = 0; i < messages.size(); ++i)
        if (messages[i].role == Role::System && i != 0)
            throw PreconditionError("system message must be the first and only one");
    if (max_tokens <= 0)
        throw PreconditionError("max_tokens must be positive");
    if (!(temperature >= 0.0 && temperature <= 2.0))
        throw PreconditionError("temperature outside [0,2]");
    if (!(top_p >= 0.0 && top_p <= 1.0))
        throw PreconditionError("top_p outside [0,1]");
}

auto ChatRequest::from(const LlmSettings& llm, std::vector<Message> messages) -> ChatRequest
{
    ChatRequest r;
    r.model = llm.model;
    r.temperature = llm.temperature;
    r.top_p = llm.top_p;
    r.max_tokens = llm.max_tokens;
    r.messages = std::move(messages);
    return r;
}

auto stage_for_agent(std::string_view agent_name) -> std::string
{
    if (agent_name == "data_agent")
        return "data_understanding";
    if (agent_name == "planner" || agent_name == "reviewer")
        return "planning";
    if (agent_name == "coding_agent" || agent_name == "feedback_agent")
        return "code_execution";
    if (agent_name == "meta_agent")
        return "meta";
    if (agent_name == "report_agent")
        return "report_generation";
    return std::string(agent_name);
}

void Ledger::record(const CallTags& tags, const TokenUsage& usage)
{
    std::lock_guard lock(mutex_);
    entries_.push_back({ tags, stage_for_agent(tags.agent_name), usage.priced(prices_) });
}

auto Ledger::entries() const -> std::vector<LedgerEntry>
{
    std::lock_guard lock(mutex_);
    return entries_;
}

auto Ledger::size() const -> std::size_t
{
    std::lock_guard lock(mutex_);
    return entries_.size();
}

auto ledger_report(const std::vector<LedgerEntry>& entries, const TokenPrices& prices) -> LedgerReport
{
    LedgerReport r;
    for (const auto& e: entries)
        r.stages[e.stage] += e.usage.priced(prices);
    for (const auto& [_, u]: r.stages)
        r.total += u;
    return r;
}

auto ledger_report(const Ledger& ledger) -> LedgerReport
{
    return ledger_report(ledger.entries(), ledger.prices());
}

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayConfig cfg, TokenPrices prices):
    provider_(std::move(provider)), cfg_(cfg), ledger_(prices)
{
    if (!provider_)
        throw PreconditionError("gateway needs a provider");
}

namespace
{
    void archive_call(const std::filesystem::path& dir,
                      const ChatRequest& request,
                      const CallTags& tags,
                      const ChatResponse& response)
    {
        auto calls = dir / "llm_calls";
        std::error_code ec;
        std::filesystem::create_directories(calls, ec);
        std::size_t seq = 1;
        if (std::filesystem::exists(calls))
            for ([[maybe_unused]] const auto& e: std::filesystem::directory_iterator(calls))
                ++seq;
        nlohmann::json j;
        j["tags"] = { { "agent_name", tags.agent_name },
                      { "round_idx", tags.round_idx },
                      { "step_idx", tags.step_idx } };
        j["request"] = LiveProvider::request_body(request);
        j["response"] = { { "content", response.content }, { "usage", response.usage } };
        auto name = fmt::format("{:03}_{}_r{}_s{}.json", seq, tags.agent_name, tags.round_idx, tags.step_idx);
        text::write_file(calls / name, j.dump(2) + "\n");
    }
} // namespace

auto Gateway::chat(const ChatRequest& request, const CallTags& tags, const std::filesystem::path& archive_dir)
    -> ChatResponse
{
    request.validate();
    int attempt = 0;
    while (true)
    {
        try
        {
            auto started = std::chrono::steady_clock::now();
            auto response = provider_->complete(request, tags);
            response.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            response.usage = response.usage.priced(ledger_.prices());
            ledger_.record(tags, response.usage);
            if (!archive_dir.empty())
                archive_call(archive_dir, request, tags, response);
            return response;
        }
        catch (const TransportError& e)
        {
            if (attempt >= cfg_.max_retries)
                throw;
            auto delay = cfg_.backoff_seconds * std::pow(2.0, attempt);
            spdlog::warn("{} call failed ({}); retry {} of {} in {:.1f}s",
                         tags.agent_name, e.what(), attempt + 1, cfg_.max_retries, delay);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            ++attempt;
        }
    }
}

} // namespace medloop
