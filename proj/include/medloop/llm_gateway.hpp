// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/config.hpp>
#include <medloop/core_model.hpp>

#include <nlohmann/json.hpp>

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace medloop
{

enum class Role
{
    System,
    User,
    Assistant,
};

[[nodiscard]] auto to_string(Role role) -> std::string_view;

struct Message
{
    Role role = Role::User;
    std::string content;
};

struct ChatRequest
{
    std::string model = "deepseek-chat";
    std::vector<Message> messages;
    double temperature = 0.4;
    double top_p = 0.7;
    int max_tokens = 8192;
    nlohmann::json extra = nlohmann::json::object();

    /// Throws PreconditionError when messages are empty or system messages are misplaced.
    void validate() const;

    [[nodiscard]] static auto from(const LlmSettings& llm, std::vector<Message> messages) -> ChatRequest;
};

struct ChatResponse
{
    std::string content;
    TokenUsage usage;
    double latency = 0.0;
};

struct CallTags
{
    std::string agent_name;
    int round_idx = 0;
    int step_idx = 0;
};

/// Pipeline stage a given agent's calls are booked under.
[[nodiscard]] auto stage_for_agent(std::string_view agent_name) -> std::string;

class Provider
{
  public:
    virtual ~Provider() = default;
    /// Throws TransportError for retryable failures and FatalProviderError subclasses otherwise.
    virtual auto complete(const ChatRequest& request, const CallTags& tags) -> ChatResponse = 0;
    [[nodiscard]] virtual auto name() const -> std::string = 0;
};

struct LedgerEntry
{
    CallTags tags;
    std::string stage;
    TokenUsage usage;
};

struct LedgerReport
{
    std::map<std::string, TokenUsage> stages;
    TokenUsage total;
};

/// Thread-safe accumulation of per-call usage.
class Ledger
{
  public:
    explicit Ledger(TokenPrices prices = {}): prices_(prices) {}

    void record(const CallTags& tags, const TokenUsage& usage);
    [[nodiscard]] auto entries() const -> std::vector<LedgerEntry>;
    [[nodiscard]] auto size() const -> std::size_t;
    [[nodiscard]] auto prices() const -> TokenPrices { return prices_; }

  private:
    TokenPrices prices_;
    mutable std::mutex mutex_;
    std::vector<LedgerEntry> entries_;
};

/// Per-stage sums and a grand total, with cost recomputed from the ledger's prices.
[[nodiscard]] auto ledger_report(const Ledger& ledger) -> LedgerReport;
[[nodiscard]] auto ledger_report(const std::vector<LedgerEntry>& entries, const TokenPrices& prices)
    -> LedgerReport;

class Gateway
{
  public:
    Gateway(std::shared_ptr<Provider> provider, GatewayConfig cfg = {}, TokenPrices prices = {});

    /// Sends the request, retrying TransportError with exponential backoff. When `archive_dir`
    /// is non-empty the request and reply are written below it in `llm_calls/`.
    auto chat(const ChatRequest& request,
              const CallTags& tags,
              const std::filesystem::path& archive_dir = {}) -> ChatResponse;

    [[nodiscard]] auto ledger() -> Ledger& { return ledger_; }
    [[nodiscard]] auto ledger() const -> const Ledger& { return ledger_; }
    [[nodiscard]] auto provider() -> Provider& { return *provider_; }

  private:
    std::shared_ptr<Provider> provider_;
    GatewayConfig cfg_;
    Ledger ledger_;
};

/// One entry of a scripted transcript. Empty optionals are wildcards.
struct ScriptEntry
{
    std::string agent_name; ///< "*" matches any agent.
    std::optional<int> round_idx;
    std::optional<int> step_idx;
    std::string reply;
    TokenUsage usage;
};

/// Parses the `%transcript v1` text format. Throws TranscriptFormatError.
[[nodiscard]] auto parse_transcript(std::string_view text) -> std::vector<ScriptEntry>;
[[nodiscard]] auto load_transcript(const std::filesystem::path& path) -> std::vector<ScriptEntry>;
[[nodiscard]] auto render_transcript(const std::vector<ScriptEntry>& entries) -> std::string;

/// Rebuilds a transcript from the llm_calls archives below `run_dir`, with exact tags.
[[nodiscard]] auto transcript_from_run(const std::filesystem::path& run_dir) -> std::vector<ScriptEntry>;

/// Replays canned replies. For each call the most specific selector group that still holds
/// entries wins; entries within a group are consumed in file order.
class ScriptedProvider: public Provider
{
  public:
    explicit ScriptedProvider(std::vector<ScriptEntry> entries, TokenPrices prices = {});

    auto complete(const ChatRequest& request, const CallTags& tags) -> ChatResponse override;
    [[nodiscard]] auto name() const -> std::string override { return "scripted"; }

    struct Call
    {
        CallTags tags;
        ChatRequest request;
    };

    [[nodiscard]] auto calls() const -> std::vector<Call>;
    [[nodiscard]] auto remaining() const -> std::size_t;

  private:
    struct Key
    {
        std::string agent;
        std::optional<int> round;
        std::optional<int> step;
        auto operator<(const Key& o) const -> bool
        {
            return std::tie(agent, round, step) < std::tie(o.agent, o.round, o.step);
        }
    };

    TokenPrices prices_;
    mutable std::mutex mutex_;
    std::map<Key, std::deque<ScriptEntry>> groups_;
    std::vector<Call> calls_;
};

struct LiveProviderOptions
{
    std::string base_url;
    std::string api_key;
    double timeout_seconds = 120;
    TokenPrices prices;
};

/// Reads MEDLOOP_API_KEY / MEDLOOP_BASE_URL, falling back to OPENAI_API_KEY / OPENAI_BASE_URL.
/// Throws AuthError when no key is set.
[[nodiscard]] auto live_options_from_env(double timeout_seconds, TokenPrices prices) -> LiveProviderOptions;

/// OpenAI-compatible chat-completions client.
class LiveProvider: public Provider
{
  public:
    explicit LiveProvider(LiveProviderOptions options);

    auto complete(const ChatRequest& request, const CallTags& tags) -> ChatResponse override;
    [[nodiscard]] auto name() const -> std::string override { return "live"; }

    /// Builds the JSON body sent to the endpoint.
    [[nodiscard]] static auto request_body(const ChatRequest& request) -> nlohmann::json;

    /// Extracts content and usage from an endpoint reply. Throws TransportError on a malformed body.
    [[nodiscard]] static auto parse_reply(const nlohmann::json& body, const TokenPrices& prices)
        -> ChatResponse;

  private:
    LiveProviderOptions options_;
};

} // namespace medloop
