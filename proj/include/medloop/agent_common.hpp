// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/block_protocol.hpp>
#include <medloop/config.hpp>
#include <medloop/llm_gateway.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace medloop
{

/// Where an agent books its calls and writes its files.
struct AgentContext
{
    int round_idx = 1;
    std::filesystem::path stage_dir;
};

/// Checks a reply and returns the accepted text, or an explanation of what is wrong.
struct Checked
{
    std::optional<std::string> value;
    std::string problem;

    static auto ok(std::string v) -> Checked { return { std::move(v), {} }; }
    static auto bad(std::string why) -> Checked { return { std::nullopt, std::move(why) }; }
};

using ReplyCheck = std::function<Checked(const std::string& reply)>;

struct Exchange
{
    std::vector<Message> messages;
    std::optional<std::string> value;
    std::string last_reply;
    std::string problem;
};

/// Sends system + user, checks the reply, and on rejection re-prompts once with
/// `reformat` (rendered with {problem}). Returns the conversation and the accepted value, if any.
auto ask_with_reprompt(Gateway& gateway,
                       const LlmSettings& llm,
                       const std::string& system,
                       const std::string& user,
                       const CallTags& tags,
                       const std::filesystem::path& archive_dir,
                       const ReplyCheck& check,
                       const std::string& reformat,
                       std::map<std::string, std::string> reformat_vars = {}) -> Exchange;

/// Lines of `headers`, one per line.
[[nodiscard]] auto join_lines(const auto& items) -> std::string
{
    std::string out;
    for (const auto& s: items)
    {
        out += s;
        out += '\n';
    }
    return out;
}

/// True when some line of `text`, stripped of markdown heading and emphasis marks, starts with
/// `heading` (case-insensitive, inner whitespace collapsed).
[[nodiscard]] auto has_heading(std::string_view text, std::string_view heading) -> bool;

} // namespace medloop
