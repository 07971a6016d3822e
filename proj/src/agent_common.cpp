// SPDX-License-Identifier: Apache-2.0
#include <medloop/agent_common.hpp>
#include <medloop/text_util.hpp>

#include <sstream>

namespace medloop
{

namespace
{
    auto normalize_heading(std::string_view line) -> std::string
    {
        auto t = text::trim(line);
        while (!t.empty() && (t.front() == '#' || t.front() == '*' || t.front() == ' ' || t.front() == '\t'))
            t.remove_prefix(1);
        while (!t.empty() && (t.back() == '*' || t.back() == ' ' || t.back() == '\t' || t.back() == ':'))
            t.remove_suffix(1);
        std::string out;
        bool space = false;
        for (char c: t)
        {
            if (c == ' ' || c == '\t')
            {
                space = true;
                continue;
            }
            if (space && !out.empty())
                out += ' ';
            space = false;
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        return out;
    }
} // namespace

auto has_heading(std::string_view text, std::string_view heading) -> bool
{
    auto want = normalize_heading(heading);
    std::istringstream in { std::string(text) };
    for (std::string line; std::getline(in, line);)
        if (normalize_heading(line).rfind(want, 0) == 0)
            return true;
    return false;
}

auto ask_with_reprompt(Gateway& gateway,
                       const LlmSettings& llm,
                       const std::string& system,
                       const std::string& user,
                       const CallTags& tags,
                       const std::filesystem::path& archive_dir,
                       const ReplyCheck& check,
                       const std::string& reformat,
                       std::map<std::string, std::string> reformat_vars) -> Exchange
{
    Exchange ex;
    ex.messages = { { Role::System, system }, { Role::User, user } };
    for (int attempt = 0; attempt < 2; ++attempt)
    {
        auto reply = gateway.chat(ChatRequest::from(llm, ex.messages), tags, archive_dir).content;
        ex.last_reply = reply;
        ex.messages.push_back({ Role::Assistant, reply });
        auto c = check(reply);
        if (c.value)
        {
            ex.value = std::move(c.value);
            ex.problem.clear();
            return ex;
        }
        ex.problem = c.problem;
        if (attempt == 0)
        {
            reformat_vars["problem"] = c.problem;
            ex.messages.push_back({ Role::User, text::render(reformat, reformat_vars) });
        }
    }
    return ex;
}

} // namespace medloop
