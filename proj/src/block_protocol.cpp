// SPDX-License-Identifier: Apache-2.0
#include <medloop/block_protocol.hpp>
#include <medloop/errors.hpp>
#include <medloop/text_util.hpp>

#include <nlohmann/json.hpp>

namespace medloop
{

namespace
{
    struct Line
    {
        std::size_t begin;
        std::string_view text; // without the newline
    };

    auto split_lines(std::string_view s) -> std::vector<Line>
    {
        std::vector<Line> out;
        std::size_t pos = 0;
        while (pos < s.size())
        {
            auto nl = s.find('\n', pos);
            auto end = nl == std::string_view::npos ? s.size() : nl;
            auto text = s.substr(pos, end - pos);
            if (!text.empty() && text.back() == '\r')
                text.remove_suffix(1);
            out.push_back({ pos, text });
            if (nl == std::string_view::npos)
                break;
            pos = nl + 1;
        }
        return out;
    }

    auto is_space(char c) -> bool
    {
        return c == ' ' || c == '\t';
    }

    // Returns the text after the backtick run when `line` opens or closes a fence.
    auto fence_rest(std::string_view line) -> std::optional<std::string_view>
    {
        std::size_t i = 0;
        while (i < line.size() && is_space(line[i]))
            ++i;
        std::size_t ticks = 0;
        while (i + ticks < line.size() && line[i + ticks] == '`')
            ++ticks;
        if (ticks < 3)
            return std::nullopt;
        return line.substr(i + ticks);
    }
} // namespace

auto parse_blocks_ex(std::string_view reply) -> ParseResult
{
    ParseResult result;
    auto lines = split_lines(reply);
    std::size_t i = 0;
    while (i < lines.size())
    {
        auto rest = fence_rest(lines[i].text);
        if (!rest)
        {
            ++i;
            continue;
        }
        Block block;
        block.offset = lines[i].begin;
        auto header = text::trim(*rest);
        auto sp = header.find_first_of(" \t");
        block.label = std::string(header.substr(0, sp));
        if (sp != std::string_view::npos)
            block.info = std::string(text::trim(header.substr(sp)));

        std::string body;
        bool closed = false;
        std::size_t j = i + 1;
        for (; j < lines.size(); ++j)
        {
            if (fence_rest(lines[j].text))
            {
                closed = true;
                break;
            }
            if (j > i + 1)
                body += '\n';
            body += lines[j].text;
        }
        block.body = std::move(body);
        result.blocks.push_back(std::move(block));
        if (!closed)
        {
            result.unterminated = true;
            break;
        }
        i = j + 1;
    }
    return result;
}

auto parse_blocks(std::string_view reply) -> std::vector<Block>
{
    return parse_blocks_ex(reply).blocks;
}

auto extract(const std::vector<Block>& blocks, std::string_view label) -> std::optional<Block>
{
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it)
        if (it->label == label)
            return *it;
    return std::nullopt;
}

auto extract_ci(const std::vector<Block>& blocks, std::string_view label) -> std::optional<Block>
{
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it)
        if (text::iequals(it->label, label))
            return *it;
    return std::nullopt;
}

auto emit(std::string_view label, std::string_view body) -> std::string
{
    std::string out = "```";
    out += label;
    out += '\n';
    out += body;
    out += "\n```\n";
    return out;
}

auto emit(const Block& block) -> std::string
{
    return emit(block.label, block.body);
}

auto parse_decision_ex(std::string_view body) -> DecisionParse
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(body.begin(), body.end(), nullptr, true, true);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DecisionParseError(std::string("malformed decision: ") + e.what());
    }
    if (!j.is_object())
        throw DecisionParseError("decision is not a JSON object");

    auto str = [&](const char* key) -> std::string {
        if (!j.contains(key) || j[key].is_null())
            return {};
        if (j[key].is_string())
            return j[key].get<std::string>();
        return j[key].dump();
    };

    DecisionParse out;
    auto action = text::to_lower(text::trim(str("action")));
    if (action == "stop")
        out.decision.action = MetaAction::Stop;
    else if (action == "continue")
        out.decision.action = MetaAction::Continue;
    else
        throw DecisionParseError("invalid action '" + str("action") + "'");

    out.decision.stop_reason = str("stop_reason");
    out.decision.decision_reason = str("decision_reason");
    out.decision.next_start_reason = str("next_start_reason");

    auto next = text::to_lower(text::trim(str("next_start")));
    auto stage = stage_from_string(next);
    if (next.empty())
        out.decision.next_start = Stage::Planning;
    else if (!stage || !(*stage == Stage::DataUnderstanding || *stage == Stage::Planning
                         || *stage == Stage::CodeExecution))
    {
        out.warnings.push_back("unknown next_start '" + next + "', using planning");
        out.decision.next_start = Stage::Planning;
    }
    else
        out.decision.next_start = *stage;

    if (out.decision.action == MetaAction::Stop && text::trim(out.decision.stop_reason).empty())
    {
        out.warnings.push_back("stop without stop_reason");
        out.decision.stop_reason = text::trim(out.decision.decision_reason).empty()
                                       ? "Stopped by meta agent"
                                       : out.decision.decision_reason;
    }
    return out;
}

auto parse_decision(std::string_view body) -> MetaDecision
{
    return parse_decision_ex(body).decision;
}

auto parse_status(std::string_view body) -> StatusSignal
{
    auto t = text::trim(body);
    if (text::iequals(t, "CONTINUE"))
        return StatusSignal::Continue;
    if (text::iequals(t, "FINISH"))
        return StatusSignal::Finish;
    throw StatusParseError("invalid status token '" + std::string(t) + "'");
}

auto to_string(StatusSignal s) -> std::string_view
{
    return s == StatusSignal::Finish ? "FINISH" : "CONTINUE";
}

} // namespace medloop
