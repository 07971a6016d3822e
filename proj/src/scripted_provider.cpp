// SPDX-License-Identifier: Apache-2.0
#include <medloop/errors.hpp>
#include <medloop/llm_gateway.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <sstream>

namespace medloop
{

namespace
{
    auto split_lines(std::string_view text) -> std::vector<std::string>
    {
        std::vector<std::string> out;
        std::string line;
        std::istringstream in { std::string(text) };
        while (std::getline(in, line))
        {
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            out.push_back(line);
        }
        return out;
    }

    auto is_tilde_fence(std::string_view line) -> bool
    {
        return line.size() >= 4 && line.find_first_not_of('~') == std::string_view::npos;
    }

    auto parse_selector_int(const std::string& token, std::size_t line_no, const char* what)
        -> std::optional<int>
    {
        if (token == "*")
            return std::nullopt;
        try
        {
            std::size_t used = 0;
            auto v = std::stoi(token, &used);
            if (used == token.size())
                return v;
        }
        catch (const std::exception&)
        {
        }
        throw TranscriptFormatError(fmt::format("line {}: bad {} '{}'", line_no, what, token));
    }

    auto parse_count(const std::string& token, std::size_t line_no) -> std::int64_t
    {
        try
        {
            std::size_t used = 0;
            auto v = std::stoll(token, &used);
            if (used == token.size() && v >= 0)
                return v;
        }
        catch (const std::exception&)
        {
        }
        throw TranscriptFormatError(fmt::format("line {}: bad token count '{}'", line_no, token));
    }
} // namespace

auto parse_transcript(std::string_view text) -> std::vector<ScriptEntry>
{
    auto lines = split_lines(text);
    std::size_t i = 0;
    while (i < lines.size() && text::trim(lines[i]).empty())
        ++i;
    if (i == lines.size() || text::trim(lines[i]) != "%transcript v1")
        throw TranscriptFormatError("missing '%transcript v1' header");
    ++i;

    std::vector<ScriptEntry> out;
    while (i < lines.size())
    {
        auto line = text::trim(lines[i]);
        if (line.empty() || line.front() == '#')
        {
            ++i;
            continue;
        }
        if (line.substr(0, 2) != "@@")
            throw TranscriptFormatError(fmt::format("line {}: expected '@@' entry header", i + 1));
        std::istringstream header { std::string(line.substr(2)) };
        std::vector<std::string> tokens;
        for (std::string t; header >> t;)
            tokens.push_back(t);
        if (tokens.size() < 3)
            throw TranscriptFormatError(fmt::format("line {}: header needs agent, round, step", i + 1));

        ScriptEntry e;
        e.agent_name = tokens[0];
        e.round_idx = parse_selector_int(tokens[1], i + 1, "round");
        e.step_idx = parse_selector_int(tokens[2], i + 1, "step");
        std::int64_t in = 0, outt = 0, cache = 0;
        for (std::size_t k = 3; k < tokens.size(); ++k)
        {
            auto eq = tokens[k].find('=');
            if (eq == std::string::npos)
                throw TranscriptFormatError(fmt::format("line {}: bad attribute '{}'", i + 1, tokens[k]));
            auto key = tokens[k].substr(0, eq);
            auto value = parse_count(tokens[k].substr(eq + 1), i + 1);
            if (key == "in")
                in = value;
            else if (key == "out")
                outt = value;
            else if (key == "cache")
                cache = value;
            else
                throw TranscriptFormatError(fmt::format("line {}: unknown attribute '{}'", i + 1, key));
        }
        if (cache > in)
            throw TranscriptFormatError(fmt::format("line {}: cache exceeds input tokens", i + 1));
        e.usage = TokenUsage::from_counts(in, outt, cache);

        ++i;
        if (i == lines.size() || !is_tilde_fence(text::trim(lines[i])))
            throw TranscriptFormatError(fmt::format("line {}: expected opening '~~~~' fence", i + 1));
        auto fence = std::string(text::trim(lines[i]));
        ++i;
        std::string body;
        bool closed = false;
        bool first = true;
        for (; i < lines.size(); ++i)
        {
            if (lines[i] == fence)
            {
                closed = true;
                ++i;
                break;
            }
            if (!first)
                body += '\n';
            body += lines[i];
            first = false;
        }
        if (!closed)
            throw TranscriptFormatError("unterminated reply body for agent " + e.agent_name);
        e.reply = std::move(body);
        out.push_back(std::move(e));
    }
    return out;
}

auto load_transcript(const std::filesystem::path& path) -> std::vector<ScriptEntry>
{
    return parse_transcript(text::read_file(path));
}

auto transcript_from_run(const std::filesystem::path& run_dir) -> std::vector<ScriptEntry>
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir))
        throw FilesystemError("not a directory: " + run_dir.string());
    std::vector<fs::path> files;
    for (const auto& e: fs::recursive_directory_iterator(run_dir))
        if (e.is_regular_file() && e.path().extension() == ".json" && e.path().parent_path().filename() == "llm_calls")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ScriptEntry> out;
    for (const auto& f: files)
    {
        auto j = nlohmann::json::parse(text::read_file(f), nullptr, false);
        if (!j.is_object() || !j.contains("tags") || !j.contains("response"))
            throw TranscriptFormatError("not a call archive: " + f.string());
        ScriptEntry e;
        const auto& tags = j.at("tags");
        e.agent_name = tags.value("agent_name", "*");
        e.round_idx = tags.value("round_idx", 0);
        e.step_idx = tags.value("step_idx", 0);
        const auto& resp = j.at("response");
        e.reply = resp.value("content", "");
        if (resp.contains("usage"))
            e.usage = resp.at("usage").get<TokenUsage>();
        out.push_back(std::move(e));
    }
    return out;
}

auto render_transcript(const std::vector<ScriptEntry>& entries) -> std::string
{
    std::string out = "%transcript v1\n";
    for (const auto& e: entries)
    {
        auto sel = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("*"); };
        out += fmt::format("\n@@ {} {} {} in={} out={} cache={}\n",
                           e.agent_name, sel(e.round_idx), sel(e.step_idx),
                           e.usage.input_tokens, e.usage.output_tokens, e.usage.cache_hit_tokens);
        std::size_t longest = 0;
        for (const auto& line: split_lines(e.reply))
            if (is_tilde_fence(line))
                longest = std::max(longest, line.size());
        auto fence = std::string(std::max<std::size_t>(4, longest + 1), '~');
        out += fence + "\n" + e.reply + "\n" + fence + "\n";
    }
    return out;
}

ScriptedProvider::ScriptedProvider(std::vector<ScriptEntry> entries, TokenPrices prices): prices_(prices)
{
    for (auto& e: entries)
        groups_[Key { e.agent_name, e.round_idx, e.step_idx }].push_back(std::move(e));
}

auto ScriptedProvider::complete(const ChatRequest& request, const CallTags& tags) -> ChatResponse
{
    std::lock_guard lock(mutex_);
    calls_.push_back({ tags, request });

    // candidates ordered from most to least specific
    const Key candidates[] = {
        { tags.agent_name, tags.round_idx, tags.step_idx },
        { tags.agent_name, tags.round_idx, std::nullopt },
        { tags.agent_name, std::nullopt, tags.step_idx },
        { tags.agent_name, std::nullopt, std::nullopt },
        { "*", tags.round_idx, tags.step_idx },
        { "*", tags.round_idx, std::nullopt },
        { "*", std::nullopt, tags.step_idx },
        { "*", std::nullopt, std::nullopt },
    };
    for (const auto& key: candidates)
    {
        auto it = groups_.find(key);
        if (it == groups_.end() || it->second.empty())
            continue;
        auto entry = std::move(it->second.front());
        it->second.pop_front();
        ChatResponse r;
        r.content = std::move(entry.reply);
        r.usage = entry.usage.priced(prices_);
        return r;
    }
    throw ScriptExhausted(fmt::format("no scripted reply for agent={} round={} step={}",
                                      tags.agent_name, tags.round_idx, tags.step_idx));
}

auto ScriptedProvider::calls() const -> std::vector<Call>
{
    std::lock_guard lock(mutex_);
    return calls_;
}

auto ScriptedProvider::remaining() const -> std::size_t
{
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [_, q]: groups_)
        n += q.size();
    return n;
}

} // namespace medloop
