// SPDX-License-Identifier: Apache-2.0
#include <medloop/errors.hpp>
#include <medloop/text_util.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace medloop::text
{

namespace
{

auto is_continuation(char c) -> bool
{
    return (static_cast<unsigned char>(c) & 0xC0U) == 0x80U;
}

} // namespace

auto truncate_head(std::string_view text, std::size_t max_chars) -> std::string
{
    if (text.size() <= max_chars)
        return std::string(text);
    auto cut = max_chars;
    while (cut > 0 && is_continuation(text[cut]))
        --cut;
    return std::string(text.substr(0, cut));
}

auto truncate_tail(std::string_view text, std::size_t max_chars) -> std::string
{
    if (text.size() <= max_chars)
        return std::string(text);
    auto start = text.size() - max_chars;
    while (start < text.size() && is_continuation(text[start]))
        ++start;
    return std::string(text.substr(start));
}

auto trim(std::string_view text) -> std::string_view
{
    auto const isSpace = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!text.empty() && isSpace(text.front()))
        text.remove_prefix(1);
    while (!text.empty() && isSpace(text.back()))
        text.remove_suffix(1);
    return text;
}

auto to_lower(std::string_view text) -> std::string
{
    auto out = std::string(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

auto iequals(std::string_view a, std::string_view b) -> bool
{
    return a.size() == b.size() && to_lower(a) == to_lower(b);
}

auto starts_with_ci(std::string_view text, std::string_view prefix) -> bool
{
    return text.size() >= prefix.size() && iequals(text.substr(0, prefix.size()), prefix);
}

auto normalize_key(std::string_view text) -> std::string
{
    auto out = std::string {};
    for (unsigned char c: text)
        if (std::isalnum(c))
            out.push_back(static_cast<char>(std::tolower(c)));
    return out;
}

auto count_occurrences(std::string_view haystack, std::string_view needle) -> std::size_t
{
    if (needle.empty())
        return 0;
    auto count = std::size_t {0};
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++count;
    return count;
}

auto render(std::string_view tmpl, const std::map<std::string, std::string>& vars) -> std::string
{
    auto out = std::string {};
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size())
    {
        if (tmpl[i] == '{')
        {
            auto const close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos)
            {
                auto const key = std::string(tmpl.substr(i + 1, close - i - 1));
                if (auto it = vars.find(key); it != vars.end())
                {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

auto or_none(std::string_view text, std::string_view fallback) -> std::string
{
    return trim(text).empty() ? std::string(fallback) : std::string(text);
}

auto read_file(const std::filesystem::path& path) -> std::string
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw FilesystemError("cannot read " + path.string());
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    return buffer.str();
}

auto read_file_if_exists(const std::filesystem::path& path) -> std::string
{
    auto ec = std::error_code {};
    if (path.empty() || !std::filesystem::is_regular_file(path, ec))
        return {};
    return read_file(path);
}

namespace
{

void write_impl(const std::filesystem::path& path, std::string_view content, std::ios::openmode mode)
{
    auto ec = std::error_code {};
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path(), ec);
    if (ec)
        throw FilesystemError("cannot create " + path.parent_path().string() + ": " + ec.message());
    auto out = std::ofstream(path, mode | std::ios::binary);
    if (!out)
        throw FilesystemError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw FilesystemError("write failed for " + path.string());
}

} // namespace

void write_file(const std::filesystem::path& path, std::string_view content)
{
    write_impl(path, content, std::ios::trunc);
}

void append_file(const std::filesystem::path& path, std::string_view content)
{
    write_impl(path, content, std::ios::app);
}

} // namespace medloop::text
