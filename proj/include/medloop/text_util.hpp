// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace medloop::text
{

// Lengths are in bytes. Cut points are moved back so that a UTF-8 sequence is never split,
// hence a result may be up to three bytes shorter than the bound on multibyte input.

/// First `max_chars` bytes of `text`.
[[nodiscard]] auto truncate_head(std::string_view text, std::size_t max_chars) -> std::string;

/// Last `max_chars` bytes of `text`.
[[nodiscard]] auto truncate_tail(std::string_view text, std::size_t max_chars) -> std::string;

[[nodiscard]] auto trim(std::string_view text) -> std::string_view;
[[nodiscard]] auto to_lower(std::string_view text) -> std::string;
[[nodiscard]] auto iequals(std::string_view a, std::string_view b) -> bool;
[[nodiscard]] auto starts_with_ci(std::string_view text, std::string_view prefix) -> bool;

/// Lowercase with every non-alphanumeric character dropped ("Macro-F1" -> "macrof1").
[[nodiscard]] auto normalize_key(std::string_view text) -> std::string;

/// Number of non-overlapping occurrences of `needle`.
[[nodiscard]] auto count_occurrences(std::string_view haystack, std::string_view needle) -> std::size_t;

/// Replaces `{name}` for every key of `vars`; unknown placeholders and other braces are left alone.
[[nodiscard]] auto render(std::string_view tmpl, const std::map<std::string, std::string>& vars)
    -> std::string;

/// Returns `text`, or `fallback` when `text` is blank.
[[nodiscard]] auto or_none(std::string_view text, std::string_view fallback = "None") -> std::string;

[[nodiscard]] auto read_file(const std::filesystem::path& path) -> std::string;

/// Reads the file, or returns an empty string when it does not exist.
[[nodiscard]] auto read_file_if_exists(const std::filesystem::path& path) -> std::string;

/// Writes `content`, creating parent directories. Throws FilesystemError.
void write_file(const std::filesystem::path& path, std::string_view content);
void append_file(const std::filesystem::path& path, std::string_view content);

} // namespace medloop::text
