// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/core_model.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace medloop
{

/// One labeled fenced region of a model reply.
struct Block
{
    std::string label;
    std::string body;
    std::string info;       ///< Rest of the opening fence line after the label.
    std::size_t offset = 0; ///< Byte offset of the opening fence in the reply.

    auto operator==(const Block&) const -> bool = default;
};

struct ParseResult
{
    std::vector<Block> blocks;
    bool unterminated = false; ///< The last block ran to end of text.
};

enum class StatusSignal
{
    Continue,
    Finish,
};

struct DecisionParse
{
    MetaDecision decision;
    std::vector<std::string> warnings;
};

/// Splits a reply into its fenced blocks in document order. Never throws.
[[nodiscard]] auto parse_blocks_ex(std::string_view reply) -> ParseResult;
[[nodiscard]] auto parse_blocks(std::string_view reply) -> std::vector<Block>;

/// The last block whose label equals `label` exactly.
[[nodiscard]] auto extract(const std::vector<Block>& blocks, std::string_view label)
    -> std::optional<Block>;

/// Like extract but compares labels case-insensitively.
[[nodiscard]] auto extract_ci(const std::vector<Block>& blocks, std::string_view label)
    -> std::optional<Block>;

/// Renders a block as a fence followed by a newline.
[[nodiscard]] auto emit(const Block& block) -> std::string;
[[nodiscard]] auto emit(std::string_view label, std::string_view body) -> std::string;

/// Throws DecisionParseError on malformed JSON, a non-object, or an unknown action.
[[nodiscard]] auto parse_decision_ex(std::string_view body) -> DecisionParse;
[[nodiscard]] auto parse_decision(std::string_view body) -> MetaDecision;

/// Accepts CONTINUE or FINISH in any case with surrounding whitespace. Throws StatusParseError.
[[nodiscard]] auto parse_status(std::string_view body) -> StatusSignal;

[[nodiscard]] auto to_string(StatusSignal s) -> std::string_view;

} // namespace medloop
