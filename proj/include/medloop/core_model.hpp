// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace medloop
{

enum class MetricDirection
{
    HigherBetter,
    LowerBetter,
};

struct DataPath
{
    std::string label;
    std::filesystem::path path;

    auto operator==(const DataPath&) const -> bool = default;
};

/// A parsed task file.
struct TaskSpec
{
    std::string name;
    std::string description;
    std::string metric_name;
    MetricDirection metric_direction = MetricDirection::HigherBetter;
    std::vector<DataPath> data_paths;
    std::optional<std::filesystem::path> data_root;

    /// Throws TaskParseError when a field breaks its invariant.
    void validate() const;

    /// Maps a raw metric value into lower-is-better orientation.
    [[nodiscard]] auto oriented(double value) const -> double
    {
        return metric_direction == MetricDirection::HigherBetter ? -value : value;
    }

    auto operator==(const TaskSpec&) const -> bool = default;
};

/// Pipeline stages. The string forms double as directory names in the output layout.
enum class Stage
{
    DataUnderstanding,
    Planning,
    CodeExecution,
    Meta,
    ReportGeneration,
};

[[nodiscard]] auto to_string(Stage stage) -> std::string_view;
[[nodiscard]] auto stage_from_string(std::string_view text) -> std::optional<Stage>;

struct TokenPrices
{
    double input = 0.0;
    double output = 0.0;
    double cache = 0.0;

    auto operator==(const TokenPrices&) const -> bool = default;
};

/// Token counts of one or more model calls. Cache hits are a subset of input tokens.
struct TokenUsage
{
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t cache_hit_tokens = 0;
    std::int64_t total_tokens = 0;
    double cost = 0.0;

    /// Builds a usage record with derived total and cost.
    [[nodiscard]] static auto from_counts(std::int64_t input,
                                          std::int64_t output,
                                          std::int64_t cache,
                                          const TokenPrices& prices = {}) -> TokenUsage;

    /// Recomputes cost from the counts.
    [[nodiscard]] auto priced(const TokenPrices& prices) const -> TokenUsage;

    auto operator+=(const TokenUsage& other) -> TokenUsage&;
    friend auto operator+(TokenUsage a, const TokenUsage& b) -> TokenUsage { return a += b; }
    auto operator==(const TokenUsage&) const -> bool = default;
};

enum class ExecutionStatus
{
    Success,
    Failure,
    Unknown,
};

[[nodiscard]] auto to_string(ExecutionStatus status) -> std::string_view;
[[nodiscard]] auto execution_status_from_string(std::string_view text) -> ExecutionStatus;

/// Everything one round produced. Paths are empty when the stage did not run.
struct RoundArtifacts
{
    int round_idx = 1;
    std::string data_report_ref;
    std::string plan_ref;
    std::string execution_dir;
    ExecutionStatus execution_status = ExecutionStatus::Unknown;
    std::string feedback_ref;
    std::string metrics_ref;
    std::optional<double> primary_metric_value;
    std::map<std::string, double> stage_durations;
    std::map<std::string, TokenUsage> stage_token_usage;
    std::string failure_reason;

    auto operator==(const RoundArtifacts&) const -> bool = default;
};

struct MemoryUnit
{
    int round_idx = 1;
    std::string summary_text;

    auto operator==(const MemoryUnit&) const -> bool = default;
};

struct PreviousRound
{
    int round_idx = 1;
    std::optional<double> primary_metric_value;
    ExecutionStatus status = ExecutionStatus::Unknown;
    std::string plan_excerpt;
    std::string execution_excerpt;
    std::string feedback_excerpt;

    auto operator==(const PreviousRound&) const -> bool = default;
};

/// Improvement tracking. best_metric_value is in lower-is-better orientation.
struct HistorySummary
{
    std::optional<double> best_metric_value;
    std::optional<int> best_round_idx;
    int no_improve_rounds = 0;
    std::vector<PreviousRound> previous_rounds;

    auto operator==(const HistorySummary&) const -> bool = default;
};

enum class MetaAction
{
    Continue,
    Stop,
};

struct MetaDecision
{
    MetaAction action = MetaAction::Continue;
    Stage next_start = Stage::Planning;
    std::string stop_reason;
    std::string decision_reason;
    std::string next_start_reason;

    [[nodiscard]] static auto stop(std::string reason, std::string why = {}) -> MetaDecision;
    [[nodiscard]] static auto proceed(Stage next, std::string why = {}) -> MetaDecision;

    auto operator==(const MetaDecision&) const -> bool = default;
};

// JSON forms. Parsing the output of to_json yields an equal value.
void to_json(nlohmann::json& j, const TaskSpec& v);
void from_json(const nlohmann::json& j, TaskSpec& v);
void to_json(nlohmann::json& j, const TokenUsage& v);
void from_json(const nlohmann::json& j, TokenUsage& v);
void to_json(nlohmann::json& j, const RoundArtifacts& v);
void from_json(const nlohmann::json& j, RoundArtifacts& v);
void to_json(nlohmann::json& j, const MemoryUnit& v);
void from_json(const nlohmann::json& j, MemoryUnit& v);
void to_json(nlohmann::json& j, const PreviousRound& v);
void from_json(const nlohmann::json& j, PreviousRound& v);
void to_json(nlohmann::json& j, const HistorySummary& v);
void from_json(const nlohmann::json& j, HistorySummary& v);
void to_json(nlohmann::json& j, const MetaDecision& v);
void from_json(const nlohmann::json& j, MetaDecision& v);

} // namespace medloop
