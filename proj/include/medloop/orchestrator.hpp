// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/config.hpp>
#include <medloop/core_model.hpp>
#include <medloop/llm_gateway.hpp>
#include <medloop/tools.hpp>

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace medloop
{

inline constexpr int summary_schema_version = 1;

/// Parses task text. Relative dataset paths resolve against `base_dir`.
[[nodiscard]] auto parse_task_text(const std::string& text, const std::filesystem::path& base_dir = {}) -> TaskSpec;

/// Reads and parses a task file. Throws TaskParseError naming the missing field, FilesystemError.
[[nodiscard]] auto parse_task_file(const std::filesystem::path& path) -> TaskSpec;

/// Built-in direction for well-known metric names, if any.
[[nodiscard]] auto metric_direction_for(std::string_view metric_name) -> std::optional<MetricDirection>;

/// Appends `round` to the history and updates the best value. `oriented_value` is lower-is-better.
[[nodiscard]] auto update_history(HistorySummary history,
                                  PreviousRound round,
                                  std::optional<double> oriented_value,
                                  double min_delta) -> HistorySummary;

/// Hard stop rules first, then the model decision, then the status heuristic.
[[nodiscard]] auto decide(int round_idx,
                          const PipelineConfig& cfg,
                          const HistorySummary& history,
                          ExecutionStatus execution_status,
                          const std::optional<MetaDecision>& model_decision) -> MetaDecision;

/// Round snapshot with plan, execution and feedback slots, each bounded by `bound`.
[[nodiscard]] auto build_memory_unit(int round_idx,
                                     const std::string& plan_text,
                                     const std::string& execution_tail,
                                     const std::string& feedback_text,
                                     std::size_t bound) -> MemoryUnit;

/// Concatenation of every unit, in round order.
[[nodiscard]] auto render_snapshots(const std::vector<MemoryUnit>& memory) -> std::string;

struct PipelineState
{
    TaskSpec task;
    PipelineConfig cfg;
    std::vector<RoundArtifacts> rounds;
    std::vector<Stage> start_stages;
    std::vector<MetaDecision> decisions;
    std::vector<MemoryUnit> memory;
    HistorySummary history;
    Stage next_start = Stage::DataUnderstanding;
    std::filesystem::path output_root;
};

/// Appends the unit for the latest round and rewrites snapshots.md and the round's round_snapshot.md.
void update_memory(PipelineState& state,
                   const std::string& plan_text,
                   const std::string& execution_tail,
                   const std::string& feedback_text);

struct ReportRecord
{
    bool ran = false;
    std::string status;
    std::string source_ref;
    std::string compiled_ref;
    int fix_attempts = 0;
    std::string error;
};

struct PipelineSummary
{
    std::string task_name;
    std::string task_file;
    std::string output_dir;
    std::string status = "completed"; ///< completed, failed or interrupted.
    std::string error;
    std::string stop_reason;
    std::vector<RoundArtifacts> rounds;
    std::vector<Stage> start_stages;
    std::vector<MetaDecision> decisions;
    HistorySummary history;
    std::size_t memory_units = 0;
    ReportRecord report;
    std::map<std::string, TokenUsage> stage_usage;
    TokenUsage total_usage;

    [[nodiscard]] auto to_json() const -> nlohmann::json;
};

/// Collaborators the pipeline drives. All references must outlive the run.
struct Providers
{
    Gateway& gateway;
    ImageAnalyzer& analyzer;
    DocumentCompiler& compiler;
    RetrievalProvider& retrieval;
};

struct ResumePoint
{
    std::filesystem::path round_dir;
    Stage from_stage = Stage::Meta;
};

struct RunOptions
{
    std::filesystem::path output_root;
    std::optional<ResumePoint> resume;
    /// Polled between stages; a set flag ends the run with an interrupted summary.
    const std::atomic<bool>* cancel = nullptr;
    /// Overrides the probed device description given to the planner.
    std::optional<std::string> device_info;
};

/// Runs the round loop and the final report. With a resume point, the task file recorded in the
/// run directory is used when `task_path` is empty. Writes pipeline_summary.json, timing.json and
/// run_config.json under the output root. Throws FatalProviderError and FilesystemError after
/// persisting a partial summary.
auto run_pipeline(const std::filesystem::path& task_path,
                  const PipelineConfig& cfg,
                  Providers providers,
                  const RunOptions& options) -> PipelineSummary;

/// Directory name of a round.
[[nodiscard]] auto round_dir_name(int round_idx) -> std::string;

/// Human-readable digest of a round directory.
[[nodiscard]] auto inspect_round(const std::filesystem::path& round_dir) -> std::string;

} // namespace medloop
