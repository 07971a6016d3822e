// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/agent_common.hpp>
#include <medloop/core_model.hpp>
#include <medloop/exec_session.hpp>
#include <medloop/tools.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace medloop
{

struct StepRecord
{
    int step_no = 1;
    std::string purpose;
    std::string code; ///< Code of the last attempt.
    ExecResult result;
    StatusSignal status_signal = StatusSignal::Continue;
    int retries_used = 0;
    std::vector<std::string> error_history;
};

enum class ExecutionFailure
{
    None,
    StepBudgetExhausted,
    RetryBudgetExhausted,
    FormatError,
};

[[nodiscard]] auto to_string(ExecutionFailure f) -> std::string_view;

struct ExecutionRecord
{
    std::vector<StepRecord> steps;
    ExecutionStatus overall_status = ExecutionStatus::Failure;
    ExecutionFailure failure = ExecutionFailure::None;
    std::string failure_detail;
    std::optional<std::filesystem::path> metrics_ref;
    std::optional<double> primary_metric_value;
    std::vector<std::filesystem::path> artifacts; ///< Relative to execution_dir.
    std::filesystem::path execution_dir;
};

/// Success iff the last step finished and its final attempt ran cleanly.
[[nodiscard]] auto overall_status_of(const std::vector<StepRecord>& steps) -> ExecutionStatus;

struct FeedbackReport
{
    std::string report_text;
    std::filesystem::path path;
};

/// Figure answers keyed by image path, then question. Backed by image_descriptions.json.
class ImageDescriptions
{
  public:
    explicit ImageDescriptions(std::filesystem::path file = {});

    [[nodiscard]] auto find(const std::string& image, const std::string& question) const
        -> std::optional<std::string>;
    /// Stores an answer and rewrites the backing file, when there is one.
    void put(const std::string& image, const std::string& question, const std::string& answer);
    [[nodiscard]] auto size() const -> std::size_t;
    [[nodiscard]] auto render() const -> std::string;
    [[nodiscard]] auto file() const -> const std::filesystem::path& { return file_; }

  private:
    std::filesystem::path file_;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> entries_;
};

struct MetricsHit
{
    std::filesystem::path file;
    double value = 0.0;
};

/// Newest metrics or results file under `execution_dir` holding a value for `metric_name`.
[[nodiscard]] auto find_metrics(const std::filesystem::path& execution_dir, const std::string& metric_name)
    -> std::optional<MetricsHit>;

[[nodiscard]] auto extract_metrics(const std::filesystem::path& execution_dir, const std::string& metric_name)
    -> std::optional<double>;

/// Executes the plan step by step in `session`, inside ctx.stage_dir. Writes step_k.code,
/// run_stdout.log and run_summary.json. Budget and format failures are recorded, not thrown.
auto run_execution_phase(const std::string& plan,
                         const std::string& profile,
                         const TaskSpec& task,
                         const PipelineConfig& cfg,
                         Gateway& gateway,
                         Session& session,
                         const AgentContext& ctx) -> ExecutionRecord;

/// Summary of an execution record used by the feedback and meta prompts.
[[nodiscard]] auto render_execution_summary(const ExecutionRecord& record, std::size_t max_chars) -> std::string;

/// Analysis loop in the surviving session, then the report at feedback/report.md.
/// Throws FeedbackFormatError.
auto run_feedback_phase(const ExecutionRecord& execution,
                        const std::string& plan,
                        const TaskSpec& task,
                        ImageAnalyzer& images,
                        const PipelineConfig& cfg,
                        Gateway& gateway,
                        Session& session,
                        const AgentContext& ctx) -> FeedbackReport;

} // namespace medloop
