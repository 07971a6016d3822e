// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/scorekit.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace medloop::score
{

/// A method-by-column grid read from a tab-separated fixture file.
/// Lines starting with '#' are comments; the first other line names the columns.
/// Cells reading Fail or N/A are absent.
struct Table
{
    std::vector<std::string> columns;
    std::vector<std::string> methods;
    std::map<std::string, std::vector<std::optional<double>>> rows;

    [[nodiscard]] auto cell(const std::string& method, std::size_t col) const -> std::optional<double>;
};

struct TaskInfo
{
    std::string task;
    std::string perf_metric;
    MetricKind perf_kind = MetricKind::AccuracyLike;
    std::string unc_metric;
    MetricKind unc_kind = MetricKind::LossLike;
};

struct BenchmarkData
{
    std::vector<TaskInfo> tasks;
    Table performance;
    Table uncertainty;
    Table success_model;
    Table success_uncertainty;
};

struct MethodScores
{
    std::string method;
    std::vector<ScoreCard> cards; ///< One per task, in task order.
    Aggregate avg;
};

[[nodiscard]] auto read_table(const std::filesystem::path& path) -> Table;
[[nodiscard]] auto read_tasks(const std::filesystem::path& path) -> std::vector<TaskInfo>;

/// Loads tasks.tsv, raw_performance.tsv, raw_uncertainty.tsv, success_model.tsv and
/// success_uncertainty.tsv from `dir`.
[[nodiscard]] auto load_benchmark(const std::filesystem::path& dir) -> BenchmarkData;

[[nodiscard]] auto outcomes_for(const BenchmarkData& data, const std::string& method)
    -> std::vector<TaskOutcome>;

/// Scores every method in table order.
[[nodiscard]] auto score_benchmark(const BenchmarkData& data) -> std::vector<MethodScores>;

/// Renders one metric of every method as a tab-separated table with an AVG column.
enum class Column
{
    Sr,
    Perf,
    Unc,
    Nps,
    Cs,
};

[[nodiscard]] auto render_table(const std::vector<MethodScores>& scores,
                                const std::vector<TaskInfo>& tasks,
                                Column column) -> std::string;

} // namespace medloop::score
