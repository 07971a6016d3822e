// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/agent_common.hpp>
#include <medloop/core_model.hpp>
#include <medloop/exec_session.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace medloop
{

struct ExplorationStep
{
    std::string purpose;
    std::string code;
    std::string observation;
    bool screened_out = false;
};

struct DataProfile
{
    std::string report_text;
    std::filesystem::path path;
    std::vector<ExplorationStep> history;
};

struct DataPrior
{
    std::string previous_profile;
    std::string additional_requirements;
};

/// Headings from the profile template that `report` lacks.
[[nodiscard]] auto missing_profile_headers(std::string_view report) -> std::vector<std::string>;

/// Observation digest for the step prompt: every (purpose, observation) pair so far.
[[nodiscard]] auto render_exploration_history(const std::vector<ExplorationStep>& history) -> std::string;

/// Renders "- label: path" lines.
[[nodiscard]] auto render_data_paths(const TaskSpec& task) -> std::string;

/// JSON object of label -> path, exported to sessions as MEDLOOP_DATA_PATHS.
[[nodiscard]] auto data_paths_json(const TaskSpec& task) -> std::string;

/// Explores the data through `session` (which must screen fragments) and writes
/// report.md and exploration.md into ctx.stage_dir. Throws ProfileFormatError, SessionError.
auto run_data_agent(const TaskSpec& task,
                    const PipelineConfig& cfg,
                    Gateway& gateway,
                    Session& session,
                    const DataPrior& prior,
                    const AgentContext& ctx) -> DataProfile;

} // namespace medloop
