// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/agent_common.hpp>
#include <medloop/tools.hpp>

#include <filesystem>
#include <string>

namespace medloop
{

struct RequirementSummary
{
    std::string task;
    std::string profile;
    std::string memory;
    std::string device_info;
};

struct ExperimentalPlan
{
    std::string plan_text;
    int revision = 0;
    std::filesystem::path path;
};

/// Task and profile keep their heads, snapshots keep their tail; blank slots read "None".
[[nodiscard]] auto build_requirement_summary(const std::string& task_text,
                                             const std::string& profile,
                                             const std::string& snapshots,
                                             const std::string& device_info,
                                             const PipelineConfig& cfg) -> RequirementSummary;

/// Planner draft, then review_rounds cycles of review and refinement. Writes draft_k.md,
/// review_k.md and final_plan.md into ctx.stage_dir. Throws PlanFormatError.
auto run_design_agent(const RequirementSummary& summary,
                      RetrievalProvider& retrieval,
                      const std::string& unc_catalog,
                      const PipelineConfig& cfg,
                      Gateway& gateway,
                      const AgentContext& ctx) -> ExperimentalPlan;

} // namespace medloop
