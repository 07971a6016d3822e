// SPDX-License-Identifier: Apache-2.0
#include <medloop/agent_design.hpp>
#include <medloop/errors.hpp>
#include <medloop/prompts.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>

namespace medloop
{

auto build_requirement_summary(const std::string& task_text,
                               const std::string& profile,
                               const std::string& snapshots,
                               const std::string& device_info,
                               const PipelineConfig& cfg) -> RequirementSummary
{
    const auto& d = cfg.design;
    RequirementSummary s;
    s.task = text::or_none(text::truncate_head(task_text, static_cast<std::size_t>(d.max_chars_task)));
    s.profile = text::or_none(text::truncate_head(profile, static_cast<std::size_t>(d.max_chars_data_report)));
    s.memory = text::or_none(text::truncate_tail(snapshots, static_cast<std::size_t>(d.max_chars_feedback)));
    s.device_info = text::or_none(device_info, "unknown");
    return s;
}

namespace
{
    auto plan_check(bool refined) -> ReplyCheck
    {
        return [refined](const std::string& reply) -> Checked {
            auto block = extract_ci(parse_blocks(reply), "plan_md");
            if (!block || text::trim(block->body).empty())
                return Checked::bad("no non-empty ```plan_md block found.");
            if (refined && text::to_lower(block->body).find(text::to_lower(prompts::review_header)) != std::string::npos)
                return Checked::bad(fmt::format("the plan contains the reviewer's \"{}\" section.", prompts::review_header));
            return Checked::ok(std::string(text::trim(block->body)) + "\n");
        };
    }

    auto review_check(const std::string& reply) -> Checked
    {
        auto block = extract_ci(parse_blocks(reply), "review");
        if (!block || text::trim(block->body).empty())
            return Checked::bad("no non-empty ```review block found.");
        return Checked::ok(std::string(text::trim(block->body)) + "\n");
    }
} // namespace

auto run_design_agent(const RequirementSummary& summary,
                      RetrievalProvider& retrieval,
                      const std::string& unc_catalog,
                      const PipelineConfig& cfg,
                      Gateway& gateway,
                      const AgentContext& ctx) -> ExperimentalPlan
{
    const auto& d = cfg.design;
    auto query = summary.task + "\n" + text::truncate_head(summary.profile, 2000);
    auto bundle = retrieval.retrieve(query);
    auto retrieved = render_bundle(bundle, static_cast<std::size_t>(d.max_chars_retrieval));

    std::string draft_prompt = prompts::planner_draft;
    if (!d.enable_uncertainty)
    {
        // drop the catalog slot together with its caption
        constexpr std::string_view slot = "Uncertainty quantification methods to choose from:\n{uncertainty_methods}\n\n";
        if (auto pos = draft_prompt.find(slot); pos != std::string::npos)
            draft_prompt.erase(pos, slot.size());
    }
    auto user = text::render(draft_prompt,
                             { { "task", summary.task },
                               { "data_report", summary.profile },
                               { "memory", summary.memory },
                               { "device_info", summary.device_info },
                               { "retrieval", retrieved },
                               { "uncertainty_methods", text::or_none(unc_catalog) } });

    auto fail = [&](const Exchange& ex, const std::string& what) {
        text::write_file(ctx.stage_dir / "rejected_reply.md", ex.last_reply);
        throw PlanFormatError(what + ": " + ex.problem);
    };

    auto ex = ask_with_reprompt(gateway, d.llm, prompts::planner_system, user, { "planner", ctx.round_idx, 0 },
                                ctx.stage_dir, plan_check(false), prompts::plan_reformat, { { "label", "plan_md" } });
    if (!ex.value)
        fail(ex, "planner draft rejected twice");

    ExperimentalPlan plan;
    plan.plan_text = *ex.value;
    plan.revision = 0;
    text::write_file(ctx.stage_dir / "draft_0.md", plan.plan_text);

    for (int k = 1; k <= d.review_rounds; ++k)
    {
        auto review_user = text::render(prompts::reviewer_review,
                                        { { "task", summary.task },
                                          { "data_report", summary.profile },
                                          { "plan", plan.plan_text },
                                          { "review_header", std::string(prompts::review_header) } });
        auto rv = ask_with_reprompt(gateway, d.llm, prompts::reviewer_system, review_user, { "reviewer", ctx.round_idx, k },
                                    ctx.stage_dir, review_check, prompts::plan_reformat, { { "label", "review" } });
        if (!rv.value)
            fail(rv, fmt::format("review {} rejected twice", k));
        text::write_file(ctx.stage_dir / fmt::format("review_{}.md", k), *rv.value);

        auto refine_user = text::render(prompts::planner_refine,
                                        { { "plan", plan.plan_text },
                                          { "review", *rv.value },
                                          { "review_header", std::string(prompts::review_header) } });
        auto rf = ask_with_reprompt(gateway, d.llm, prompts::planner_system, refine_user, { "planner", ctx.round_idx, k },
                                    ctx.stage_dir, plan_check(true), prompts::plan_reformat, { { "label", "plan_md" } });
        if (!rf.value)
            fail(rf, fmt::format("refined plan {} rejected twice", k));
        plan.plan_text = *rf.value;
        plan.revision = k;
        text::write_file(ctx.stage_dir / fmt::format("draft_{}.md", k), plan.plan_text);
    }

    plan.path = ctx.stage_dir / "final_plan.md";
    text::write_file(plan.path, plan.plan_text);
    return plan;
}

} // namespace medloop
