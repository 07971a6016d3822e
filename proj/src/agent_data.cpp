// SPDX-License-Identifier: Apache-2.0
#include <medloop/agent_data.hpp>
#include <medloop/errors.hpp>
#include <medloop/prompts.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace medloop
{

namespace
{
    auto first_prose_line(std::string_view reply) -> std::string
    {
        bool inside = false;
        std::size_t pos = 0;
        while (pos <= reply.size())
        {
            auto nl = reply.find('\n', pos);
            auto line = text::trim(reply.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
            if (line.rfind("```", 0) == 0)
                inside = !inside;
            else if (!inside && !line.empty())
                return text::truncate_head(line, 200);
            if (nl == std::string_view::npos)
                break;
            pos = nl + 1;
        }
        return {};
    }

    auto join(const std::vector<std::string>& items) -> std::string
    {
        std::string out;
        for (const auto& s: items)
            out += (out.empty() ? "" : ", ") + s;
        return out;
    }
} // namespace

auto missing_profile_headers(std::string_view report) -> std::vector<std::string>
{
    std::vector<std::string> missing;
    for (auto h: prompts::data_report_headers)
        if (!has_heading(report, h))
            missing.emplace_back(h);
    return missing;
}

auto render_exploration_history(const std::vector<ExplorationStep>& history) -> std::string
{
    if (history.empty())
        return "None";
    std::string out;
    for (std::size_t i = 0; i < history.size(); ++i)
        out += fmt::format("### Step {}: {}\n{}\n\n", i + 1, history[i].purpose, history[i].observation);
    return out;
}

auto render_data_paths(const TaskSpec& task) -> std::string
{
    if (task.data_paths.empty())
        return "None";
    std::string out;
    for (const auto& p: task.data_paths)
        out += fmt::format("- {}: {}\n", p.label, p.path.string());
    return out;
}

auto data_paths_json(const TaskSpec& task) -> std::string
{
    auto j = nlohmann::json::object();
    for (const auto& p: task.data_paths)
        j[p.label] = p.path.string();
    return j.dump();
}

auto run_data_agent(const TaskSpec& task,
                    const PipelineConfig& cfg,
                    Gateway& gateway,
                    Session& session,
                    const DataPrior& prior,
                    const AgentContext& ctx) -> DataProfile
{
    const auto& dc = cfg.data;
    auto obs_limit = static_cast<std::size_t>(dc.max_observation_chars);
    auto denylist = session.config().denylist.empty() ? default_denylist() : session.config().denylist;

    auto system = text::render(
        prompts::data_system,
        { { "task", task.description },
          { "data_paths", render_data_paths(task) },
          { "previous_profile",
            text::or_none(text::truncate_head(prior.previous_profile, static_cast<std::size_t>(dc.max_chars_previous_profile))) },
          { "additional_requirements",
            text::or_none(text::truncate_head(prior.additional_requirements, static_cast<std::size_t>(dc.max_chars_requirements))) } });

    DataProfile profile;
    int calls = 0;
    for (int it = 1; it <= dc.max_iterations; ++it)
    {
        calls = it;
        auto user = text::render(prompts::data_step,
                                 { { "iteration", std::to_string(it) },
                                   { "max_iterations", std::to_string(dc.max_iterations) },
                                   { "history", render_exploration_history(profile.history) } });
        auto reply = gateway
                         .chat(ChatRequest::from(dc.llm, { { Role::System, system }, { Role::User, user } }),
                               { "data_agent", ctx.round_idx, it },
                               ctx.stage_dir)
                         .content;
        auto blocks = parse_blocks(reply);
        auto code = extract_ci(blocks, "python");
        if (!code || text::trim(code->body).empty())
        {
            spdlog::info("data agent finished exploring after {} step(s)", profile.history.size());
            break;
        }
        ExplorationStep step;
        auto purpose = extract_ci(blocks, "purpose");
        step.purpose = purpose ? std::string(text::trim(purpose->body)) : first_prose_line(reply);
        if (step.purpose.empty())
            step.purpose = fmt::format("exploration step {}", it);
        step.code = code->body;

        auto screen = screen_readonly(step.code, denylist);
        if (!screen.pass())
        {
            step.screened_out = true;
            step.observation = fmt::format(
                "Fragment rejected without running: it uses forbidden operations ({}). Use read-only data access.",
                join(screen.matched));
        }
        else
        {
            if (session.state() == SessionState::Dead)
                session.revive(dc.timeout_seconds);
            auto r = session.exec(step.code, dc.timeout_seconds);
            std::string obs = r.stdout_text;
            if (!r.exit_ok)
                obs += (obs.empty() ? "" : "\n") + std::string("Error:\n") + r.stderr_text;
            if (text::trim(obs).empty())
                obs = "(no output)";
            step.observation = text::truncate_tail(obs, obs_limit);
        }
        profile.history.push_back(std::move(step));
    }

    auto history_text = render_exploration_history(profile.history);
    auto headers = join_lines(prompts::data_report_headers);
    auto final_prompt = text::render(prompts::data_final, { { "history", history_text }, { "headers", headers } });
    auto check = [](const std::string& reply) -> Checked {
        auto block = extract_ci(parse_blocks(reply), "Data_Analysis_Report");
        if (!block)
            return Checked::bad("no ```Data_Analysis_Report block found.");
        auto missing = missing_profile_headers(block->body);
        if (!missing.empty())
            return Checked::bad("the profile lacks the headings: " + join(missing) + ".");
        return Checked::ok(std::string(text::trim(block->body)) + "\n");
    };
    auto ex = ask_with_reprompt(gateway, dc.llm, system, final_prompt,
                                { "data_agent", ctx.round_idx, calls + 1 },
                                ctx.stage_dir, check, prompts::data_reformat, { { "headers", headers } });

    std::string log = "# Data exploration\n\n";
    for (std::size_t i = 0; i < profile.history.size(); ++i)
    {
        const auto& s = profile.history[i];
        log += fmt::format("## Step {}{}\n\nPurpose: {}\n\n```python\n{}\n```\n\nObservation:\n\n```text\n{}\n```\n\n",
                           i + 1, s.screened_out ? " (rejected)" : "", s.purpose, s.code, s.observation);
    }
    text::write_file(ctx.stage_dir / "exploration.md", log);

    if (!ex.value)
    {
        text::write_file(ctx.stage_dir / "rejected_report.md", ex.last_reply);
        throw ProfileFormatError("data profile rejected twice: " + ex.problem);
    }
    profile.report_text = *ex.value;
    profile.path = ctx.stage_dir / "report.md";
    text::write_file(profile.path, profile.report_text);
    return profile;
}

} // namespace medloop
