// SPDX-License-Identifier: Apache-2.0
#include <medloop/agent_coding.hpp>
#include <medloop/agent_data.hpp>
#include <medloop/errors.hpp>
#include <medloop/prompts.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <sstream>

namespace fs = std::filesystem;

namespace medloop
{

auto to_string(ExecutionFailure f) -> std::string_view
{
    switch (f)
    {
        case ExecutionFailure::None: return "none";
        case ExecutionFailure::StepBudgetExhausted: return "step_budget_exhausted";
        case ExecutionFailure::RetryBudgetExhausted: return "retry_budget_exhausted";
        case ExecutionFailure::FormatError: return "format_error";
    }
    return "none";
}

auto overall_status_of(const std::vector<StepRecord>& steps) -> ExecutionStatus
{
    if (steps.empty())
        return ExecutionStatus::Failure;
    const auto& last = steps.back();
    return last.status_signal == StatusSignal::Finish && last.result.exit_ok ? ExecutionStatus::Success
                                                                             : ExecutionStatus::Failure;
}

// ---- image descriptions ----

ImageDescriptions::ImageDescriptions(fs::path file): file_(std::move(file))
{
    if (file_.empty() || !fs::exists(file_))
        return;
    auto j = nlohmann::json::parse(text::read_file(file_), nullptr, false);
    if (!j.is_object())
        return;
    for (const auto& [image, list]: j.items())
    {
        if (!list.is_array())
            continue;
        for (const auto& e: list)
            if (e.is_object())
                entries_[image].emplace_back(e.value("question", ""), e.value("answer", ""));
    }
}

auto ImageDescriptions::find(const std::string& image, const std::string& question) const
    -> std::optional<std::string>
{
    auto it = entries_.find(image);
    if (it == entries_.end())
        return std::nullopt;
    for (const auto& [q, a]: it->second)
        if (q == question)
            return a;
    return std::nullopt;
}

void ImageDescriptions::put(const std::string& image, const std::string& question, const std::string& answer)
{
    auto& list = entries_[image];
    auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.first == question; });
    if (it != list.end())
        it->second = answer;
    else
        list.emplace_back(question, answer);
    if (file_.empty())
        return;
    auto j = nlohmann::json::object();
    for (const auto& [img, qs]: entries_)
    {
        auto arr = nlohmann::json::array();
        for (const auto& [q, a]: qs)
            arr.push_back({ { "question", q }, { "answer", a } });
        j[img] = arr;
    }
    text::write_file(file_, j.dump(2) + "\n");
}

auto ImageDescriptions::size() const -> std::size_t
{
    std::size_t n = 0;
    for (const auto& [img, qs]: entries_)
        n += qs.size();
    return n;
}

auto ImageDescriptions::render() const -> std::string
{
    if (entries_.empty())
        return "None";
    std::string out;
    for (const auto& [img, qs]: entries_)
        for (const auto& [q, a]: qs)
            out += fmt::format("- {} | Q: {}\n  A: {}\n", img, q, a);
    return out;
}

// ---- metrics discovery ----

namespace
{
    auto parse_number(const nlohmann::json& v) -> std::optional<double>
    {
        if (v.is_number())
            return v.get<double>();
        if (v.is_string())
        {
            auto s = std::string(text::trim(v.get<std::string>()));
            if (s.empty())
                return std::nullopt;
            char* end = nullptr;
            double d = std::strtod(s.c_str(), &end);
            if (end == s.c_str() + s.size())
                return d;
        }
        return std::nullopt;
    }

    auto search_json(const nlohmann::json& root, const std::string& want) -> std::optional<double>
    {
        std::deque<const nlohmann::json*> queue { &root };
        while (!queue.empty())
        {
            const auto* node = queue.front();
            queue.pop_front();
            if (node->is_object())
            {
                for (const auto& [k, v]: node->items())
                {
                    if (text::normalize_key(k) == want)
                        if (auto d = parse_number(v))
                            return d;
                    if (v.is_structured())
                        queue.push_back(&v);
                }
            }
            else if (node->is_array())
            {
                for (const auto& v: *node)
                    if (v.is_structured())
                        queue.push_back(&v);
            }
        }
        return std::nullopt;
    }

    auto search_key_values(const std::string& content, const std::string& want) -> std::optional<double>
    {
        std::istringstream in(content);
        for (std::string line; std::getline(in, line);)
        {
            auto cut = line.find_first_of(":=,");
            if (cut == std::string::npos)
                continue;
            if (text::normalize_key(text::trim(std::string_view(line).substr(0, cut))) != want)
                continue;
            if (auto d = parse_number(nlohmann::json(std::string(text::trim(std::string_view(line).substr(cut + 1))))))
                return d;
        }
        return std::nullopt;
    }

    auto value_in_file(const fs::path& file, const std::string& metric_name) -> std::optional<double>
    {
        auto content = text::read_file(file);
        auto want = text::normalize_key(metric_name);
        auto fallback = text::normalize_key("primary_metric_value");
        auto ext = text::to_lower(file.extension().string());
        if (ext == ".json")
        {
            auto j = nlohmann::json::parse(content, nullptr, false);
            if (j.is_discarded())
                return std::nullopt;
            if (auto d = search_json(j, want))
                return d;
            return search_json(j, fallback);
        }
        if (auto d = search_key_values(content, want))
            return d;
        return search_key_values(content, fallback);
    }

    auto is_candidate(const fs::path& p) -> bool
    {
        auto name = text::to_lower(p.filename().string());
        if (name.find("metric") == std::string::npos && name.find("result") == std::string::npos)
            return false;
        auto ext = text::to_lower(p.extension().string());
        return ext == ".json" || ext == ".txt" || ext == ".yaml" || ext == ".yml" || ext == ".csv";
    }
} // namespace

auto find_metrics(const fs::path& execution_dir, const std::string& metric_name) -> std::optional<MetricsHit>
{
    std::error_code ec;
    if (!fs::is_directory(execution_dir, ec))
        return std::nullopt;
    std::vector<std::pair<fs::file_time_type, fs::path>> found;
    for (auto it = fs::recursive_directory_iterator(execution_dir, ec); it != fs::recursive_directory_iterator();
         it.increment(ec))
    {
        if (ec)
            break;
        if (it->is_directory() && it->path().filename() == "llm_calls")
        {
            it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file() && is_candidate(it->path()))
            found.emplace_back(it->last_write_time(), it->path());
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (const auto& [t, p]: found)
        if (auto v = value_in_file(p, metric_name))
            return MetricsHit { p, *v };
    return std::nullopt;
}

auto extract_metrics(const fs::path& execution_dir, const std::string& metric_name) -> std::optional<double>
{
    auto hit = find_metrics(execution_dir, metric_name);
    return hit ? std::optional<double>(hit->value) : std::nullopt;
}

// ---- execution phase ----

namespace
{
    struct StepReply
    {
        std::string purpose;
        std::string code;
        StatusSignal status = StatusSignal::Continue;
    };

    auto parse_step_reply(const std::string& reply, StepReply& out) -> std::string
    {
        auto blocks = parse_blocks(reply);
        auto code = extract_ci(blocks, "python");
        if (!code || text::trim(code->body).empty())
            return "no non-empty ```python block found.";
        auto status = extract_ci(blocks, "status");
        if (!status)
            return "no ```status block found.";
        try
        {
            out.status = parse_status(status->body);
        }
        catch (const StatusParseError& e)
        {
            return std::string(e.what()) + ".";
        }
        auto purpose = extract_ci(blocks, "purpose");
        out.purpose = purpose ? std::string(text::trim(purpose->body)) : std::string {};
        out.code = code->body;
        return {};
    }

    auto step_check(const std::string& reply) -> Checked
    {
        StepReply r;
        auto problem = parse_step_reply(reply, r);
        return problem.empty() ? Checked::ok(reply) : Checked::bad(problem);
    }

    auto error_text(const ExecResult& r, double timeout) -> std::string
    {
        std::string e = r.stderr_text;
        if (r.timed_out)
            e += fmt::format("{}Fragment timed out after {} s.", e.empty() ? "" : "\n", timeout);
        if (text::trim(e).empty())
            e = "Fragment failed without error output.";
        return e;
    }

    auto run_fragment(Session& session, const std::string& code, double timeout) -> ExecResult
    {
        if (session.state() == SessionState::Dead)
            session.revive(timeout);
        return session.exec(code, timeout);
    }

    auto completed_summary(const std::vector<StepRecord>& steps, std::size_t max_chars) -> std::string
    {
        if (steps.empty())
            return "None";
        std::string out;
        for (const auto& s: steps)
            out += fmt::format("Step {}: {}\nOutput:\n{}\n\n", s.step_no, s.purpose,
                               text::or_none(text::truncate_tail(s.result.stdout_text, 1500)));
        return text::truncate_tail(out, max_chars);
    }

    auto list_artifacts(const fs::path& exec_dir) -> std::vector<fs::path>
    {
        std::vector<fs::path> out;
        std::error_code ec;
        auto root = exec_dir / "outputs";
        if (!fs::is_directory(root, ec))
            return out;
        for (auto it = fs::recursive_directory_iterator(root, ec); it != fs::recursive_directory_iterator();
             it.increment(ec))
        {
            if (ec)
                break;
            if (it->is_regular_file())
                out.push_back(fs::relative(it->path(), exec_dir));
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    void write_run_summary(const ExecutionRecord& rec)
    {
        auto steps = nlohmann::json::array();
        for (const auto& s: rec.steps)
            steps.push_back({ { "step_no", s.step_no },
                              { "purpose", s.purpose },
                              { "status_signal", to_string(s.status_signal) },
                              { "exit_ok", s.result.exit_ok },
                              { "timed_out", s.result.timed_out },
                              { "retries_used", s.retries_used },
                              { "errors", s.error_history.size() } });
        auto artifacts = nlohmann::json::array();
        for (const auto& a: rec.artifacts)
            artifacts.push_back(a.generic_string());
        nlohmann::json j {
            { "overall_status", to_string(rec.overall_status) },
            { "failure", to_string(rec.failure) },
            { "failure_detail", rec.failure_detail },
            { "steps", steps },
            { "metrics_ref",
              rec.metrics_ref ? nlohmann::json(fs::relative(*rec.metrics_ref, rec.execution_dir).generic_string())
                              : nlohmann::json(nullptr) },
            { "primary_metric_value",
              rec.primary_metric_value ? nlohmann::json(*rec.primary_metric_value) : nlohmann::json(nullptr) },
            { "artifacts", artifacts },
        };
        text::write_file(rec.execution_dir / "run_summary.json", j.dump(2) + "\n");
    }
} // namespace

auto run_execution_phase(const std::string& plan,
                         const std::string& profile,
                         const TaskSpec& task,
                         const PipelineConfig& cfg,
                         Gateway& gateway,
                         Session& session,
                         const AgentContext& ctx) -> ExecutionRecord
{
    if (text::trim(plan).empty())
        throw PreconditionError("execution phase needs a non-empty plan");
    const auto& cc = cfg.coding;
    auto history_limit = static_cast<std::size_t>(cc.max_chars_history);
    auto timeout = cc.fragment_timeout_seconds;

    ExecutionRecord rec;
    rec.execution_dir = ctx.stage_dir;
    fs::create_directories(rec.execution_dir / "outputs");
    session.set_stdout_log(rec.execution_dir / "run_stdout.log");

    auto plan_text = text::truncate_head(plan, static_cast<std::size_t>(cc.max_chars_plan));
    auto system = text::render(prompts::coding_system,
                               { { "task", task.description },
                                 { "data_paths", render_data_paths(task) },
                                 { "output_dir", "outputs/ under the working directory" } });

    bool finished = false;
    for (int k = 1; k <= cc.max_steps && rec.failure == ExecutionFailure::None; ++k)
    {
        std::string user = k == 1 ? text::render(prompts::coding_step1,
                                                 { { "plan", plan_text },
                                                   { "data_report", text::or_none(profile) },
                                                   { "max_steps", std::to_string(cc.max_steps) } })
                                  : text::render(prompts::coding_step,
                                                 { { "plan", plan_text },
                                                   { "completed", completed_summary(rec.steps, history_limit) },
                                                   { "step_no", std::to_string(k) },
                                                   { "max_steps", std::to_string(cc.max_steps) } });
        CallTags tags { "coding_agent", ctx.round_idx, k };
        auto ex = ask_with_reprompt(gateway, cc.llm, system, user, tags, rec.execution_dir, step_check,
                                    prompts::coding_reformat);
        if (!ex.value)
        {
            rec.failure = ExecutionFailure::FormatError;
            rec.failure_detail = fmt::format("step {}: {}", k, ex.problem);
            break;
        }
        StepReply reply;
        parse_step_reply(*ex.value, reply);
        StepRecord st;
        st.step_no = k;
        st.purpose = reply.purpose.empty() ? fmt::format("step {}", k) : reply.purpose;
        st.code = reply.code;
        st.status_signal = reply.status;
        st.result = run_fragment(session, st.code, timeout);

        while (!st.result.exit_ok && st.retries_used < cc.max_retries)
        {
            st.error_history.push_back(error_text(st.result, timeout));
            std::string good_code;
            std::string good_output;
            for (const auto& s: rec.steps)
            {
                good_code += fmt::format("# Step {}: {}\n{}\n\n", s.step_no, s.purpose, s.code);
                good_output += s.result.stdout_text;
            }
            std::string earlier;
            for (std::size_t i = 0; i + 1 < st.error_history.size(); ++i)
                earlier += fmt::format("Attempt {}:\n{}\n", i + 1, st.error_history[i]);
            auto debug = text::render(prompts::coding_debug,
                                      { { "step_no", std::to_string(k) },
                                        { "plan", plan_text },
                                        { "successful_code", text::or_none(good_code) },
                                        { "successful_output", text::or_none(text::truncate_tail(good_output, history_limit)) },
                                        { "failed_code", st.code },
                                        { "error", text::truncate_tail(st.error_history.back(), history_limit) },
                                        { "error_history", text::or_none(text::truncate_tail(earlier, history_limit)) } });
            auto dx = ask_with_reprompt(gateway, cc.llm, system, debug, tags, rec.execution_dir, step_check,
                                        prompts::coding_reformat);
            if (!dx.value)
            {
                rec.failure = ExecutionFailure::FormatError;
                rec.failure_detail = fmt::format("step {} debug: {}", k, dx.problem);
                break;
            }
            StepReply fix;
            parse_step_reply(*dx.value, fix);
            ++st.retries_used;
            if (!fix.purpose.empty())
                st.purpose = fix.purpose;
            st.code = fix.code;
            st.status_signal = fix.status;
            st.result = run_fragment(session, st.code, timeout);
        }
        if (!st.result.exit_ok)
            st.error_history.push_back(error_text(st.result, timeout));

        text::write_file(rec.execution_dir / fmt::format("step_{}.code", k), st.code);
        bool ok = st.result.exit_ok;
        bool finish = st.status_signal == StatusSignal::Finish;
        spdlog::info("round {} step {}: {} ({} retries)", ctx.round_idx, k, ok ? "ok" : "failed", st.retries_used);
        rec.steps.push_back(std::move(st));
        if (!ok)
        {
            if (rec.failure == ExecutionFailure::None)
            {
                rec.failure = ExecutionFailure::RetryBudgetExhausted;
                rec.failure_detail = fmt::format("step {} still failing after {} retries", k, cc.max_retries);
            }
            break;
        }
        if (finish)
        {
            finished = true;
            break;
        }
    }
    if (!finished && rec.failure == ExecutionFailure::None)
    {
        rec.failure = ExecutionFailure::StepBudgetExhausted;
        rec.failure_detail = fmt::format("no FINISH within {} steps", cc.max_steps);
    }
    rec.overall_status = overall_status_of(rec.steps);

    if (auto hit = find_metrics(rec.execution_dir, task.metric_name))
    {
        rec.metrics_ref = hit->file;
        rec.primary_metric_value = hit->value;
    }
    rec.artifacts = list_artifacts(rec.execution_dir);
    if (!fs::exists(rec.execution_dir / "run_stdout.log"))
        text::write_file(rec.execution_dir / "run_stdout.log", "");
    write_run_summary(rec);
    return rec;
}

auto render_execution_summary(const ExecutionRecord& record, std::size_t max_chars) -> std::string
{
    std::string out = fmt::format("Overall status: {}\n", to_string(record.overall_status));
    if (record.failure != ExecutionFailure::None)
        out += fmt::format("Failure: {} ({})\n", to_string(record.failure), record.failure_detail);
    out += fmt::format("Primary metric: {}\n",
                       record.primary_metric_value ? fmt::format("{}", *record.primary_metric_value) : "not found");
    if (!record.artifacts.empty())
    {
        out += "Artifacts:\n";
        for (const auto& a: record.artifacts)
            out += "- " + a.generic_string() + "\n";
    }
    out += "\nSteps:\n";
    for (const auto& s: record.steps)
    {
        out += fmt::format("Step {} [{}{}]: {}\n", s.step_no, s.result.exit_ok ? "ok" : "failed",
                           s.retries_used ? fmt::format(", {} retries", s.retries_used) : "", s.purpose);
        auto tail = text::truncate_tail(s.result.stdout_text, 1500);
        if (!text::trim(tail).empty())
            out += tail + (tail.back() == '\n' ? "" : "\n");
        if (!s.result.exit_ok)
            out += "Error:\n" + text::truncate_tail(s.result.stderr_text, 1500) + "\n";
    }
    return text::truncate_tail(out, max_chars);
}

// ---- feedback phase ----

namespace
{
    class ToolHandlerGuard
    {
      public:
        explicit ToolHandlerGuard(Session& s): s_(s) {}
        ~ToolHandlerGuard() { s_.set_tool_handler({}); }
        ToolHandlerGuard(const ToolHandlerGuard&) = delete;
        auto operator=(const ToolHandlerGuard&) -> ToolHandlerGuard& = delete;

      private:
        Session& s_;
    };

    auto missing_feedback_headers(std::string_view report) -> std::vector<std::string>
    {
        std::vector<std::string> missing;
        for (auto h: prompts::feedback_headers)
            if (!has_heading(report, h))
                missing.emplace_back(h);
        return missing;
    }

    auto report_problem(const std::vector<Block>& blocks, std::string& out) -> std::string
    {
        auto block = extract_ci(blocks, "Feedback_Report");
        if (!block)
            return "no ```Feedback_Report block found.";
        auto missing = missing_feedback_headers(block->body);
        if (!missing.empty())
        {
            std::string list;
            for (const auto& m: missing)
                list += (list.empty() ? "" : ", ") + m;
            return "the report lacks the headings: " + list + ".";
        }
        out = std::string(text::trim(block->body)) + "\n";
        if (!has_heading(out, prompts::feedback_title))
            out = std::string(prompts::feedback_title) + "\n\n" + out;
        return {};
    }
} // namespace

auto run_feedback_phase(const ExecutionRecord& execution,
                        const std::string& plan,
                        const TaskSpec& task,
                        ImageAnalyzer& images,
                        const PipelineConfig& cfg,
                        Gateway& gateway,
                        Session& session,
                        const AgentContext& ctx) -> FeedbackReport
{
    const auto& cc = cfg.coding;
    auto history_limit = static_cast<std::size_t>(cc.max_chars_history);
    auto timeout = cc.fragment_timeout_seconds;
    auto fb_dir = ctx.stage_dir / "feedback";
    fs::create_directories(fb_dir);

    ImageDescriptions cache(ctx.stage_dir / "image_descriptions.json");
    NullImageAnalyzer null_analyzer;
    ImageAnalyzer& analyzer = cc.enable_image_analysis ? images : static_cast<ImageAnalyzer&>(null_analyzer);
    auto working_dir = session.config().working_dir;
    ToolHandlerGuard guard(session);
    session.set_tool_handler([&](const std::string& tool, const nlohmann::json& args) -> std::string {
        if (tool != "analyze_image")
            throw std::runtime_error("unknown tool '" + tool + "'");
        auto image = args.value("path", std::string {});
        auto question = args.value("question", std::string {});
        if (auto hit = cache.find(image, question))
            return *hit;
        fs::path p(image);
        if (p.is_relative() && !working_dir.empty())
            p = working_dir / p;
        auto answer = analyzer.analyze(p, question);
        cache.put(image, question, answer);
        return answer;
    });

    std::string headers = std::string(prompts::feedback_title) + "\n" + join_lines(prompts::feedback_headers);
    auto system = text::render(prompts::feedback_system, { { "metric", task.metric_name }, { "task", task.description } });
    auto summary = render_execution_summary(execution, history_limit);
    auto plan_text = text::truncate_head(plan, static_cast<std::size_t>(cc.max_chars_plan));

    std::string analysis;
    std::string report;
    int used = 0;
    for (int it = 1; it <= cc.feedback_max_iterations && report.empty(); ++it)
    {
        used = it;
        auto user = text::render(prompts::feedback_step,
                                 { { "execution_summary", summary },
                                   { "plan", plan_text },
                                   { "analysis_history", text::or_none(text::truncate_tail(analysis, history_limit)) },
                                   { "image_descriptions", cache.render() },
                                   { "iteration", std::to_string(it) },
                                   { "max_iterations", std::to_string(cc.feedback_max_iterations) },
                                   { "headers", headers } });
        auto check = [](const std::string& reply) -> Checked {
            auto blocks = parse_blocks(reply);
            auto status = extract_ci(blocks, "status");
            StatusSignal sig = StatusSignal::Continue;
            try
            {
                if (!status)
                    return Checked::bad("no ```status block found.");
                sig = parse_status(status->body);
            }
            catch (const StatusParseError& e)
            {
                return Checked::bad(std::string(e.what()) + ".");
            }
            if (sig == StatusSignal::Finish)
            {
                std::string out;
                auto problem = report_problem(blocks, out);
                return problem.empty() ? Checked::ok(reply) : Checked::bad(problem);
            }
            auto code = extract_ci(blocks, "python");
            if (!code || text::trim(code->body).empty())
                return Checked::bad("a CONTINUE reply needs a non-empty ```python block.");
            return Checked::ok(reply);
        };
        auto ex = ask_with_reprompt(gateway, cc.llm, system, user, { "feedback_agent", ctx.round_idx, it }, ctx.stage_dir,
                                    check, prompts::feedback_step_reformat, { { "headers", headers } });
        if (!ex.value)
        {
            spdlog::warn("feedback round {} unusable twice; forcing the report", it);
            break;
        }
        auto blocks = parse_blocks(*ex.value);
        if (parse_status(extract_ci(blocks, "status")->body) == StatusSignal::Finish)
        {
            report_problem(blocks, report);
            break;
        }
        auto code = extract_ci(blocks, "python")->body;
        auto purpose = extract_ci(blocks, "purpose");
        auto r = run_fragment(session, code, timeout);
        std::string obs = r.stdout_text;
        if (!r.exit_ok)
            obs += (obs.empty() ? "" : "\n") + std::string("Error:\n") + error_text(r, timeout);
        if (text::trim(obs).empty())
            obs = "(no output)";
        analysis += fmt::format("### Analysis {}: {}\n{}\n\n", it,
                                purpose ? std::string(text::trim(purpose->body)) : std::string("analysis"),
                                text::truncate_tail(obs, static_cast<std::size_t>(cc.max_output_chars)));
    }

    if (report.empty())
    {
        auto user = text::render(prompts::feedback_final,
                                 { { "execution_summary", summary },
                                   { "analysis_history", text::or_none(text::truncate_tail(analysis, history_limit)) },
                                   { "image_descriptions", cache.render() },
                                   { "headers", headers } });
        auto check = [](const std::string& reply) -> Checked {
            std::string out;
            auto problem = report_problem(parse_blocks(reply), out);
            return problem.empty() ? Checked::ok(out) : Checked::bad(problem);
        };
        auto ex = ask_with_reprompt(gateway, cc.llm, system, user, { "feedback_agent", ctx.round_idx, used + 1 },
                                    ctx.stage_dir, check, prompts::feedback_reformat, { { "headers", headers } });
        if (!ex.value)
        {
            text::write_file(fb_dir / "rejected_report.md", ex.last_reply);
            throw FeedbackFormatError("feedback report rejected twice: " + ex.problem);
        }
        report = *ex.value;
    }

    text::write_file(fb_dir / "analysis.md", "# Feedback analysis\n\n" + text::or_none(analysis) + "\n");
    FeedbackReport fr;
    fr.report_text = report;
    fr.path = fb_dir / "report.md";
    text::write_file(fr.path, report);
    return fr;
}

} // namespace medloop
