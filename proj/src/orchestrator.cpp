// SPDX-License-Identifier: Apache-2.0
#include <medloop/agent_coding.hpp>
#include <medloop/agent_data.hpp>
#include <medloop/agent_design.hpp>
#include <medloop/agent_report.hpp>
#include <medloop/block_protocol.hpp>
#include <medloop/errors.hpp>
#include <medloop/orchestrator.hpp>
#include <medloop/prompts.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <array>
#include <chrono>
#include <ctime>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace medloop
{

// ---- task files ----

namespace
{
    auto strip_markup(std::string_view line) -> std::string
    {
        auto t = text::trim(line);
        while (!t.empty() && (t.front() == '*' || t.front() == '#' || t.front() == '[' || t.front() == ' '))
            t.remove_prefix(1);
        while (!t.empty() && (t.back() == '*' || t.back() == ']' || t.back() == ' '))
            t.remove_suffix(1);
        std::string out;
        for (char c: t)
            if (c != '*')
                out += c;
        return std::string(text::trim(out));
    }

    auto is_section_line(std::string_view line) -> bool
    {
        auto t = text::trim(line);
        return t.rfind("**[", 0) == 0 || t.rfind("[**", 0) == 0 || t.rfind("#", 0) == 0
            || (t.size() > 2 && t.front() == '[' && t.back() == ']');
    }

    auto sanitize_name(std::string_view raw) -> std::string
    {
        std::string out;
        bool pending = false;
        for (char c: text::trim(raw))
        {
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
            {
                if (pending && !out.empty())
                    out += '_';
                pending = false;
                out += c;
            }
            else
                pending = true;
        }
        return out;
    }

    /// Splits "key: value" after list markers and emphasis are removed.
    auto key_value(std::string_view line) -> std::optional<std::pair<std::string, std::string>>
    {
        auto t = text::trim(line);
        if (!t.empty() && (t.front() == '-' || t.front() == '+'))
            t.remove_prefix(1);
        std::string s = strip_markup(t);
        auto colon = s.find(':');
        if (colon == std::string::npos)
            return std::nullopt;
        return std::pair { std::string(text::trim(std::string_view(s).substr(0, colon))),
                           std::string(text::trim(std::string_view(s).substr(colon + 1))) };
    }

    auto direction_from_annotation(std::string_view text) -> std::optional<MetricDirection>
    {
        auto t = text::to_lower(text);
        if (t.find("higher is better") != std::string::npos || t.find("higher-better") != std::string::npos
            || t.find("higher better") != std::string::npos || t.find("maximize") != std::string::npos)
            return MetricDirection::HigherBetter;
        if (t.find("lower is better") != std::string::npos || t.find("lower-better") != std::string::npos
            || t.find("lower better") != std::string::npos || t.find("minimize") != std::string::npos)
            return MetricDirection::LowerBetter;
        return std::nullopt;
    }
} // namespace

auto metric_direction_for(std::string_view metric_name) -> std::optional<MetricDirection>
{
    auto k = text::normalize_key(metric_name);
    static constexpr std::array lower { "loss", "rmsle", "rmse", "mse", "mae", "kl", "error", "brier", "ece", "nll" };
    static constexpr std::array higher { "accuracy", "f1", "dice", "cindex", "concordance", "hits", "auc",
                                         "iou", "auroc", "precision", "recall", "r2", "map" };
    for (auto w: lower)
        if (k.find(w) != std::string::npos)
            return MetricDirection::LowerBetter;
    for (auto w: higher)
        if (k.find(w) != std::string::npos)
            return MetricDirection::HigherBetter;
    return std::nullopt;
}

auto parse_task_text(const std::string& content, const fs::path& base_dir) -> TaskSpec
{
    TaskSpec t;
    t.description = content;
    std::optional<std::string> metric_line;
    std::optional<MetricDirection> annotated;
    bool in_paths = false;

    std::istringstream in(content);
    for (std::string line; std::getline(in, line);)
    {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (text::trim(line).empty())
            continue;
        auto kv = key_value(line);
        if (kv && text::iequals(kv->first, "Task Name") && t.name.empty())
        {
            t.name = sanitize_name(kv->second);
            continue;
        }
        if (is_section_line(line))
        {
            in_paths = text::iequals(strip_markup(line), "Dataset Paths");
            continue;
        }
        if (!kv)
            continue;
        if (text::iequals(kv->first, "Evaluation Metric") && !metric_line)
            metric_line = kv->second;
        else if (text::iequals(kv->first, "Metric Direction"))
            annotated = direction_from_annotation(kv->second);
        else if (in_paths && !kv->second.empty())
        {
            fs::path p(kv->second);
            if (p.is_relative() && !base_dir.empty())
                p = (base_dir / p).lexically_normal();
            if (text::iequals(kv->first, "Dataset Root"))
                t.data_root = p;
            else
                t.data_paths.push_back({ kv->first, p });
        }
    }

    if (t.name.empty())
        throw TaskParseError("name", "no 'Task Name' line");
    if (!metric_line || metric_line->empty())
        throw TaskParseError("metric", "no 'Evaluation Metric' line");
    auto name = *metric_line;
    if (auto paren = name.find('('); paren != std::string::npos)
    {
        if (!annotated)
            annotated = direction_from_annotation(name.substr(paren));
        name = std::string(text::trim(std::string_view(name).substr(0, paren)));
    }
    t.metric_name = name;
    auto dir = annotated ? annotated : metric_direction_for(name);
    if (!dir)
        throw TaskParseError("metric_direction", "unknown metric '" + name + "'; add a 'Metric Direction' line");
    t.metric_direction = *dir;
    t.validate();
    return t;
}

auto parse_task_file(const fs::path& path) -> TaskSpec
{
    if (!fs::is_regular_file(path))
        throw FilesystemError("task file not found: " + path.string());
    return parse_task_text(text::read_file(path), fs::absolute(path).parent_path());
}

// ---- history, decisions, memory ----

auto update_history(HistorySummary history, PreviousRound round, std::optional<double> oriented_value, double min_delta)
    -> HistorySummary
{
    if (oriented_value)
    {
        if (!history.best_metric_value || *oriented_value < *history.best_metric_value - min_delta)
        {
            history.best_metric_value = oriented_value;
            history.best_round_idx = round.round_idx;
            history.no_improve_rounds = 0;
        }
        else
            ++history.no_improve_rounds;
    }
    history.previous_rounds.push_back(std::move(round));
    return history;
}

auto decide(int round_idx,
            const PipelineConfig& cfg,
            const HistorySummary& history,
            ExecutionStatus execution_status,
            const std::optional<MetaDecision>& model_decision) -> MetaDecision
{
    if (round_idx >= cfg.max_rounds)
        return MetaDecision::stop("Maximum rounds reached", fmt::format("round {} of {}", round_idx, cfg.max_rounds));
    if (history.previous_rounds.size() >= 2 && history.no_improve_rounds >= cfg.patience)
        return MetaDecision::stop("No continuous improvement",
                                  fmt::format("{} round(s) without improvement", history.no_improve_rounds));
    if (model_decision)
    {
        auto d = *model_decision;
        if (d.action == MetaAction::Continue && d.next_start != Stage::DataUnderstanding && d.next_start != Stage::Planning
            && d.next_start != Stage::CodeExecution)
            d.next_start = Stage::Planning;
        return d;
    }
    if (execution_status == ExecutionStatus::Success)
        return MetaDecision::proceed(Stage::CodeExecution, "execution succeeded; refine the implementation");
    return MetaDecision::proceed(Stage::Planning, "execution did not succeed; revise the plan");
}

auto build_memory_unit(int round_idx,
                       const std::string& plan_text,
                       const std::string& execution_tail,
                       const std::string& feedback_text,
                       std::size_t bound) -> MemoryUnit
{
    MemoryUnit u;
    u.round_idx = round_idx;
    u.summary_text = fmt::format("# Round {} Snapshot\n\n## Plan\n{}\n\n## Execution Result\n{}\n\n## Feedback Analysis\n{}\n",
                                 round_idx,
                                 text::or_none(text::trim(text::truncate_head(plan_text, bound))),
                                 text::or_none(text::trim(text::truncate_tail(execution_tail, bound))),
                                 text::or_none(text::trim(text::truncate_head(feedback_text, bound))));
    return u;
}

auto render_snapshots(const std::vector<MemoryUnit>& memory) -> std::string
{
    std::string out;
    for (const auto& u: memory)
        out += u.summary_text + "\n";
    return out;
}

auto round_dir_name(int round_idx) -> std::string
{
    return fmt::format("round_{:02}", round_idx);
}

void update_memory(PipelineState& state,
                   const std::string& plan_text,
                   const std::string& execution_tail,
                   const std::string& feedback_text)
{
    int idx = state.rounds.empty() ? static_cast<int>(state.memory.size()) + 1 : state.rounds.back().round_idx;
    auto unit = build_memory_unit(idx, plan_text, execution_tail, feedback_text,
                                  static_cast<std::size_t>(state.cfg.max_chars_snapshot));
    state.memory.push_back(unit);
    text::write_file(state.output_root / round_dir_name(idx) / "round_snapshot.md", unit.summary_text);
    text::write_file(state.output_root / "snapshots.md", render_snapshots(state.memory));
}

// ---- summary ----

auto PipelineSummary::to_json() const -> json
{
    auto rounds_j = json::array();
    for (std::size_t i = 0; i < rounds.size(); ++i)
    {
        json r = rounds[i];
        r.erase("stage_durations");
        r["start_stage"] = i < start_stages.size() ? std::string(medloop::to_string(start_stages[i])) : "";
        r["decision"] = i < decisions.size() ? json(decisions[i]) : json(nullptr);
        rounds_j.push_back(r);
    }
    return json {
        { "schema_version", summary_schema_version },
        { "task_name", task_name },
        { "task_file", task_file },
        { "output_dir", output_dir },
        { "status", status },
        { "error", error },
        { "stop_reason", stop_reason },
        { "rounds_completed", decisions.size() },
        { "rounds", rounds_j },
        { "history", history },
        { "memory_units", memory_units },
        { "report",
          { { "ran", report.ran },
            { "status", report.status },
            { "source_ref", report.source_ref },
            { "compiled_ref", report.compiled_ref },
            { "fix_attempts", report.fix_attempts },
            { "error", report.error } } },
        { "token_usage", { { "stages", stage_usage }, { "total", total_usage } } },
    };
}

// ---- pipeline driver ----

namespace
{
    struct Interrupted: Error
    {
        Interrupted(): Error("run interrupted") {}
    };

    auto stage_order(Stage s) -> int
    {
        switch (s)
        {
            case Stage::DataUnderstanding: return 0;
            case Stage::Planning: return 1;
            case Stage::CodeExecution: return 2;
            case Stage::Meta: return 3;
            case Stage::ReportGeneration: return 4;
        }
        return 0;
    }

    auto now_iso() -> std::string
    {
        auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm {};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    auto normalized_dir(const fs::path& p) -> fs::path
    {
        auto s = p.string();
        while (s.size() > 1 && s.back() == '/')
            s.pop_back();
        return fs::weakly_canonical(fs::absolute(s));
    }

    void reset_dir(const fs::path& dir)
    {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }

    auto usage_since(const Ledger& ledger, std::size_t from) -> TokenUsage
    {
        TokenUsage u;
        auto entries = ledger.entries();
        for (std::size_t i = from; i < entries.size(); ++i)
            u += entries[i].usage;
        return u;
    }

    auto read_usage(const fs::path& stage_dir) -> std::optional<TokenUsage>
    {
        auto text = text::read_file_if_exists(stage_dir / "usage.json");
        if (text.empty())
            return std::nullopt;
        return json::parse(text).get<TokenUsage>();
    }

    auto metric_text(const std::optional<double>& v) -> std::string
    {
        return v ? fmt::format("{}", *v) : std::string("not found");
    }

    class Pipeline
    {
      public:
        Pipeline(PipelineState state, Providers providers, RunOptions options, std::string task_file)
            : st_(std::move(state)), p_(providers), opt_(std::move(options)), task_file_(std::move(task_file))
        {
            auto existing = text::read_file_if_exists(st_.output_root / "timing.json");
            if (!existing.empty())
                timing_ = json::parse(existing, nullptr, false);
            if (!timing_.is_object())
                timing_ = json::object();
            if (!timing_.contains("stages"))
                timing_["stages"] = json::object();
            timing_["started_at"] = now_iso();
        }

        auto run() -> PipelineSummary;

      private:
        struct Loaded
        {
            RoundArtifacts ra;
            Stage start = Stage::DataUnderstanding;
        };

        void check_cancel() const
        {
            if (opt_.cancel && opt_.cancel->load())
                throw Interrupted();
        }

        auto rel(const fs::path& p) const -> std::string
        {
            return p.empty() ? std::string {} : fs::relative(p, st_.output_root).generic_string();
        }

        auto round_dir(int i) const -> fs::path { return st_.output_root / round_dir_name(i); }
        auto stage_dir(int i, Stage s) const -> fs::path { return round_dir(i) / std::string(to_string(s)); }

        auto make_session(const fs::path& wd, const fs::path& outputs, bool readonly) -> std::unique_ptr<Session>
        {
            SessionConfig sc;
            sc.interpreter_command = st_.cfg.interpreter_command;
            sc.working_dir = wd;
            sc.env_overrides = { { "MEDLOOP_DATA_PATHS", data_paths_json(st_.task) },
                                 { "MEDLOOP_OUTPUT_DIR", outputs.string() } };
            sc.max_output_chars = static_cast<std::size_t>(readonly ? st_.cfg.data.max_observation_chars
                                                                    : st_.cfg.coding.max_output_chars);
            sc.readonly = readonly;
            if (readonly)
                sc.denylist = default_denylist();
            fs::create_directories(outputs);
            return Session::start(std::move(sc));
        }

        void write_record(const RoundArtifacts& ra, Stage start, const MetaDecision* decision,
                          const PreviousRound* prev) const
        {
            json j { { "round", ra },
                     { "start_stage", to_string(start) },
                     { "decision", decision ? json(*decision) : json(nullptr) },
                     { "previous_round", prev ? json(*prev) : json(nullptr) } };
            j["round"].erase("stage_durations");
            text::write_file(round_dir(ra.round_idx) / "round_record.json", j.dump(2) + "\n");
        }

        void record_time(const std::string& key, std::chrono::steady_clock::time_point t0)
        {
            timing_["stages"][key] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }

        auto execution_tail(int i, ExecutionStatus status, const std::optional<double>& metric) const -> std::string
        {
            auto log = text::read_file_if_exists(stage_dir(i, Stage::CodeExecution) / "run_stdout.log");
            return fmt::format("Status: {}\nPrimary metric ({}): {}\n\n{}", to_string(status), st_.task.metric_name,
                               metric_text(metric),
                               text::truncate_tail(log, static_cast<std::size_t>(st_.cfg.max_chars_execution_tail)));
        }

        auto load_round(int i) const -> Loaded;
        void adopt_loaded_round(const Loaded& l);
        void run_round(int i, Stage start, Stage from, std::optional<RoundArtifacts> resumed);
        auto meta_decision(int i, const RoundArtifacts& ra, const std::string& plan, const std::string& feedback)
            -> MetaDecision;
        void run_report();
        auto summary() const -> PipelineSummary;
        void write_summary(const PipelineSummary& s);

        PipelineState st_;
        Providers p_;
        RunOptions opt_;
        std::string task_file_;
        json timing_;

        std::string profile_text_;
        std::string profile_ref_;
        std::string plan_text_;
        std::string plan_ref_;
        std::string feedback_text_;
        ReportRecord report_;
        std::map<std::string, TokenUsage> report_usage_;
        std::optional<RoundArtifacts> partial_;
    };

    auto Pipeline::load_round(int i) const -> Loaded
    {
        auto file = round_dir(i) / "round_record.json";
        auto content = text::read_file_if_exists(file);
        if (content.empty())
            throw PreconditionError("cannot resume: " + file.string() + " is missing");
        auto j = json::parse(content);
        Loaded l;
        l.ra = j.at("round").get<RoundArtifacts>();
        l.start = stage_from_string(j.value("start_stage", "planning")).value_or(Stage::Planning);
        return l;
    }

    void Pipeline::adopt_loaded_round(const Loaded& l)
    {
        auto file = round_dir(l.ra.round_idx) / "round_record.json";
        auto j = json::parse(text::read_file(file));
        if (j.at("decision").is_null() || j.at("previous_round").is_null())
            throw PreconditionError(fmt::format("cannot resume: round {} never reached its decision", l.ra.round_idx));
        auto ra = l.ra;
        for (auto s: { Stage::DataUnderstanding, Stage::Planning, Stage::CodeExecution, Stage::Meta })
            if (auto u = read_usage(stage_dir(ra.round_idx, s)))
                ra.stage_token_usage[std::string(to_string(s))] = *u;
        if (!ra.data_report_ref.empty())
        {
            profile_ref_ = ra.data_report_ref;
            profile_text_ = text::read_file_if_exists(st_.output_root / ra.data_report_ref);
        }
        if (!ra.plan_ref.empty())
        {
            plan_ref_ = ra.plan_ref;
            plan_text_ = text::read_file_if_exists(st_.output_root / ra.plan_ref);
        }
        auto feedback = ra.feedback_ref.empty() ? std::string {} : text::read_file_if_exists(st_.output_root / ra.feedback_ref);
        feedback_text_ = feedback;
        auto prev = j.at("previous_round").get<PreviousRound>();
        auto decision = j.at("decision").get<MetaDecision>();

        st_.rounds.push_back(ra);
        st_.start_stages.push_back(l.start);
        std::optional<double> oriented;
        if (ra.primary_metric_value)
            oriented = st_.task.oriented(*ra.primary_metric_value);
        st_.history = update_history(st_.history, prev, oriented, st_.cfg.min_delta);
        update_memory(st_, plan_text_, execution_tail(ra.round_idx, ra.execution_status, ra.primary_metric_value), feedback);
        st_.decisions.push_back(decision);
        st_.next_start = decision.next_start;
    }

    void Pipeline::run_round(int i, Stage start, Stage from, std::optional<RoundArtifacts> resumed)
    {
        check_cancel();
        if (stage_order(start) > stage_order(Stage::DataUnderstanding) && profile_text_.empty())
            start = Stage::DataUnderstanding;
        if (stage_order(start) > stage_order(Stage::Planning) && plan_text_.empty())
            start = Stage::Planning;
        if (stage_order(from) < stage_order(start))
            start = from;
        spdlog::info("round {} starting at {}", i, to_string(start));

        RoundArtifacts ra = resumed.value_or(RoundArtifacts {});
        ra.round_idx = i;
        if (stage_order(from) <= stage_order(Stage::CodeExecution))
        {
            ra.execution_dir.clear();
            ra.execution_status = ExecutionStatus::Unknown;
            ra.primary_metric_value.reset();
            ra.metrics_ref.clear();
            ra.feedback_ref.clear();
            ra.failure_reason.clear();
        }
        ra.stage_token_usage.erase("meta");
        fs::create_directories(round_dir(i));
        std::string requirements = feedback_text_;
        if (!st_.decisions.empty() && !st_.decisions.back().next_start_reason.empty())
            requirements = st_.decisions.back().next_start_reason;

        std::optional<ExecutionRecord> exec;
        bool failed = false;
        auto& ledger = p_.gateway.ledger();

        // runs, loads or skips one stage; a failed round skips the rest
        auto stage = [&](Stage s, auto&& body) {
            if (failed)
                return;
            auto dir = stage_dir(i, s);
            auto key = std::string(to_string(s));
            if (stage_order(s) < stage_order(start))
                return;
            if (stage_order(s) < stage_order(from))
            {
                if (auto u = read_usage(dir))
                    ra.stage_token_usage[key] = *u;
                return;
            }
            check_cancel();
            reset_dir(dir);
            auto mark = ledger.size();
            auto t0 = std::chrono::steady_clock::now();
            partial_ = ra;
            try
            {
                body(dir);
            }
            catch (const FatalProviderError&)
            {
                ra.stage_token_usage[key] = usage_since(ledger, mark);
                text::write_file(dir / "usage.json", json(ra.stage_token_usage[key]).dump(2) + "\n");
                partial_ = ra;
                throw;
            }
            catch (const FilesystemError&)
            {
                partial_ = ra;
                throw;
            }
            catch (const fs::filesystem_error&)
            {
                partial_ = ra;
                throw;
            }
            catch (const Interrupted&)
            {
                throw;
            }
            catch (const std::exception& e)
            {
                failed = true;
                ra.execution_status = ExecutionStatus::Failure;
                ra.failure_reason = fmt::format("{}: {}", key, e.what());
                spdlog::error("round {} {} failed: {}", i, key, e.what());
            }
            ra.stage_token_usage[key] = usage_since(ledger, mark);
            text::write_file(dir / "usage.json", json(ra.stage_token_usage[key]).dump(2) + "\n");
            record_time(fmt::format("{}/{}", round_dir_name(i), key), t0);
            write_record(ra, start, nullptr, nullptr);
            partial_ = ra;
        };

        // data understanding
        if (stage_order(start) > 0)
            ra.data_report_ref = profile_ref_;
        else if (stage_order(from) > 0)
        {
            profile_text_ = text::read_file(st_.output_root / ra.data_report_ref);
            profile_ref_ = ra.data_report_ref;
        }
        stage(Stage::DataUnderstanding, [&](const fs::path& dir) {
            auto session = make_session(dir, dir / "outputs", true);
            DataPrior prior { profile_text_, requirements };
            auto profile = run_data_agent(st_.task, st_.cfg, p_.gateway, *session, prior, { i, dir });
            profile_text_ = profile.report_text;
            profile_ref_ = rel(profile.path);
            ra.data_report_ref = profile_ref_;
        });

        // planning
        if (stage_order(start) > 1)
            ra.plan_ref = plan_ref_;
        else if (stage_order(from) > 1)
        {
            plan_text_ = text::read_file(st_.output_root / ra.plan_ref);
            plan_ref_ = ra.plan_ref;
        }
        stage(Stage::Planning, [&](const fs::path& dir) {
            auto summary = build_requirement_summary(st_.task.description, profile_text_,
                                                     text::read_file_if_exists(st_.output_root / "snapshots.md"),
                                                     opt_.device_info.value_or(probe_device_info()), st_.cfg);
            std::string catalog;
            if (st_.cfg.design.enable_uncertainty)
                catalog = text::read_file_if_exists(st_.cfg.design.uncertainty_methods_path);
            NullRetrieval none;
            RetrievalProvider& retrieval = st_.cfg.design.enable_retrieval ? p_.retrieval : static_cast<RetrievalProvider&>(none);
            auto plan = run_design_agent(summary, retrieval, catalog, st_.cfg, p_.gateway, { i, dir });
            plan_text_ = plan.plan_text;
            plan_ref_ = rel(plan.path);
            ra.plan_ref = plan_ref_;
        });

        // code execution and feedback
        std::string feedback;
        if (stage_order(from) > 2 && !failed)
        {
            feedback = ra.feedback_ref.empty() ? std::string {} : text::read_file_if_exists(st_.output_root / ra.feedback_ref);
        }
        stage(Stage::CodeExecution, [&](const fs::path& dir) {
            ra.execution_dir = rel(dir);
            auto session = make_session(dir, dir / "outputs", false);
            exec = run_execution_phase(plan_text_, profile_text_, st_.task, st_.cfg, p_.gateway, *session, { i, dir });
            ra.execution_status = exec->overall_status;
            ra.primary_metric_value = exec->primary_metric_value;
            ra.metrics_ref = exec->metrics_ref ? rel(*exec->metrics_ref) : std::string {};
            if (exec->failure != ExecutionFailure::None)
                ra.failure_reason = fmt::format("code_execution: {} ({})", to_string(exec->failure), exec->failure_detail);
            write_record(ra, start, nullptr, nullptr);
            auto report = run_feedback_phase(*exec, plan_text_, st_.task, p_.analyzer, st_.cfg, p_.gateway, *session, { i, dir });
            feedback = report.report_text;
            ra.feedback_ref = rel(report.path);
        });
        if (failed)
            ra.execution_status = ExecutionStatus::Failure;
        feedback_text_ = feedback;

        // history and memory
        PreviousRound prev;
        prev.round_idx = i;
        prev.primary_metric_value = ra.primary_metric_value;
        prev.status = ra.execution_status;
        prev.plan_excerpt = text::truncate_head(plan_text_, 1500);
        auto tail = execution_tail(i, ra.execution_status, ra.primary_metric_value);
        prev.execution_excerpt = text::truncate_tail(tail, 1500);
        prev.feedback_excerpt = text::truncate_head(feedback, 1500);
        std::optional<double> oriented;
        if (ra.primary_metric_value)
            oriented = st_.task.oriented(*ra.primary_metric_value);
        st_.rounds.push_back(ra);
        st_.start_stages.push_back(start);
        st_.history = update_history(st_.history, prev, oriented, st_.cfg.min_delta);
        update_memory(st_, plan_text_, tail, feedback);
        partial_.reset();

        // meta
        check_cancel();
        auto meta_dir = stage_dir(i, Stage::Meta);
        reset_dir(meta_dir);
        auto mark = ledger.size();
        auto t0 = std::chrono::steady_clock::now();
        MetaDecision decision;
        try
        {
            decision = meta_decision(i, ra, plan_text_, feedback);
        }
        catch (const FatalProviderError&)
        {
            st_.rounds.back().stage_token_usage["meta"] = usage_since(ledger, mark);
            throw;
        }
        auto usage = usage_since(ledger, mark);
        text::write_file(meta_dir / "usage.json", json(usage).dump(2) + "\n");
        st_.rounds.back().stage_token_usage["meta"] = usage;
        record_time(fmt::format("{}/meta", round_dir_name(i)), t0);
        st_.decisions.push_back(decision);
        st_.next_start = decision.next_start;
        write_record(st_.rounds.back(), start, &decision, &prev);
        spdlog::info("round {} decision: {} {}", i, decision.action == MetaAction::Stop ? "stop" : "continue",
                     decision.action == MetaAction::Stop ? decision.stop_reason : std::string(to_string(decision.next_start)));
    }

    auto Pipeline::meta_decision(int i, const RoundArtifacts& ra, const std::string& plan, const std::string& feedback)
        -> MetaDecision
    {
        const auto& mc = st_.cfg.meta;
        auto bound = static_cast<std::size_t>(mc.max_chars_context);
        std::string history;
        if (st_.history.best_metric_value)
        {
            double best = *st_.history.best_metric_value;
            if (st_.task.metric_direction == MetricDirection::HigherBetter)
                best = -best;
            history += fmt::format("Best {} so far: {} (round {}). Rounds without improvement: {}.\n",
                                   st_.task.metric_name, best, st_.history.best_round_idx.value_or(0),
                                   st_.history.no_improve_rounds);
        }
        for (const auto& r: st_.history.previous_rounds)
            history += fmt::format("Round {}: status {}, {} = {}\n", r.round_idx, to_string(r.status),
                                   st_.task.metric_name, metric_text(r.primary_metric_value));
        auto user = text::render(prompts::meta_decide,
                                 { { "task", text::truncate_head(st_.task.description, static_cast<std::size_t>(mc.max_chars_task)) },
                                   { "round_idx", std::to_string(i) },
                                   { "max_rounds", std::to_string(st_.cfg.max_rounds) },
                                   { "plan", text::or_none(text::truncate_head(plan, bound)) },
                                   { "status", std::string(to_string(ra.execution_status)) },
                                   { "metric", metric_text(ra.primary_metric_value) },
                                   { "feedback", text::or_none(text::truncate_head(feedback, bound)) },
                                   { "history", text::or_none(text::truncate_tail(history, bound)) } });
        auto dir = stage_dir(i, Stage::Meta);
        std::optional<MetaDecision> model;
        std::string note;
        try
        {
            auto reply = p_.gateway.chat(ChatRequest::from(mc.llm, { { Role::System, prompts::meta_system }, { Role::User, user } }),
                                         { "meta_agent", i, 0 }, dir);
            auto block = extract_ci(parse_blocks(reply.content), "decision_json");
            if (!block)
                throw DecisionParseError("no decision_json block");
            auto parsed = parse_decision_ex(block->body);
            for (const auto& w: parsed.warnings)
                spdlog::warn("meta decision: {}", w);
            model = parsed.decision;
        }
        catch (const FatalProviderError&)
        {
            throw;
        }
        catch (const std::exception& e)
        {
            note = e.what();
            spdlog::warn("meta decision unusable ({}); using the heuristic", note);
        }
        auto d = decide(i, st_.cfg, st_.history, ra.execution_status, model);
        std::string source = "model";
        if (i >= st_.cfg.max_rounds || (st_.history.previous_rounds.size() >= 2 && st_.history.no_improve_rounds >= st_.cfg.patience))
            source = "rule";
        else if (!model)
            source = "heuristic";
        json j = d;
        j["source"] = source;
        j["model_error"] = note;
        text::write_file(dir / "decision.json", j.dump(2) + "\n");
        return d;
    }

    void Pipeline::run_report()
    {
        if (!st_.cfg.report.enabled || st_.rounds.empty())
            return;
        check_cancel();
        auto dir = st_.output_root / std::string(to_string(Stage::ReportGeneration));
        reset_dir(dir);
        const auto& last = st_.rounds.back();
        auto code_dir = stage_dir(last.round_idx, Stage::CodeExecution);
        ReportInputs in;
        in.task = st_.task.description;
        in.profile = profile_text_;
        in.plan = plan_text_;
        in.training_output = text::truncate_tail(text::read_file_if_exists(code_dir / "run_stdout.log"),
                                                 static_cast<std::size_t>(st_.cfg.report.max_chars_training_output));
        in.image_descriptions = ImageDescriptions(code_dir / "image_descriptions.json").render();
        in.figures = stage_figures(code_dir / "outputs", dir);
        in.title = st_.cfg.report.title;
        in.author = st_.cfg.report.author;

        auto& ledger = p_.gateway.ledger();
        auto mark = ledger.size();
        auto t0 = std::chrono::steady_clock::now();
        report_.ran = true;
        try
        {
            auto doc = run_report_agent(in, st_.cfg, p_.gateway, p_.compiler, p_.analyzer, { last.round_idx, dir });
            report_.status = std::string(to_string(doc.status));
            report_.source_ref = rel(doc.source_path);
            report_.compiled_ref = doc.compiled_ref ? rel(*doc.compiled_ref) : std::string {};
            report_.fix_attempts = doc.fix_attempts;
        }
        catch (const FatalProviderError&)
        {
            report_usage_["report_generation"] = usage_since(ledger, mark);
            throw;
        }
        catch (const FilesystemError&)
        {
            throw;
        }
        catch (const std::exception& e)
        {
            report_.status = "failed";
            report_.error = e.what();
            spdlog::error("report generation failed: {}", e.what());
        }
        auto usage = usage_since(ledger, mark);
        report_usage_["report_generation"] = usage;
        text::write_file(dir / "usage.json", json(usage).dump(2) + "\n");
        record_time("report_generation", t0);
    }

    auto Pipeline::summary() const -> PipelineSummary
    {
        PipelineSummary s;
        s.task_name = st_.task.name;
        s.task_file = task_file_;
        s.output_dir = st_.output_root.string();
        s.rounds = st_.rounds;
        if (partial_)
            s.rounds.push_back(*partial_);
        s.start_stages = st_.start_stages;
        s.decisions = st_.decisions;
        s.history = st_.history;
        s.memory_units = st_.memory.size();
        s.report = report_;
        if (!st_.decisions.empty())
            s.stop_reason = st_.decisions.back().stop_reason;
        for (const auto& r: s.rounds)
            for (const auto& [k, u]: r.stage_token_usage)
                s.stage_usage[k] += u;
        for (const auto& [k, u]: report_usage_)
            s.stage_usage[k] += u;
        for (const auto& [k, u]: s.stage_usage)
            s.total_usage += u;
        return s;
    }

    void Pipeline::write_summary(const PipelineSummary& s)
    {
        text::write_file(st_.output_root / "pipeline_summary.json", s.to_json().dump(2) + "\n");
        timing_["finished_at"] = now_iso();
        text::write_file(st_.output_root / "timing.json", timing_.dump(2) + "\n");
    }

    auto Pipeline::run() -> PipelineSummary
    {
        auto fail = [&](const std::string& status, const std::string& error) {
            auto s = summary();
            s.status = status;
            s.error = error;
            try
            {
                write_summary(s);
            }
            catch (const std::exception& e)
            {
                spdlog::error("could not write the partial summary: {}", e.what());
            }
            return s;
        };
        try
        {
            int i = 1;
            bool stopped = false;
            if (opt_.resume)
            {
                auto name = opt_.resume->round_dir.filename().string();
                int r = 0;
                if (std::sscanf(name.c_str(), "round_%d", &r) != 1 || r < 1)
                    throw PreconditionError("not a round directory: " + opt_.resume->round_dir.string());
                for (int k = 1; k < r; ++k)
                    adopt_loaded_round(load_round(k));
                auto from = opt_.resume->from_stage;
                if (from == Stage::ReportGeneration)
                {
                    adopt_loaded_round(load_round(r));
                    i = r + 1;
                    stopped = true;
                }
                else
                {
                    auto file = round_dir(r) / "round_record.json";
                    std::optional<RoundArtifacts> resumed;
                    Stage start = st_.decisions.empty() ? Stage::DataUnderstanding : st_.next_start;
                    if (fs::exists(file))
                    {
                        auto l = load_round(r);
                        resumed = l.ra;
                        start = l.start;
                    }
                    else if (from != Stage::DataUnderstanding)
                        throw PreconditionError("cannot resume: " + file.string() + " is missing");
                    run_round(r, start, from, resumed);
                    i = r + 1;
                    stopped = st_.decisions.back().action == MetaAction::Stop;
                }
            }
            while (!stopped && i <= st_.cfg.max_rounds)
            {
                auto start = st_.decisions.empty() ? Stage::DataUnderstanding : st_.next_start;
                run_round(i, start, start, std::nullopt);
                stopped = st_.decisions.back().action == MetaAction::Stop;
                ++i;
            }
            run_report();
            auto s = summary();
            s.status = "completed";
            write_summary(s);
            return s;
        }
        catch (const Interrupted&)
        {
            spdlog::warn("run interrupted; partial summary written");
            return fail("interrupted", "interrupted by signal");
        }
        catch (const FatalProviderError& e)
        {
            fail("failed", e.what());
            throw;
        }
        catch (const FilesystemError& e)
        {
            fail("failed", e.what());
            throw;
        }
        catch (const fs::filesystem_error& e)
        {
            fail("failed", e.what());
            throw FilesystemError(e.what());
        }
    }
} // namespace

auto run_pipeline(const fs::path& task_path, const PipelineConfig& cfg, Providers providers, const RunOptions& options)
    -> PipelineSummary
{
    auto cfg_ok = validate_config(cfg);
    RunOptions opt = options;
    fs::path root;
    if (opt.resume)
    {
        opt.resume->round_dir = normalized_dir(opt.resume->round_dir);
        if (!fs::is_directory(opt.resume->round_dir))
            throw PreconditionError("round directory not found: " + opt.resume->round_dir.string());
        root = opt.resume->round_dir.parent_path();
    }
    else
    {
        if (opt.output_root.empty())
            throw PreconditionError("an output directory is required");
        fs::create_directories(opt.output_root);
        root = normalized_dir(opt.output_root);
    }

    fs::path task_file = task_path;
    if (task_file.empty())
    {
        auto rc = text::read_file_if_exists(root / "run_config.json");
        if (rc.empty())
            throw PreconditionError("no task file given and none recorded in " + root.string());
        task_file = json::parse(rc).at("task_file").get<std::string>();
    }
    task_file = normalized_dir(task_file);
    auto task = parse_task_file(task_file);

    if (!opt.resume)
    {
        json rc { { "schema_version", summary_schema_version },
                  { "task_file", task_file.string() },
                  { "max_rounds", cfg_ok.max_rounds },
                  { "patience", cfg_ok.patience },
                  { "min_delta", cfg_ok.min_delta } };
        text::write_file(root / "run_config.json", rc.dump(2) + "\n");
        fs::remove(root / "snapshots.md");
    }

    PipelineState state;
    state.task = task;
    state.cfg = cfg_ok;
    state.output_root = root;
    Pipeline p(std::move(state), providers, opt, task_file.string());
    return p.run();
}

auto inspect_round(const fs::path& round_dir) -> std::string
{
    auto content = text::read_file_if_exists(round_dir / "round_record.json");
    if (content.empty())
        throw PreconditionError("no round record in " + round_dir.string());
    auto j = json::parse(content);
    auto ra = j.at("round").get<RoundArtifacts>();
    auto root = round_dir.parent_path();
    std::string out = fmt::format("Round {} (started at {})\n", ra.round_idx, j.value("start_stage", "?"));
    out += fmt::format("  status:  {}\n", to_string(ra.execution_status));
    out += fmt::format("  metric:  {}\n", metric_text(ra.primary_metric_value));
    if (!ra.failure_reason.empty())
        out += fmt::format("  failure: {}\n", ra.failure_reason);
    out += fmt::format("  profile: {}\n  plan:    {}\n  feedback: {}\n", ra.data_report_ref, ra.plan_ref, ra.feedback_ref);
    if (!j.at("decision").is_null())
    {
        auto d = j.at("decision").get<MetaDecision>();
        out += d.action == MetaAction::Stop ? fmt::format("  decision: stop ({})\n", d.stop_reason)
                                            : fmt::format("  decision: continue from {}\n", to_string(d.next_start));
    }
    TokenUsage total;
    out += "  tokens:\n";
    for (const auto& [k, u]: ra.stage_token_usage)
    {
        out += fmt::format("    {:<20} in {:>8}  out {:>8}  cost {:.4f}\n", k, u.input_tokens, u.output_tokens, u.cost);
        total += u;
    }
    out += fmt::format("    {:<20} in {:>8}  out {:>8}  cost {:.4f}\n", "total", total.input_tokens, total.output_tokens,
                       total.cost);
    if (!ra.plan_ref.empty())
    {
        auto plan = text::read_file_if_exists(root / ra.plan_ref);
        out += "\nPlan (excerpt):\n" + text::truncate_head(plan, 1200) + "\n";
    }
    return out;
}

} // namespace medloop
