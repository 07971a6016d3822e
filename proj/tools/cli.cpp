// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <medloop/benchmark_tables.hpp>
#include <medloop/config.hpp>
#include <medloop/errors.hpp>
#include <medloop/llm_gateway.hpp>
#include <medloop/orchestrator.hpp>
#include <medloop/text_util.hpp>
#include <medloop/tools.hpp>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;

namespace medloop::cli
{

auto cancel_flag() -> std::atomic<bool>&
{
    static std::atomic<bool> flag { false };
    return flag;
}

namespace
{
    extern "C" void on_signal(int)
    {
        cancel_flag().store(true);
    }

    struct CommonOptions
    {
        std::string config;
        std::string provider = "live";
        std::optional<int> max_rounds;
        std::optional<int> patience;
        std::optional<double> min_delta;
        std::optional<std::string> compiler;
        std::optional<std::string> interpreter;
        std::string vision_model;
        std::string device_info;
        bool no_report = false;
        bool verbose = false;
        bool quiet = false;
    };

    void add_common(CLI::App& app, CommonOptions& o)
    {
        app.add_option("--config", o.config, "YAML configuration file")->check(CLI::ExistingFile);
        app.add_option("--provider", o.provider, "Model backend: live or scripted:<transcript file or dir>")
            ->capture_default_str();
        app.add_option("--max-rounds", o.max_rounds, "Round budget");
        app.add_option("--patience", o.patience, "Rounds without improvement before stopping");
        app.add_option("--min-delta", o.min_delta, "Smallest change counted as improvement");
        app.add_option("--compiler", o.compiler, "Report compiler command with {source}, or 'stub'");
        app.add_option("--interpreter", o.interpreter, "Interpreter command with {driver}");
        app.add_option("--vision-model", o.vision_model, "Model name for figure analysis on the live endpoint");
        app.add_option("--device-info", o.device_info, "Override the probed compute description");
        app.add_flag("--no-report", o.no_report, "Skip report generation");
        app.add_flag("-v,--verbose", o.verbose, "Debug logging");
        app.add_flag("-q,--quiet", o.quiet, "Warnings and errors only");
    }

    void setup_logging(bool verbose, bool quiet)
    {
        auto logger = std::make_shared<spdlog::logger>("medloop", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        logger->set_pattern("[%H:%M:%S] [%l] %v");
        logger->set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
        spdlog::set_default_logger(logger);
    }

    auto build_config(const CommonOptions& o) -> PipelineConfig
    {
        PipelineConfig cfg;
        if (!o.config.empty())
            cfg = load_config_file(o.config, cfg);
        if (o.max_rounds)
            cfg.max_rounds = *o.max_rounds;
        if (o.patience)
            cfg.patience = *o.patience;
        if (o.min_delta)
            cfg.min_delta = *o.min_delta;
        if (o.compiler)
            cfg.report.compiler_command = *o.compiler == "stub" ? std::string {} : *o.compiler;
        if (o.interpreter)
            cfg.interpreter_command = *o.interpreter;
        if (o.no_report)
            cfg.report.enabled = false;
        return validate_config(cfg);
    }

    auto make_provider(const std::string& spec, const PipelineConfig& cfg) -> std::shared_ptr<Provider>
    {
        if (spec == "live")
            return std::make_shared<LiveProvider>(live_options_from_env(cfg.gateway.timeout_seconds, cfg.token_prices));
        const std::string prefix = "scripted:";
        if (spec.rfind(prefix, 0) == 0)
        {
            fs::path p = spec.substr(prefix.size());
            if (fs::is_directory(p))
                p /= "transcript.txt";
            if (!fs::is_regular_file(p))
                throw ConfigError("provider", "transcript not found: " + p.string());
            return std::make_shared<ScriptedProvider>(load_transcript(p), cfg.token_prices);
        }
        throw ConfigError("provider", "expected 'live' or 'scripted:<path>', got '" + spec + "'");
    }

    auto run_pipeline_command(const CommonOptions& o,
                              const fs::path& task,
                              const RunOptions& base,
                              std::ostream& out,
                              std::ostream& err) -> int
    {
        setup_logging(o.verbose, o.quiet);
        PipelineConfig cfg;
        std::shared_ptr<Provider> provider;
        try
        {
            cfg = build_config(o);
            provider = make_provider(o.provider, cfg);
        }
        catch (const Error& e)
        {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        }

        Gateway gateway(provider, cfg.gateway, cfg.token_prices);
        std::unique_ptr<ImageAnalyzer> analyzer = std::make_unique<NullImageAnalyzer>();
        if (!o.vision_model.empty() && o.provider == "live")
        {
            auto lo = live_options_from_env(cfg.gateway.timeout_seconds, cfg.token_prices);
            analyzer = std::make_unique<VisionEndpointAnalyzer>(lo.base_url, lo.api_key, o.vision_model,
                                                                cfg.gateway.timeout_seconds);
        }
        std::unique_ptr<DocumentCompiler> compiler;
        if (cfg.report.compiler_command.empty())
            compiler = std::make_unique<StubCompiler>();
        else
            compiler = std::make_unique<CommandCompiler>(cfg.report.compiler_command, cfg.report.compiler_timeout_seconds);
        std::unique_ptr<RetrievalProvider> retrieval = std::make_unique<NullRetrieval>();
        if (cfg.design.enable_retrieval && !cfg.design.case_dir.empty())
            retrieval = std::make_unique<LocalCorpusRetrieval>(cfg.design.case_dir);

        RunOptions opt = base;
        opt.cancel = &cancel_flag();
        if (!o.device_info.empty())
            opt.device_info = o.device_info;

        try
        {
            auto summary = run_pipeline(task, cfg, Providers { gateway, *analyzer, *compiler, *retrieval }, opt);
            auto path = fs::path(summary.output_dir) / "pipeline_summary.json";
            out << path.string() << "\n";
            auto report = ledger_report(gateway.ledger());
            spdlog::info("{} round(s), status {}, {} tokens, cost {:.4f}", summary.decisions.size(), summary.status,
                         report.total.total_tokens, report.total.cost);
            return summary.status == "completed" ? exit_ok : exit_pipeline_failure;
        }
        catch (const TaskParseError& e)
        {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        }
        catch (const ConfigError& e)
        {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        }
        catch (const PreconditionError& e)
        {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        }
        catch (const std::exception& e)
        {
            err << "error: " << e.what() << "\n";
            return exit_pipeline_failure;
        }
    }

    auto score_command(const fs::path& dir, const std::string& table, std::ostream& out) -> int
    {
        auto data = score::load_benchmark(dir);
        auto scores = score::score_benchmark(data);
        const std::vector<std::pair<std::string, score::Column>> all {
            { "sr", score::Column::Sr },   { "perf", score::Column::Perf }, { "unc", score::Column::Unc },
            { "nps", score::Column::Nps }, { "cs", score::Column::Cs },
        };
        for (const auto& [name, col]: all)
        {
            if (table != "all" && table != name)
                continue;
            out << "# " << name << "\n" << score::render_table(scores, data.tasks, col) << "\n";
        }
        return exit_ok;
    }

    auto replay_command(const std::string& run_dir, const std::string& transcript, const std::string& output,
                        std::ostream& out) -> int
    {
        std::vector<ScriptEntry> entries;
        if (!run_dir.empty())
            entries = transcript_from_run(run_dir);
        else
            entries = load_transcript(transcript);
        if (!output.empty())
        {
            text::write_file(output, render_transcript(entries));
            out << output << "\n";
            return exit_ok;
        }
        TokenUsage total;
        for (const auto& e: entries)
        {
            out << fmt::format("{:<16} r={:<3} s={:<3} in={:<7} out={:<7} cache={}\n", e.agent_name,
                               e.round_idx ? std::to_string(*e.round_idx) : "*",
                               e.step_idx ? std::to_string(*e.step_idx) : "*", e.usage.input_tokens,
                               e.usage.output_tokens, e.usage.cache_hit_tokens);
            total += e.usage;
        }
        out << fmt::format("{} entries, {} input and {} output tokens\n", entries.size(), total.input_tokens,
                           total.output_tokens);
        return exit_ok;
    }

    auto inspect_command(const fs::path& dir, std::ostream& out) -> int
    {
        if (fs::exists(dir / "round_record.json"))
        {
            out << inspect_round(dir);
            return exit_ok;
        }
        std::vector<fs::path> rounds;
        for (const auto& e: fs::directory_iterator(dir))
            if (e.is_directory() && fs::exists(e.path() / "round_record.json"))
                rounds.push_back(e.path());
        if (rounds.empty())
            throw PreconditionError("no round directories under " + dir.string());
        std::sort(rounds.begin(), rounds.end());
        for (const auto& r: rounds)
            out << inspect_round(r) << "\n";
        return exit_ok;
    }
} // namespace

void install_signal_handlers()
{
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
}

auto run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) -> int
{
    CLI::App app { "Closed-loop modeling pipeline driver", "medloop" };
    app.require_subcommand(1);

    CommonOptions run_opts;
    std::string task;
    std::string output = "medloop_out";
    auto* run_cmd = app.add_subcommand("run", "Run the round loop on a task file");
    run_cmd->add_option("--task", task, "Task description file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--output", output, "Output directory")->capture_default_str();
    add_common(*run_cmd, run_opts);

    CommonOptions resume_opts;
    std::string round_dir;
    std::string from_stage = "meta";
    std::string resume_task;
    auto* resume_cmd = app.add_subcommand("resume", "Continue a run from a stage of one round");
    resume_cmd->add_option("--round-dir", round_dir, "Round directory such as out/round_02")
        ->required()
        ->check(CLI::ExistingDirectory);
    resume_cmd->add_option("--from-stage", from_stage, "data_understanding, planning, code_execution, meta or report_generation")
        ->capture_default_str();
    resume_cmd->add_option("--task", resume_task, "Task file; defaults to the one recorded in the run");
    add_common(*resume_cmd, resume_opts);

    std::string fixtures = (default_data_dir() / "benchmark").string();
    std::string table = "all";
    auto* score_cmd = app.add_subcommand("score", "Score benchmark tables");
    score_cmd->add_option("--fixtures", fixtures, "Directory with the benchmark TSV files")->capture_default_str();
    score_cmd->add_option("--table", table, "sr, perf, unc, nps, cs or all")
        ->check(CLI::IsMember({ "sr", "perf", "unc", "nps", "cs", "all" }))
        ->capture_default_str();

    std::string replay_run;
    std::string replay_transcript;
    std::string replay_output;
    auto* replay_cmd = app.add_subcommand("replay", "Turn a run's archived calls into a transcript, or list a transcript");
    auto* from_run = replay_cmd->add_option("--run-dir", replay_run, "Run directory to harvest");
    auto* from_tr = replay_cmd->add_option("--transcript", replay_transcript, "Transcript to list");
    from_run->excludes(from_tr);
    replay_cmd->add_option("--output", replay_output, "Write the transcript here");

    std::string inspect_dir;
    auto* inspect_cmd = app.add_subcommand("inspect", "Describe a round directory or every round of a run");
    inspect_cmd->add_option("dir", inspect_dir, "Round or run directory")->required()->check(CLI::ExistingDirectory);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try
    {
        app.parse(reversed);
    }
    catch (const CLI::ParseError& e)
    {
        int code = app.exit(e, out, err);
        if (code == 0)
            return exit_ok;
        auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return exit_usage;
    }

    try
    {
        if (run_cmd->parsed())
        {
            RunOptions opt;
            opt.output_root = output;
            return run_pipeline_command(run_opts, task, opt, out, err);
        }
        if (resume_cmd->parsed())
        {
            auto stage = stage_from_string(from_stage);
            if (!stage)
            {
                err << "error: unknown stage '" << from_stage << "'\n" << resume_cmd->help();
                return exit_usage;
            }
            RunOptions opt;
            opt.resume = ResumePoint { round_dir, *stage };
            return run_pipeline_command(resume_opts, resume_task, opt, out, err);
        }
        if (score_cmd->parsed())
            return score_command(fixtures, table, out);
        if (replay_cmd->parsed())
        {
            if (replay_run.empty() && replay_transcript.empty())
            {
                err << "error: replay needs --run-dir or --transcript\n" << replay_cmd->help();
                return exit_usage;
            }
            return replay_command(replay_run, replay_transcript, replay_output, out);
        }
        if (inspect_cmd->parsed())
            return inspect_command(inspect_dir, out);
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}

} // namespace medloop::cli
