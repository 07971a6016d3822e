// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <medloop/agent_coding.hpp>
#include <medloop/agent_data.hpp>
#include <medloop/errors.hpp>
#include <medloop/orchestrator.hpp>

#include <catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

using namespace medloop;
using testutil::block;
using testutil::entry;
namespace fs = std::filesystem;

namespace
{
auto step(const std::string& purpose, const std::string& code, const std::string& status) -> std::string
{
    return block("purpose", purpose) + block("python", code) + block("status", status);
}

const char* report_body = "# Training Feedback Report\n\n## I. Results Review\nok\n\n## II. Problems Found\nnone\n\n"
                          "## III. Improvement Suggestions\nnone";

struct Rig
{
    explicit Rig(const std::string& script, const fs::path& task_file = testutil::fixture_dir() / "toy" / "task.md"):
        provider(testutil::scripted(script)), gateway(provider, testutil::fast_gateway_config())
    {
        cfg = testutil::test_config();
        task = parse_task_file(task_file);
        ctx = { 1, dir / "code_execution" };
        fs::create_directories(ctx.stage_dir / "outputs");
        SessionConfig sc;
        sc.working_dir = ctx.stage_dir;
        sc.env_overrides = { { "MEDLOOP_DATA_PATHS", data_paths_json(task) },
                             { "MEDLOOP_OUTPUT_DIR", (ctx.stage_dir / "outputs").string() } };
        session = Session::start(sc);
    }

    auto execute(const std::string& plan = "1. do it") -> ExecutionRecord
    {
        return run_execution_phase(plan, "profile", task, cfg, gateway, *session, ctx);
    }

    auto feedback(const ExecutionRecord& rec, ImageAnalyzer& images) -> FeedbackReport
    {
        return run_feedback_phase(rec, "1. do it", task, images, cfg, gateway, *session, ctx);
    }

    auto prompt(std::size_t call) const -> std::string
    {
        return provider->calls().at(call).request.messages.back().content;
    }

    testutil::TempDir dir { "coding" };
    std::shared_ptr<ScriptedProvider> provider;
    Gateway gateway;
    PipelineConfig cfg;
    TaskSpec task;
    AgentContext ctx;
    std::unique_ptr<Session> session;
};

auto debug_script() -> std::string
{
    return text::read_file(testutil::fixture_dir() / "debug" / "transcript.txt");
}
} // namespace

TEST_CASE("one failing fragment then a fix", "[coding][debug]")
{
    Rig rig(debug_script(), testutil::fixture_dir() / "debug" / "task.md");
    auto rec = rig.execute();
    REQUIRE(rec.steps.size() == 3);
    CHECK(rec.overall_status == ExecutionStatus::Success);
    CHECK(rec.failure == ExecutionFailure::None);
    CHECK(rec.steps[0].retries_used == 0);
    CHECK(rec.steps[1].retries_used == 1);
    REQUIRE(rec.steps[1].error_history.size() == 1);
    CHECK(rec.steps[1].error_history[0].find("NameError") != std::string::npos);
    CHECK(rec.steps[1].result.exit_ok);
    CHECK(rec.steps[1].code.find("a + 1") != std::string::npos);
    CHECK(rec.steps[2].result.stdout_text == "41 42\n");
    CHECK(rec.steps[2].status_signal == StatusSignal::Finish);

    REQUIRE(rec.primary_metric_value);
    CHECK(*rec.primary_metric_value == 0.838);
    CHECK(rec.metrics_ref == rig.ctx.stage_dir / "outputs" / "metrics.json");
    CHECK(rec.artifacts == std::vector<fs::path> { "outputs/metrics.json" });

    auto debug_prompt = rig.prompt(2);
    CHECK(debug_prompt.find("# Step 1: Define the base value\na = 41") != std::string::npos);
    CHECK(debug_prompt.find("b = a + offset") != std::string::npos);
    CHECK(debug_prompt.find("NameError") != std::string::npos);
    CHECK(debug_prompt.find("a ready") != std::string::npos);
    CHECK(rig.provider->calls()[2].tags.step_idx == 2);

    CHECK(text::read_file(rig.ctx.stage_dir / "step_2.code").find("a + 1") != std::string::npos);
    auto summary = nlohmann::json::parse(text::read_file(rig.ctx.stage_dir / "run_summary.json"));
    CHECK(summary["overall_status"] == "success");
    CHECK(summary["steps"][1]["retries_used"] == 1);
    CHECK(summary["metrics_ref"] == "outputs/metrics.json");
    auto log = text::read_file(rig.ctx.stage_dir / "run_stdout.log");
    CHECK(log.find("NameError") != std::string::npos);
    CHECK(log.find("41 42") != std::string::npos);
}

TEST_CASE("debug prompts carry every earlier successful step", "[coding][property]")
{
    for (int n = 1; n <= 4; ++n)
    {
        std::string script;
        for (int k = 1; k <= n; ++k)
            script += entry("coding_agent 1 " + std::to_string(k),
                            step("bind v" + std::to_string(k), "v" + std::to_string(k) + " = " + std::to_string(k), "CONTINUE"));
        auto last = std::to_string(n + 1);
        script += entry("coding_agent 1 " + last, step("fail", "raise RuntimeError('x')", "FINISH"));
        std::string sum;
        for (int k = 1; k <= n; ++k)
            sum += (k > 1 ? " + " : "") + std::string("v") + std::to_string(k);
        script += entry("coding_agent 1 " + last, step("sum", "print(" + sum + ")", "FINISH"));
        Rig rig(script);
        auto rec = rig.execute();
        INFO("steps before failure: " << n);
        CHECK(rec.overall_status == ExecutionStatus::Success);
        CHECK(rec.steps.back().result.stdout_text == std::to_string(n * (n + 1) / 2) + "\n");
        auto debug_prompt = rig.prompt(static_cast<std::size_t>(n + 1));
        for (int k = 1; k <= n; ++k)
            CHECK(debug_prompt.find("# Step " + std::to_string(k) + ": bind v" + std::to_string(k)) != std::string::npos);
    }
}

TEST_CASE("retry budget exhaustion", "[coding]")
{
    std::string script;
    for (int i = 0; i < 3; ++i)
        script += entry("coding_agent 1 1", step("boom", "x = 1\n1 / 0", "FINISH"));
    Rig rig(script);
    rig.cfg.coding.max_retries = 2;
    auto rec = rig.execute();
    CHECK(rec.failure == ExecutionFailure::RetryBudgetExhausted);
    CHECK(rec.overall_status == ExecutionStatus::Failure);
    REQUIRE(rec.steps.size() == 1);
    CHECK(rec.steps[0].retries_used == 2);
    CHECK(rec.steps[0].error_history.size() == 3);
    CHECK(rig.provider->calls().size() == 3);
    CHECK(rig.session->exec("print('x' in dir())", 5).stdout_text == "False\n");
    CHECK(rig.prompt(2).find("Attempt 1:") != std::string::npos);
}

TEST_CASE("step budget exhaustion", "[coding]")
{
    Rig rig(entry("coding_agent 1 *", step("loop", "print('again')", "CONTINUE")) +
            entry("coding_agent 1 *", step("loop", "print('again')", "CONTINUE")));
    rig.cfg.coding.max_steps = 2;
    auto rec = rig.execute();
    CHECK(rec.failure == ExecutionFailure::StepBudgetExhausted);
    CHECK(rec.overall_status == ExecutionStatus::Failure);
    CHECK(rec.steps.size() == 2);
}

TEST_CASE("replies without the required blocks end the phase", "[coding]")
{
    Rig rig(entry("coding_agent 1 1", block("python", "print(1)")) + entry("coding_agent 1 1", "just prose"));
    auto rec = rig.execute();
    CHECK(rec.failure == ExecutionFailure::FormatError);
    CHECK(rec.steps.empty());
    CHECK(rec.overall_status == ExecutionStatus::Failure);
    CHECK(rig.provider->calls()[1].request.messages.size() == 4);
}

TEST_CASE("a timed-out step is retried in a revived session", "[coding]")
{
    Rig rig(entry("coding_agent 1 1", step("bind", "x = 5", "CONTINUE")) +
            entry("coding_agent 1 2", step("hang", "import time\ntime.sleep(30)", "FINISH")) +
            entry("coding_agent 1 2", step("use", "print(x * 2)", "FINISH")));
    rig.cfg.coding.fragment_timeout_seconds = 0.5;
    auto rec = rig.execute();
    CHECK(rec.overall_status == ExecutionStatus::Success);
    REQUIRE(rec.steps.size() == 2);
    CHECK(rec.steps[1].retries_used == 1);
    CHECK(rec.steps[1].error_history[0].find("timed out") != std::string::npos);
    CHECK(rec.steps[1].result.stdout_text == "10\n");
}

TEST_CASE("execution needs a plan", "[coding]")
{
    Rig rig("");
    CHECK_THROWS_AS(rig.execute("  \n"), PreconditionError);
}

TEST_CASE("overall status", "[coding]")
{
    CHECK(overall_status_of({}) == ExecutionStatus::Failure);
    StepRecord s;
    s.result.exit_ok = true;
    s.status_signal = StatusSignal::Finish;
    CHECK(overall_status_of({ s }) == ExecutionStatus::Success);
    s.status_signal = StatusSignal::Continue;
    CHECK(overall_status_of({ s }) == ExecutionStatus::Failure);
    s.status_signal = StatusSignal::Finish;
    s.result.exit_ok = false;
    CHECK(overall_status_of({ s }) == ExecutionStatus::Failure);
}

TEST_CASE("metrics discovery", "[coding][metrics]")
{
    testutil::TempDir dir("metrics");
    CHECK_FALSE(extract_metrics(dir.path(), "Accuracy"));
    CHECK_FALSE(extract_metrics(dir / "missing", "Accuracy"));

    text::write_file(dir / "outputs/metrics.json", R"({"results": {"val": {"Macro-F1": "0.838"}}, "loss": 0.2})");
    CHECK(extract_metrics(dir.path(), "macro_f1") == 0.838);
    CHECK(extract_metrics(dir.path(), "Macro-F1") == 0.838);
    CHECK_FALSE(extract_metrics(dir.path(), "Accuracy"));

    text::write_file(dir / "outputs/notes.json", R"({"Accuracy": 0.1})");
    CHECK_FALSE(extract_metrics(dir.path(), "Accuracy"));
    text::write_file(dir / "llm_calls/001_metrics.json", R"({"Accuracy": 0.2})");
    CHECK_FALSE(extract_metrics(dir.path(), "Accuracy"));

    text::write_file(dir / "outputs/final_results.txt", "Accuracy: 0.91\nC-Index = 0.7\n");
    CHECK(extract_metrics(dir.path(), "accuracy") == 0.91);
    CHECK(extract_metrics(dir.path(), "cindex") == 0.7);

    text::write_file(dir / "outputs/summary_metrics.csv", "metric,value\nRMSLE,0.12\n");
    CHECK(extract_metrics(dir.path(), "RMSLE") == 0.12);

    text::write_file(dir / "outputs/fallback_metrics.yaml", "primary_metric_value: 3.5\n");
    CHECK(extract_metrics(dir.path(), "AUROC") == 3.5);
}

TEST_CASE("newest metrics file wins", "[coding][metrics]")
{
    testutil::TempDir dir("metrics");
    text::write_file(dir / "a_metrics.json", R"({"Accuracy": 0.5})");
    text::write_file(dir / "b_metrics.json", R"({"Accuracy": 0.7})");
    auto now = fs::file_time_type::clock::now();
    fs::last_write_time(dir / "a_metrics.json", now);
    fs::last_write_time(dir / "b_metrics.json", now - std::chrono::hours(1));
    auto hit = find_metrics(dir.path(), "Accuracy");
    REQUIRE(hit);
    CHECK(hit->value == 0.5);
    CHECK(hit->file == dir / "a_metrics.json");
    fs::last_write_time(dir / "b_metrics.json", now + std::chrono::hours(1));
    CHECK(extract_metrics(dir.path(), "Accuracy") == 0.7);
}

TEST_CASE("image descriptions persist", "[coding]")
{
    testutil::TempDir dir("images");
    auto file = dir / "image_descriptions.json";
    {
        ImageDescriptions d(file);
        CHECK(d.render() == "None");
        d.put("outputs/a.png", "trend?", "down");
        d.put("outputs/a.png", "trend?", "flat");
        d.put("outputs/b.png", "q", "x");
        CHECK(d.size() == 2);
    }
    ImageDescriptions again(file);
    CHECK(again.size() == 2);
    CHECK(again.find("outputs/a.png", "trend?") == "flat");
    CHECK_FALSE(again.find("outputs/a.png", "other"));
    CHECK(again.render().find("outputs/b.png | Q: q") != std::string::npos);
}

TEST_CASE("feedback analysis, figure questions and report", "[coding][feedback]")
{
    auto png = "import base64, os\nos.makedirs(OUTPUT_DIR, exist_ok=True)\n"
               "open(os.path.join(OUTPUT_DIR, 'fig.png'), 'wb').write(base64.b64decode("
               "'iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg=='))\n"
               "score = 0.9";
    Rig rig(entry("coding_agent 1 1", step("plot", png, "FINISH")) +
            entry("feedback_agent 1 1", block("status", "CONTINUE") + block("purpose", "ask twice") +
                                            block("python", "print(analyze_image('outputs/fig.png', 'shape?'))\n"
                                                            "print(analyze_image('outputs/fig.png', 'shape?'))\nprint(score)")) +
            entry("feedback_agent 1 2", block("status", "FINISH") +
                                            block("Feedback_Report", "## I. Results Review\nfine\n## II. Problems Found\nnone\n"
                                                                     "## III. Improvement Suggestions\nnone")));
    auto rec = rig.execute();
    REQUIRE(rec.overall_status == ExecutionStatus::Success);
    std::vector<fs::path> asked;
    FunctionImageAnalyzer analyzer([&](const fs::path& p, const std::string&) {
        asked.push_back(p);
        return std::string("a single pixel");
    });
    auto fb = rig.feedback(rec, analyzer);
    REQUIRE(asked.size() == 1);
    CHECK(asked[0] == rig.ctx.stage_dir / "outputs/fig.png");
    CHECK(fb.report_text.rfind("# Training Feedback Report", 0) == 0);
    CHECK(fb.path == rig.ctx.stage_dir / "feedback" / "report.md");
    auto analysis = text::read_file(rig.ctx.stage_dir / "feedback" / "analysis.md");
    CHECK(analysis.find("### Analysis 1: ask twice\na single pixel\na single pixel\n0.9") != std::string::npos);
    CHECK(ImageDescriptions(rig.ctx.stage_dir / "image_descriptions.json").find("outputs/fig.png", "shape?") ==
          "a single pixel");
    CHECK(rig.prompt(2).find("a single pixel") != std::string::npos);
    CHECK(rig.session->exec("analyze_image('x.png')", 5).exit_ok == false);
}

TEST_CASE("feedback budget forces a final report", "[coding][feedback]")
{
    Rig rig(entry("coding_agent 1 1", step("s", "print(1)", "FINISH")) +
            entry("feedback_agent 1 1", block("status", "CONTINUE") + block("python", "print('look')")) +
            entry("feedback_agent 1 2", "I forgot the block.") +
            entry("feedback_agent 1 2", block("Feedback_Report", report_body)));
    rig.cfg.coding.feedback_max_iterations = 1;
    auto rec = rig.execute();
    NullImageAnalyzer none;
    auto fb = rig.feedback(rec, none);
    CHECK(fb.report_text.find("## II. Problems Found") != std::string::npos);
    auto calls = rig.provider->calls();
    REQUIRE(calls.size() == 4);
    CHECK(calls[3].tags.step_idx == 2);
    CHECK(calls[3].request.messages.back().content.find("Feedback_Report") != std::string::npos);
}

TEST_CASE("two malformed final reports raise", "[coding][feedback]")
{
    Rig rig(entry("coding_agent 1 1", step("s", "print(1)", "FINISH")) +
            entry("feedback_agent 1 1", block("Feedback_Report", "## I. Results Review\nonly one")) +
            entry("feedback_agent 1 1", "no"));
    rig.cfg.coding.feedback_max_iterations = 0;
    auto rec = rig.execute();
    NullImageAnalyzer none;
    CHECK_THROWS_AS(rig.feedback(rec, none), FeedbackFormatError);
    CHECK(fs::exists(rig.ctx.stage_dir / "feedback" / "rejected_report.md"));
}

TEST_CASE("disabled image analysis answers with the unavailable text", "[coding][feedback]")
{
    Rig rig(entry("coding_agent 1 1", step("s", "print(1)", "FINISH")) +
            entry("feedback_agent 1 1", block("status", "CONTINUE") + block("python", "print(analyze_image('a.png', 'q'))")) +
            entry("feedback_agent 1 2", block("status", "FINISH") + block("Feedback_Report", report_body)));
    rig.cfg.coding.enable_image_analysis = false;
    auto rec = rig.execute();
    FunctionImageAnalyzer never([](const fs::path&, const std::string&) -> std::string { throw std::logic_error("called"); });
    rig.feedback(rec, never);
    auto analysis = text::read_file(rig.ctx.stage_dir / "feedback" / "analysis.md");
    CHECK(analysis.find(NullImageAnalyzer::unavailable_text) != std::string::npos);
}

TEST_CASE("execution summary rendering", "[coding]")
{
    ExecutionRecord rec;
    rec.overall_status = ExecutionStatus::Failure;
    rec.failure = ExecutionFailure::RetryBudgetExhausted;
    rec.failure_detail = "step 1";
    StepRecord s;
    s.purpose = "load";
    s.result.stdout_text = "rows=20\n";
    s.result.stderr_text = "KeyError: 'x'";
    s.retries_used = 2;
    rec.steps.push_back(s);
    auto text = render_execution_summary(rec, 10000);
    CHECK(text.find("Overall status: failure") != std::string::npos);
    CHECK(text.find("retry_budget_exhausted") != std::string::npos);
    CHECK(text.find("Primary metric: not found") != std::string::npos);
    CHECK(text.find("Step 1 [failed, 2 retries]: load") != std::string::npos);
    CHECK(text.find("KeyError") != std::string::npos);
    CHECK(render_execution_summary(rec, 20).size() <= 20);
}
