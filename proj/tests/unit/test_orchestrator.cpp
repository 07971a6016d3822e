// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"
#include "pipeline_scripts.hpp"

#include <medloop/errors.hpp>
#include <medloop/orchestrator.hpp>

#include <catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

#include <random>

using namespace medloop;
using testutil::block;
using testutil::entry;
namespace fs = std::filesystem;
using nlohmann::json;
using scripts::loop_script;
using scripts::profile_reply;

namespace
{
const std::string accuracy_task = R"(**Task Name: Clinic Visit Triage**

**[Task Overview]**
- Task Type: binary classification
- Evaluation Metric: Accuracy

**[Dataset Paths]**
- Train: data/train.csv
- Validation: data/val.csv
- Test: /abs/test.csv
)";

const std::string f1_task = R"(**Task Name: Skin Lesion Grading (v2)**

**[Task Overview]**
- Evaluation Metric: Macro-F1 (higher is better)

**[Dataset Paths]**
- Dataset Root: lesions/
- Train Images: lesions/train/images
- Train Labels: lesions/train/labels.csv
- Val Images: lesions/val/images
- Val Labels: lesions/val/labels.csv
- Test Images: lesions/test/images
- Test Labels: lesions/test/labels.csv

**[Dataset Details]**
- Format: PNG
)";

auto toy_task() -> fs::path
{
    return testutil::fixture_dir() / "toy" / "task.md";
}

auto read_json(const fs::path& p) -> json
{
    return json::parse(text::read_file(p));
}

struct Run
{
    explicit Run(const std::string& script, PipelineConfig c = testutil::test_config()):
        provider(testutil::scripted(script)), gateway(provider, testutil::fast_gateway_config()), cfg(std::move(c))
    {
    }

    auto go(const fs::path& task = toy_task(), std::optional<ResumePoint> resume = std::nullopt) -> PipelineSummary
    {
        RunOptions opt;
        opt.output_root = dir / "out";
        opt.resume = std::move(resume);
        opt.device_info = "cpu only";
        return run_pipeline(task, cfg, Providers { gateway, analyzer, compiler, retrieval }, opt);
    }

    auto out() const -> fs::path { return dir / "out"; }

    testutil::TempDir dir { "orch" };
    std::shared_ptr<ScriptedProvider> provider;
    Gateway gateway;
    PipelineConfig cfg;
    NullImageAnalyzer analyzer;
    StubCompiler compiler;
    NullRetrieval retrieval;
};

auto toy_transcript() -> std::string
{
    return text::read_file(testutil::fixture_dir() / "toy" / "transcript.txt");
}
} // namespace

TEST_CASE("task files", "[orchestrator]")
{
    auto a = parse_task_text(accuracy_task, "/base");
    CHECK(a.name == "Clinic_Visit_Triage");
    CHECK(a.metric_name == "Accuracy");
    CHECK(a.metric_direction == MetricDirection::HigherBetter);
    REQUIRE(a.data_paths.size() == 3);
    CHECK(a.data_paths[0] == DataPath { "Train", "/base/data/train.csv" });
    CHECK(a.data_paths[2].path == "/abs/test.csv");
    CHECK_FALSE(a.data_root);

    auto b = parse_task_text(f1_task);
    CHECK(b.name == "Skin_Lesion_Grading_v2");
    CHECK(b.metric_name == "Macro-F1");
    CHECK(b.data_paths.size() == 6);
    CHECK(b.data_root == fs::path("lesions/"));

    try
    {
        (void)parse_task_text("**Task Name: X**\n**[Dataset Paths]**\n- Train: a.csv\n");
        FAIL("expected a parse error");
    }
    catch (const TaskParseError& e)
    {
        CHECK(std::string(e.what()).find("metric") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_task_text("- Evaluation Metric: Accuracy\n"), TaskParseError);
    CHECK_THROWS_AS(parse_task_text("**Task Name: X**\n- Evaluation Metric: Wobble\n**[Dataset Paths]**\n- Train: a\n"),
                    TaskParseError);
    auto w = parse_task_text("**Task Name: X**\n- Evaluation Metric: Wobble\n- Metric Direction: minimize\n"
                             "**[Dataset Paths]**\n- Train: a\n");
    CHECK(w.metric_direction == MetricDirection::LowerBetter);
    CHECK_THROWS_AS(parse_task_file("/nonexistent/task.md"), FilesystemError);
}

TEST_CASE("metric directions", "[orchestrator]")
{
    for (auto m: { "Accuracy", "Macro-F1", "Dice", "C-index", "AUROC", "Hits@10", "mIoU" })
        CHECK(metric_direction_for(m) == MetricDirection::HigherBetter);
    for (auto m: { "RMSLE", "MAE", "KL Divergence", "Brier", "Test Loss", "ECE" })
        CHECK(metric_direction_for(m) == MetricDirection::LowerBetter);
    CHECK_FALSE(metric_direction_for("Wobble"));
}

TEST_CASE("history updates", "[orchestrator]")
{
    HistorySummary h;
    auto round = [](int i) {
        PreviousRound r;
        r.round_idx = i;
        return r;
    };
    h = update_history(h, round(1), -0.5, 0.0);
    CHECK(h.best_metric_value == -0.5);
    CHECK(h.best_round_idx == 1);
    h = update_history(h, round(2), -0.5, 0.0);
    CHECK(h.no_improve_rounds == 1);
    CHECK(h.best_round_idx == 1);
    h = update_history(h, round(3), -0.6, 0.0);
    CHECK(h.no_improve_rounds == 0);
    CHECK(h.best_round_idx == 3);
    h = update_history(h, round(4), -0.605, 0.01);
    CHECK(h.no_improve_rounds == 1);
    h = update_history(h, round(5), std::nullopt, 0.0);
    CHECK(h.no_improve_rounds == 1);
    CHECK(h.previous_rounds.size() == 5);
}

TEST_CASE("best value is the running minimum", "[orchestrator][property]")
{
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial)
    {
        HistorySummary h;
        double best = 1e9;
        int streak = 0;
        for (int i = 1; i <= 8; ++i)
        {
            double v = u(rng);
            PreviousRound r;
            r.round_idx = i;
            h = update_history(h, r, v, 0.0);
            streak = v < best ? 0 : streak + 1;
            best = std::min(best, v);
            REQUIRE(*h.best_metric_value == best);
            REQUIRE(h.no_improve_rounds == (i == 1 ? 0 : streak));
        }
    }
}

TEST_CASE("decision rules", "[orchestrator]")
{
    PipelineConfig cfg;
    cfg.max_rounds = 3;
    cfg.patience = 2;
    HistorySummary h;
    h.previous_rounds.resize(2);

    auto d = decide(3, cfg, h, ExecutionStatus::Success, MetaDecision::proceed(Stage::Planning));
    CHECK(d.action == MetaAction::Stop);
    CHECK(d.stop_reason == "Maximum rounds reached");

    h.no_improve_rounds = 2;
    d = decide(2, cfg, h, ExecutionStatus::Success, std::nullopt);
    CHECK(d.stop_reason == "No continuous improvement");

    h.no_improve_rounds = 1;
    d = decide(2, cfg, h, ExecutionStatus::Success, MetaDecision::stop("Objective met"));
    CHECK(d == MetaDecision::stop("Objective met"));
    auto bogus = MetaDecision::proceed(Stage::ReportGeneration);
    CHECK(decide(2, cfg, h, ExecutionStatus::Success, bogus).next_start == Stage::Planning);
    CHECK(decide(2, cfg, h, ExecutionStatus::Success, std::nullopt).next_start == Stage::CodeExecution);
    CHECK(decide(2, cfg, h, ExecutionStatus::Failure, std::nullopt).next_start == Stage::Planning);

    HistorySummary one;
    one.previous_rounds.resize(1);
    one.no_improve_rounds = 5;
    CHECK(decide(1, cfg, one, ExecutionStatus::Success, std::nullopt).action == MetaAction::Continue);
}

TEST_CASE("memory units", "[orchestrator]")
{
    auto u = build_memory_unit(2, "plan", "", "feedback", 100);
    CHECK(u.round_idx == 2);
    CHECK(u.summary_text.rfind("# Round 2 Snapshot", 0) == 0);
    CHECK(u.summary_text.find("## Execution Result\nNone") != std::string::npos);
    auto long_unit = build_memory_unit(1, std::string(5000, 'p'), std::string(5000, 'e') + "TAIL", "", 200);
    CHECK(long_unit.summary_text.size() < 1000);
    CHECK(long_unit.summary_text.find("TAIL") != std::string::npos);
    auto all = render_snapshots({ build_memory_unit(1, "a", "b", "c", 50), u });
    CHECK(all.find("# Round 1 Snapshot") < all.find("# Round 2 Snapshot"));
    CHECK(round_dir_name(3) == "round_03");
    CHECK(round_dir_name(12) == "round_12");
}

TEST_CASE("toy run end to end", "[orchestrator][pipeline]")
{
    Run run(toy_transcript());
    auto s = run.go();
    CHECK(s.status == "completed");
    REQUIRE(s.decisions.size() == 2);
    CHECK(s.decisions[1].action == MetaAction::Stop);
    CHECK(s.stop_reason == "Objective met");
    CHECK(s.start_stages == std::vector<Stage> { Stage::DataUnderstanding, Stage::CodeExecution });
    CHECK(s.rounds[0].primary_metric_value == Catch::Approx(0.8));
    CHECK(s.rounds[1].primary_metric_value == Catch::Approx(0.85));
    CHECK(s.history.best_round_idx == 2);
    CHECK(s.memory_units == 2);
    CHECK(s.report.ran);
    CHECK(s.report.status == "compiled");
    CHECK(run.provider->remaining() == 0);

    auto out = run.out();
    for (auto sub: { "round_01/data_understanding", "round_01/planning", "round_01/code_execution", "round_01/meta",
                     "round_02/code_execution", "round_02/meta", "report_generation" })
        CHECK(fs::is_directory(out / sub));
    CHECK_FALSE(fs::exists(out / "round_02/planning"));
    auto snaps = text::read_file(out / "snapshots.md");
    CHECK(snaps.find("# Round 1 Snapshot") < snaps.find("# Round 2 Snapshot"));

    auto j = read_json(out / "pipeline_summary.json");
    CHECK(j["schema_version"] == summary_schema_version);
    CHECK(j["rounds_completed"] == 2);
    CHECK(j["rounds"][1]["start_stage"] == "code_execution");
    CHECK(fs::exists(out / "timing.json"));
    CHECK(read_json(out / "run_config.json")["task_file"] == fs::canonical(toy_task()).string());

    auto report = ledger_report(run.gateway.ledger());
    TokenUsage scripted;
    for (const auto& e: load_transcript(testutil::fixture_dir() / "toy" / "transcript.txt"))
        scripted += e.usage;
    CHECK(report.total.input_tokens == scripted.input_tokens);
    CHECK(report.total.output_tokens == scripted.output_tokens);
    CHECK(s.total_usage.input_tokens == scripted.input_tokens);

    auto digest = inspect_round(out / "round_02");
    CHECK(digest.find("Round 2 (started at code_execution)") != std::string::npos);
    CHECK(digest.find("decision: stop (Objective met)") != std::string::npos);
    CHECK_THROWS_AS(inspect_round(out), PreconditionError);
}

TEST_CASE("resuming at the meta stage reproduces the summary", "[orchestrator][pipeline]")
{
    Run first(toy_transcript());
    first.go();
    auto before = read_json(first.out() / "pipeline_summary.json");

    auto meta_only = scripts::toy_meta_round2();
    std::string report_part = toy_transcript().substr(toy_transcript().find("# ---- report ----"));
    auto provider = testutil::scripted(meta_only + report_part);
    Gateway gateway(provider, testutil::fast_gateway_config());
    RunOptions opt;
    opt.resume = ResumePoint { first.out() / "round_02", Stage::Meta };
    auto s = run_pipeline({}, first.cfg, Providers { gateway, first.analyzer, first.compiler, first.retrieval }, opt);
    CHECK(s.status == "completed");
    for (const auto& c: provider->calls())
    {
        CHECK(c.tags.agent_name != "coding_agent");
        CHECK(c.tags.agent_name != "data_agent");
        CHECK(c.tags.agent_name != "planner");
    }
    auto after = read_json(first.out() / "pipeline_summary.json");
    CHECK(json::diff(before, after).dump() == "[]");

    opt.resume = ResumePoint { first.out() / "report_generation", Stage::Meta };
    CHECK_THROWS_AS(run_pipeline({}, first.cfg, Providers { gateway, first.analyzer, first.compiler, first.retrieval }, opt),
                    PreconditionError);
}

TEST_CASE("the round budget stops an eager meta agent", "[orchestrator][pipeline]")
{
    auto cfg = testutil::test_config();
    cfg.max_rounds = 3;
    cfg.report.enabled = false;
    Run run(loop_script({ 0.1, 0.2, 0.3 }), cfg);
    auto s = run.go();
    REQUIRE(s.decisions.size() == 3);
    CHECK(s.decisions[0].action == MetaAction::Continue);
    CHECK(s.decisions[2].stop_reason == "Maximum rounds reached");
    CHECK(s.history.best_round_idx == 3);
    CHECK_FALSE(s.report.ran);
    CHECK_FALSE(fs::exists(run.out() / "report_generation"));
}

TEST_CASE("flat metrics stop the loop", "[orchestrator][pipeline]")
{
    auto cfg = testutil::test_config();
    cfg.max_rounds = 5;
    cfg.patience = 1;
    cfg.report.enabled = false;
    Run run(loop_script({ 0.5, 0.5, 0.5, 0.5, 0.5 }), cfg);
    auto s = run.go();
    CHECK(s.decisions.size() <= 3);
    CHECK(s.decisions.back().stop_reason == "No continuous improvement");
    CHECK(s.history.no_improve_rounds >= 1);
}

TEST_CASE("a failing stage ends the round as a failure", "[orchestrator][pipeline]")
{
    auto cfg = testutil::test_config();
    cfg.max_rounds = 1;
    cfg.report.enabled = false;
    auto script = entry("data_agent 1 1", "Nothing to explore.") +
                  entry("data_agent 1 2", profile_reply()) +
                  entry("planner * *", "no plan here") + entry("planner * *", "still no plan") +
                  entry("meta_agent 1 0", block("decision_json", R"({"action": "stop", "stop_reason": "broken"})"));
    Run run(script, cfg);
    auto s = run.go();
    CHECK(s.status == "completed");
    REQUIRE(s.rounds.size() == 1);
    CHECK(s.rounds[0].execution_status == ExecutionStatus::Failure);
    CHECK(s.rounds[0].failure_reason.rfind("planning:", 0) == 0);
    CHECK(s.rounds[0].execution_dir.empty());
    CHECK_FALSE(fs::exists(run.out() / "round_01/code_execution"));
    CHECK(inspect_round(run.out() / "round_01").find("failure: planning") != std::string::npos);
}

TEST_CASE("an exhausted script aborts with a partial summary", "[orchestrator][pipeline]")
{
    Run run(entry("data_agent 1 1", "Nothing to explore."));
    CHECK_THROWS_AS(run.go(), FatalProviderError);
    auto j = read_json(run.out() / "pipeline_summary.json");
    CHECK(j["status"] == "failed");
    CHECK_FALSE(j["error"].get<std::string>().empty());
}

TEST_CASE("cancellation writes an interrupted summary", "[orchestrator][pipeline]")
{
    Run run(toy_transcript());
    std::atomic<bool> cancel { true };
    RunOptions opt;
    opt.output_root = run.out();
    opt.cancel = &cancel;
    auto s = run_pipeline(toy_task(), run.cfg, Providers { run.gateway, run.analyzer, run.compiler, run.retrieval }, opt);
    CHECK(s.status == "interrupted");
    CHECK(read_json(run.out() / "pipeline_summary.json")["status"] == "interrupted");
    CHECK(run.provider->calls().empty());
}
