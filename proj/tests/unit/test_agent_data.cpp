// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <medloop/agent_data.hpp>
#include <medloop/errors.hpp>
#include <medloop/orchestrator.hpp>

#include <catch_amalgamated.hpp>

using namespace medloop;
using testutil::block;
using testutil::entry;

namespace
{
auto toy_task() -> TaskSpec
{
    return parse_task_file(testutil::fixture_dir() / "toy" / "task.md");
}

auto profile_reply() -> std::string
{
    for (const auto& e: load_transcript(testutil::fixture_dir() / "toy" / "transcript.txt"))
        if (e.agent_name == "data_agent" && e.step_idx == 3)
            return e.reply;
    return {};
}

struct Rig
{
    explicit Rig(const std::string& script):
        provider(testutil::scripted(script)), gateway(provider, testutil::fast_gateway_config())
    {
        cfg = testutil::test_config();
        task = toy_task();
        SessionConfig sc;
        sc.working_dir = dir.path();
        sc.readonly = true;
        sc.denylist = default_denylist();
        sc.env_overrides = { { "MEDLOOP_DATA_PATHS", data_paths_json(task) } };
        session = Session::start(sc);
        ctx = { 1, dir / "data_understanding" };
    }

    auto run(const DataPrior& prior = {}) -> DataProfile
    {
        return run_data_agent(task, cfg, gateway, *session, prior, ctx);
    }

    testutil::TempDir dir { "data" };
    std::shared_ptr<ScriptedProvider> provider;
    Gateway gateway;
    PipelineConfig cfg;
    TaskSpec task;
    std::unique_ptr<Session> session;
    AgentContext ctx;
};
} // namespace

TEST_CASE("data agent explores then writes the profile", "[data]")
{
    Rig rig(entry("data_agent 1 1", block("purpose", "Count rows") +
                                        block("python", "import csv\nrows = list(csv.DictReader(open(DATA_PATHS['Train'])))\nprint(len(rows))")) +
            entry("data_agent 1 2", block("purpose", "Reuse rows") + block("python", "print(rows[0]['label'])")) +
            entry("data_agent 1 3", "Done.") + entry("data_agent 1 4", profile_reply()));
    auto p = rig.run();
    REQUIRE(p.history.size() == 2);
    CHECK(p.history[0].purpose == "Count rows");
    CHECK(p.history[0].observation == "20\n");
    CHECK(p.history[1].observation == "1\n");
    CHECK(p.path == rig.ctx.stage_dir / "report.md");
    CHECK(missing_profile_headers(text::read_file(p.path)).empty());
    CHECK(std::filesystem::exists(rig.ctx.stage_dir / "exploration.md"));
    CHECK(rig.provider->remaining() == 0);
    auto calls = rig.provider->calls();
    REQUIRE(calls.size() == 4);
    CHECK(calls[1].request.messages[1].content.find("Count rows") != std::string::npos);
    CHECK(calls[1].request.messages[1].content.find("20") != std::string::npos);
    CHECK(calls[0].request.temperature == 0.3);
}

TEST_CASE("forbidden fragments are screened without running", "[data]")
{
    Rig rig(entry("data_agent 1 1", block("python", "import subprocess\nsubprocess.run(['rm', '-rf', '/'])")) +
            entry("data_agent 1 2", "That was not allowed; I am done.") + entry("data_agent 1 3", profile_reply()));
    auto p = rig.run();
    REQUIRE(p.history.size() == 1);
    CHECK(p.history[0].screened_out);
    CHECK(p.history[0].observation.find("subprocess") != std::string::npos);
    CHECK(rig.session->fragment_log().empty());
    CHECK(rig.provider->calls()[1].request.messages[1].content.find("forbidden") != std::string::npos);
}

TEST_CASE("failing fragments report their error as the observation", "[data]")
{
    Rig rig(entry("data_agent 1 1", block("python", "import pandas_does_not_exist")) + entry("data_agent 1 2", "ok") +
            entry("data_agent 1 3", profile_reply()));
    auto p = rig.run();
    CHECK(p.history[0].observation.find("Error:") != std::string::npos);
    CHECK(p.history[0].observation.find("ModuleNotFoundError") != std::string::npos);
}

TEST_CASE("iteration budget bounds exploration", "[data]")
{
    Rig rig(entry("data_agent 1 1", block("python", "print(1)")) + entry("data_agent 1 2", block("python", "print(2)")) +
            entry("data_agent 1 3", profile_reply()));
    rig.cfg.data.max_iterations = 2;
    auto p = rig.run();
    CHECK(p.history.size() == 2);
    CHECK(rig.provider->remaining() == 0);
}

TEST_CASE("a profile missing headings is re-requested once", "[data]")
{
    Rig rig(entry("data_agent 1 1", "nothing to run") +
            entry("data_agent 1 2", block("Data_Analysis_Report", "## 1. Data Modality and Scale\nsmall")) +
            entry("data_agent 1 2", profile_reply()));
    auto p = rig.run();
    CHECK(missing_profile_headers(p.report_text).empty());
    auto calls = rig.provider->calls();
    REQUIRE(calls.size() == 3);
    auto last = calls[2].request.messages.back().content;
    CHECK(last.find("Target Distribution") != std::string::npos);
}

TEST_CASE("two malformed profiles raise", "[data]")
{
    Rig rig(entry("data_agent 1 1", "nothing") + entry("data_agent 1 2", "no block") +
            entry("data_agent 1 2", "still no block"));
    CHECK_THROWS_AS(rig.run(), ProfileFormatError);
    CHECK(std::filesystem::exists(rig.ctx.stage_dir / "rejected_report.md"));
    CHECK_FALSE(std::filesystem::exists(rig.ctx.stage_dir / "report.md"));
}

TEST_CASE("previous profile and requirements reach the prompt", "[data]")
{
    Rig rig(entry("data_agent 1 1", "done") + entry("data_agent 1 2", profile_reply()));
    rig.run({ "OLD PROFILE TEXT", "check the bmi column" });
    auto system = rig.provider->calls()[0].request.messages[0].content;
    CHECK(system.find("OLD PROFILE TEXT") != std::string::npos);
    CHECK(system.find("check the bmi column") != std::string::npos);
    CHECK(system.find("- Train: ") != std::string::npos);
}

TEST_CASE("profile heading check", "[data]")
{
    CHECK(missing_profile_headers("").size() == 7);
    auto all = missing_profile_headers("**1. Data Modality and Scale**\n### 2. basic information:\n");
    CHECK(all.size() == 5);
    CHECK(render_exploration_history({}) == "None");
}
