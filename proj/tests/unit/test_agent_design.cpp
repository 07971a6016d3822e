// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <medloop/agent_design.hpp>
#include <medloop/errors.hpp>

#include <catch_amalgamated.hpp>

using namespace medloop;
using testutil::block;
using testutil::entry;

namespace
{
struct Rig
{
    explicit Rig(const std::string& script):
        provider(testutil::scripted(script)), gateway(provider, testutil::fast_gateway_config())
    {
        cfg = testutil::test_config();
        ctx = { 2, dir / "planning" };
        summary = build_requirement_summary("Predict the label.", "Profile text.", "", "CPU cores: 4", cfg);
    }

    auto run(const std::string& catalog = "CATALOG-ENTRY") -> ExperimentalPlan
    {
        return run_design_agent(summary, *retrieval, catalog, cfg, gateway, ctx);
    }

    auto prompt(std::size_t call) const -> std::string
    {
        return provider->calls().at(call).request.messages.at(1).content;
    }

    testutil::TempDir dir { "design" };
    std::shared_ptr<ScriptedProvider> provider;
    Gateway gateway;
    PipelineConfig cfg;
    AgentContext ctx;
    RequirementSummary summary;
    std::unique_ptr<RetrievalProvider> retrieval = std::make_unique<NullRetrieval>();
};

auto plan(const std::string& body) -> std::string
{
    return block("plan_md", body);
}
} // namespace

TEST_CASE("draft, review and refinement in order", "[design]")
{
    Rig rig(entry("planner 2 0", plan("1. draft")) + entry("reviewer 2 1", block("review", "Evaluation and Questions\n- why?")) +
            entry("planner 2 1", plan("1. refined once")) + entry("reviewer 2 2", block("review", "- more?")) +
            entry("planner 2 2", plan("1. refined twice")));
    rig.cfg.design.review_rounds = 2;
    auto p = rig.run();
    CHECK(p.revision == 2);
    CHECK(p.plan_text == "1. refined twice\n");
    CHECK(text::read_file(p.path) == p.plan_text);
    auto stage = rig.ctx.stage_dir;
    CHECK(text::read_file(stage / "draft_0.md") == "1. draft\n");
    CHECK(text::read_file(stage / "draft_1.md") == "1. refined once\n");
    CHECK(text::read_file(stage / "review_2.md") == "- more?\n");

    auto calls = rig.provider->calls();
    REQUIRE(calls.size() == 5);
    const char* agents[] = { "planner", "reviewer", "planner", "reviewer", "planner" };
    const int steps[] = { 0, 1, 1, 2, 2 };
    for (std::size_t i = 0; i < 5; ++i)
    {
        CHECK(calls[i].tags.agent_name == agents[i]);
        CHECK(calls[i].tags.step_idx == steps[i]);
        CHECK(calls[i].tags.round_idx == 2);
    }
    CHECK(rig.prompt(1).find("1. draft") != std::string::npos);
    CHECK(rig.prompt(2).find("- why?") != std::string::npos);
    CHECK(rig.prompt(3).find("1. refined once") != std::string::npos);
    CHECK(std::filesystem::exists(stage / "llm_calls" / "005_planner_r2_s2.json"));
}

TEST_CASE("zero review rounds keeps the draft", "[design]")
{
    Rig rig(entry("planner 2 0", plan("only draft")));
    rig.cfg.design.review_rounds = 0;
    auto p = rig.run();
    CHECK(p.revision == 0);
    CHECK(p.plan_text == "only draft\n");
    CHECK(rig.provider->calls().size() == 1);
}

TEST_CASE("a refined plan echoing the review section is re-requested", "[design]")
{
    Rig rig(entry("planner 2 0", plan("draft")) + entry("reviewer 2 1", block("review", "Evaluation and Questions\n- q")) +
            entry("planner 2 1", plan("plan\n## Evaluation and Questions\n- q")) + entry("planner 2 1", plan("clean plan")));
    auto p = rig.run();
    CHECK(p.plan_text == "clean plan\n");
    auto calls = rig.provider->calls();
    REQUIRE(calls.size() == 4);
    CHECK(calls[3].request.messages.size() == 4);
    CHECK(calls[3].request.messages[3].content.find("Evaluation and Questions") != std::string::npos);
}

TEST_CASE("a draft without a plan block is rejected after one re-prompt", "[design]")
{
    Rig rig(entry("planner 2 0", "Here is my plan: do things.") + entry("planner 2 0", "```plan_md\n\n```"));
    CHECK_THROWS_AS(rig.run(), PlanFormatError);
    CHECK(std::filesystem::exists(rig.ctx.stage_dir / "rejected_reply.md"));
    CHECK_FALSE(std::filesystem::exists(rig.ctx.stage_dir / "final_plan.md"));
}

TEST_CASE("uncertainty catalog can be switched off", "[design]")
{
    {
        Rig rig(entry("planner 2 0", plan("a")) + entry("reviewer 2 1", block("review", "r")) + entry("planner 2 1", plan("b")));
        rig.run();
        CHECK(rig.prompt(0).find("CATALOG-ENTRY") != std::string::npos);
    }
    {
        Rig rig(entry("planner 2 0", plan("a")) + entry("reviewer 2 1", block("review", "r")) + entry("planner 2 1", plan("b")));
        rig.cfg.design.enable_uncertainty = false;
        rig.run();
        CHECK(rig.prompt(0).find("CATALOG-ENTRY") == std::string::npos);
        CHECK(rig.prompt(0).find("{uncertainty_methods}") == std::string::npos);
    }
}

TEST_CASE("retrieved material reaches the draft prompt", "[design]")
{
    Rig rig(entry("planner * *", plan("a")) + entry("planner * *", plan("b")) + entry("reviewer * *", block("review", "r")));
    rig.run();
    CHECK(rig.prompt(0).find(no_retrieval_marker) != std::string::npos);

    Rig with(entry("planner * *", plan("a")) + entry("planner * *", plan("b")) + entry("reviewer * *", block("review", "r")));
    text::write_file(with.dir / "cases/label.md", "A past case: predict the label with gradient boosting.");
    with.retrieval = std::make_unique<LocalCorpusRetrieval>(with.dir / "cases");
    with.run();
    CHECK(with.prompt(0).find("gradient boosting") != std::string::npos);
}

TEST_CASE("requirement summary bounds and placeholders", "[design]")
{
    auto cfg = testutil::test_config();
    cfg.design.max_chars_task = 4;
    cfg.design.max_chars_data_report = 3;
    cfg.design.max_chars_feedback = 5;
    auto s = build_requirement_summary("abcdefgh", "PROFILE", "0123456789", "", cfg);
    CHECK(s.task == "abcd");
    CHECK(s.profile == "PRO");
    CHECK(s.memory == "56789");
    CHECK(s.device_info == "unknown");
    auto none = build_requirement_summary("t", "", " ", "gpu", cfg);
    CHECK(none.profile == "None");
    CHECK(none.memory == "None");
}
