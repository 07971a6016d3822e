// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <medloop/agent_report.hpp>
#include <medloop/errors.hpp>

#include <catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

using namespace medloop;
using testutil::block;
using testutil::entry;
namespace fs = std::filesystem;

namespace
{
auto section(const std::string& name, const std::string& body = "Text.") -> std::string
{
    return block("latex", "\\section{" + name + "}\n" + body);
}

auto document(const std::string& extra = "") -> std::string
{
    return block("latex", "\\documentclass{article}\n\\begin{document}\n\\section{Data Analysis}\nA.\n" + extra +
                              "\\section{Model Training}\nB.\n\\section{Uncertainty Analysis}\nC.\n\\end{document}");
}

auto sections_script() -> std::string
{
    return entry("report_agent * 1", section("Data Analysis")) + entry("report_agent * 2", section("Model Training")) +
           entry("report_agent * 3", section("Uncertainty Analysis"));
}

// Fails the first `failures` compilations with a TeX-style error pointing at line 3.
class ScriptedCompiler: public DocumentCompiler
{
  public:
    explicit ScriptedCompiler(int failures, bool available = true): failures_(failures), available_(available) {}
    auto compile(const fs::path& dir, const std::string& source_name) -> CompileResult override
    {
        ++calls;
        sources.push_back(text::read_file(dir / source_name));
        if (calls <= failures_)
            return { false, "! Undefined control sequence.\nl.3 \\badmacro\n", {} };
        text::write_file(dir / "report.pdf", "%PDF");
        return { true, "ok", dir / "report.pdf" };
    }
    [[nodiscard]] auto available() const -> bool override { return available_; }

    int calls = 0;
    std::vector<std::string> sources;

  private:
    int failures_;
    bool available_;
};

struct Rig
{
    explicit Rig(const std::string& script):
        provider(testutil::scripted(script)), gateway(provider, testutil::fast_gateway_config())
    {
        cfg = testutil::test_config();
        ctx = { 2, dir / "report_generation" };
        inputs.task = "Toy task";
        inputs.title = "Report: 100% of R&D";
        inputs.author = "medloop";
    }

    auto run(DocumentCompiler& compiler, ImageAnalyzer& analyzer) -> ReportDocument
    {
        return run_report_agent(inputs, cfg, gateway, compiler, analyzer, ctx);
    }

    testutil::TempDir dir { "report" };
    std::shared_ptr<ScriptedProvider> provider;
    Gateway gateway;
    PipelineConfig cfg;
    AgentContext ctx;
    ReportInputs inputs;
};
} // namespace

TEST_CASE("recorded report run compiles with the stub", "[report]")
{
    Rig rig(text::read_file(testutil::fixture_dir() / "toy" / "transcript.txt"));
    text::write_file(rig.dir / "outputs/training_history.png", "png");
    rig.inputs.figures = stage_figures(rig.dir / "outputs", rig.ctx.stage_dir);
    REQUIRE(rig.inputs.figures == std::vector<fs::path> { "figures/training_history.png" });
    StubCompiler stub;
    NullImageAnalyzer none;
    auto doc = rig.run(stub, none);
    CHECK(doc.status == ReportStatus::Compiled);
    CHECK_FALSE(doc.assembled_by_template);
    CHECK(doc.fix_attempts == 0);
    CHECK(section_offsets(doc.full_source));
    CHECK(doc.full_source.find("{figures/training_history.png}") != std::string::npos);
    CHECK(doc.full_source.find("\\fbox{Missing figure: \\detokenize{figures/roc_curve.png}}") != std::string::npos);
    CHECK(text::read_file(doc.source_path) == doc.full_source);
    CHECK(fs::exists(rig.ctx.stage_dir / "sections" / "model_training.tex"));
    CHECK(doc.section_sources.size() == 3);
    auto summary = nlohmann::json::parse(text::read_file(rig.ctx.stage_dir / "report_summary.json"));
    CHECK(summary["status"] == "compiled");
    CHECK(summary["compiled"] == "report.stub.txt");
    auto calls = rig.provider->calls();
    REQUIRE(calls.size() == 4);
    CHECK(calls[0].request.messages[1].content.find("figures/training_history.png") != std::string::npos);
    CHECK(calls[3].tags.step_idx == 4);
    CHECK(calls[0].request.temperature == 0.7);
}

TEST_CASE("unusable assembly falls back to the template", "[report]")
{
    Rig rig(sections_script() + entry("report_agent * 4", block("latex", "\\section{Model Training}\nwrong order")));
    StubCompiler stub;
    NullImageAnalyzer none;
    auto doc = rig.run(stub, none);
    CHECK(doc.assembled_by_template);
    CHECK(doc.status == ReportStatus::Compiled);
    auto off = section_offsets(doc.full_source);
    REQUIRE(off);
    CHECK((*off)[0] < (*off)[1]);
    CHECK((*off)[1] < (*off)[2]);
    CHECK(doc.full_source.find("\\title{Report: 100\\% of R\\&D}") != std::string::npos);
}

TEST_CASE("template assembly is deterministic and ordered", "[report][property]")
{
    std::map<std::string, std::string> secs { { "Uncertainty Analysis", "\\section{Uncertainty Analysis}\nu\n" },
                                              { "Data Analysis", "\\section{Data Analysis}\nd\n" },
                                              { "Model Training", "\\section{Model Training}\nm\n" } };
    auto a = assemble_template(secs, "T_1", "x^y");
    CHECK(a == assemble_template(secs, "T_1", "x^y"));
    CHECK(section_offsets(a));
    CHECK(a.find("\\title{T\\_1}") != std::string::npos);
    CHECK(a.find("\\author{x\\textasciicircum{}y}") != std::string::npos);
    secs.erase("Model Training");
    auto b = assemble_template(secs, "t", "a");
    CHECK(section_offsets(b));
    CHECK(b.find("No content.") != std::string::npos);
}

TEST_CASE("compile errors are fixed by the model", "[report]")
{
    Rig rig(sections_script() + entry("report_agent * 4", document("\\badmacro\n")) +
            entry("report_agent * 6", document("\\stillbad\n")) + entry("report_agent * 7", document()));
    ScriptedCompiler compiler(2);
    NullImageAnalyzer none;
    auto doc = rig.run(compiler, none);
    CHECK(doc.status == ReportStatus::Compiled);
    CHECK(doc.fix_attempts == 2);
    CHECK(compiler.calls == 3);
    CHECK(compiler.sources[2].find("\\stillbad") == std::string::npos);
    CHECK(doc.compiled_ref == rig.ctx.stage_dir / "report.pdf");
    for (int i = 0; i < 3; ++i)
        CHECK(fs::exists(rig.ctx.stage_dir / ("compile_" + std::to_string(i) + ".log")));
    auto fix_prompt = rig.provider->calls()[4].request.messages[1].content;
    CHECK(fix_prompt.find(">    3: \\section{Data Analysis}") != std::string::npos);
    CHECK(fix_prompt.find("Undefined control sequence") != std::string::npos);
}

TEST_CASE("the fix loop gives up after its budget", "[report]")
{
    Rig rig(sections_script() + entry("report_agent * *", document()) + entry("report_agent * *", document()));
    rig.cfg.report.max_fix_attempts = 1;
    ScriptedCompiler compiler(100);
    NullImageAnalyzer none;
    auto doc = rig.run(compiler, none);
    CHECK(doc.status == ReportStatus::GaveUp);
    CHECK(doc.fix_attempts == 1);
    CHECK(compiler.calls == 2);
    CHECK_FALSE(doc.compiled_ref);
    CHECK(fs::exists(doc.source_path));
}

TEST_CASE("an absent compiler keeps the source", "[report]")
{
    Rig rig(sections_script() + entry("report_agent * 4", document()));
    ScriptedCompiler compiler(0, false);
    NullImageAnalyzer none;
    auto doc = rig.run(compiler, none);
    CHECK(doc.status == ReportStatus::CompilerUnavailable);
    CHECK(compiler.calls == 0);
    CHECK(fs::exists(doc.source_path));
    CHECK(to_string(doc.status) == "compiler_unavailable");
}

TEST_CASE("sections must open with their heading", "[report]")
{
    Rig ok(entry("report_agent * 1", block("latex", "Intro without heading")) + sections_script() +
           entry("report_agent * 4", document()));
    StubCompiler stub;
    NullImageAnalyzer none;
    auto doc = ok.run(stub, none);
    CHECK(doc.section_sources.at("Data Analysis").rfind("\\section{Data Analysis}", 0) == 0);

    Rig bad(entry("report_agent * 1", block("latex", "x")) + entry("report_agent * 1", "no block"));
    CHECK_THROWS_AS(bad.run(stub, none), SectionFormatError);
    CHECK(fs::exists(bad.ctx.stage_dir / "rejected_reply.md"));
}

TEST_CASE("figure review revises the document", "[report]")
{
    Rig rig(sections_script() + entry("report_agent * 4", document("\\includegraphics{figures/a.png}\n")) +
            entry("report_agent * 5", document("\\includegraphics[width=0.5\\linewidth]{figures/a.png}\n")));
    text::write_file(rig.dir / "outputs/a.png", "png");
    rig.inputs.figures = stage_figures(rig.dir / "outputs", rig.ctx.stage_dir);
    int asked = 0;
    FunctionImageAnalyzer analyzer([&](const fs::path&, const std::string&) {
        ++asked;
        return std::string("too wide");
    });
    StubCompiler stub;
    auto doc = rig.run(stub, analyzer);
    CHECK(asked == 1);
    CHECK(doc.full_source.find("width=0.5") != std::string::npos);
    CHECK(rig.provider->calls()[4].request.messages[1].content.find("too wide") != std::string::npos);

    Rig off(sections_script() + entry("report_agent * 4", document("\\includegraphics{figures/a.png}\n")));
    off.cfg.report.visual_review = false;
    text::write_file(off.dir / "outputs/a.png", "png");
    off.inputs.figures = stage_figures(off.dir / "outputs", off.ctx.stage_dir);
    off.run(stub, analyzer);
    CHECK(asked == 1);
}

TEST_CASE("report helpers", "[report]")
{
    CHECK_FALSE(section_offsets("\\section{Model Training}\\section{Data Analysis}\\section{Uncertainty Analysis}"));
    CHECK_FALSE(section_offsets("\\section{Data Analysis}"));

    testutil::TempDir dir("figs");
    text::write_file(dir / "figures/x.png", "p");
    auto src = "\\includegraphics{figures/x}\n\\includegraphics[scale=2]{ figures/y.png }";
    auto out = replace_missing_figures(src, dir.path());
    CHECK(out.find("\\includegraphics{figures/x}") != std::string::npos);
    CHECK(out.find("\\fbox{Missing figure: \\detokenize{figures/y.png}}") != std::string::npos);

    CHECK(error_snippet("no marker", "a\nb") == "None");
    auto snip = error_snippet("l.2 oops", "one\ntwo\nthree", 1);
    CHECK(snip == "     1: one\n>    2: two\n     3: three\n");

    text::write_file(dir / "out/nested/b.PNG", "p");
    text::write_file(dir / "out/a.pdf", "p");
    text::write_file(dir / "out/c.csv", "p");
    auto staged = stage_figures(dir / "out", dir / "rep");
    CHECK(staged == std::vector<fs::path> { "figures/a.pdf", "figures/b.PNG" });
    CHECK(fs::exists(dir / "rep/figures/b.PNG"));
    CHECK(stage_figures(dir / "none", dir / "rep").empty());
}
