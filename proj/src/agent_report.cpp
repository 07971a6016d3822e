// SPDX-License-Identifier: Apache-2.0
#include <medloop/agent_report.hpp>
#include <medloop/errors.hpp>
#include <medloop/prompts.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;

namespace medloop
{

auto to_string(ReportStatus s) -> std::string_view
{
    switch (s)
    {
        case ReportStatus::Compiled: return "compiled";
        case ReportStatus::GaveUp: return "gave_up";
        case ReportStatus::CompilerUnavailable: return "compiler_unavailable";
    }
    return "gave_up";
}

namespace
{
    auto heading(std::string_view name) -> std::string { return fmt::format("\\section{{{}}}", name); }

    auto slug(std::string_view name) -> std::string
    {
        std::string out;
        for (char c: name)
            out += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    }

    auto escape_latex(std::string_view s) -> std::string
    {
        std::string out;
        for (char c: s)
        {
            switch (c)
            {
                case '&':
                case '%':
                case '$':
                case '#':
                case '_':
                case '{':
                case '}': out += '\\'; out += c; break;
                case '~': out += "\\textasciitilde{}"; break;
                case '^': out += "\\textasciicircum{}"; break;
                case '\\': out += "\\textbackslash{}"; break;
                default: out += c;
            }
        }
        return out;
    }

    auto is_document(std::string_view src) -> bool
    {
        return src.find("\\documentclass") != std::string_view::npos
            && src.find("\\begin{document}") != std::string_view::npos
            && src.find("\\end{document}") != std::string_view::npos && section_offsets(src).has_value();
    }

    auto latex_block(const std::string& reply) -> std::optional<std::string>
    {
        auto blocks = parse_blocks(reply);
        auto b = extract_ci(blocks, "latex");
        if (!b)
            b = extract_ci(blocks, "tex");
        if (!b || text::trim(b->body).empty())
            return std::nullopt;
        return std::string(text::trim(b->body)) + "\n";
    }

    auto document_check(const std::string& reply) -> Checked
    {
        auto src = latex_block(reply);
        if (!src)
            return Checked::bad("no non-empty ```latex block found.");
        if (!is_document(*src))
            return Checked::bad("the document must have a preamble, a document body and the three sections in order.");
        return Checked::ok(*src);
    }
} // namespace

auto section_offsets(std::string_view source) -> std::optional<std::vector<std::size_t>>
{
    std::vector<std::size_t> out;
    std::size_t from = 0;
    for (auto name: prompts::report_sections)
    {
        auto pos = source.find(heading(name), from);
        if (pos == std::string_view::npos)
            return std::nullopt;
        out.push_back(pos);
        from = pos + 1;
    }
    return out;
}

auto assemble_template(const std::map<std::string, std::string>& sections,
                       const std::string& title,
                       const std::string& author) -> std::string
{
    std::string out = "\\documentclass[11pt]{article}\n"
                      "\\usepackage[margin=2.5cm]{geometry}\n"
                      "\\usepackage{graphicx}\n"
                      "\\usepackage{booktabs}\n"
                      "\\usepackage{amsmath}\n"
                      "\\usepackage{hyperref}\n\n";
    out += fmt::format("\\title{{{}}}\n\\author{{{}}}\n\\date{{}}\n\n\\begin{{document}}\n\\maketitle\n\n",
                       escape_latex(title), escape_latex(author));
    for (auto name: prompts::report_sections)
    {
        auto it = sections.find(std::string(name));
        out += it != sections.end() ? it->second : heading(name) + "\nNo content.\n";
        out += "\n";
    }
    out += "\\end{document}\n";
    return out;
}

auto replace_missing_figures(const std::string& source, const fs::path& dir) -> std::string
{
    static const std::regex re(R"(\\includegraphics\s*(\[[^\]]*\])?\s*\{([^}]*)\})");
    std::string out;
    auto last = source.cbegin();
    for (std::sregex_iterator it(source.begin(), source.end(), re), end; it != end; ++it)
    {
        const auto& m = *it;
        out.append(last, m[0].first);
        auto name = std::string(text::trim(m[2].str()));
        fs::path p = fs::path(name).is_absolute() ? fs::path(name) : dir / name;
        bool found = fs::is_regular_file(p);
        for (const char* ext: { ".png", ".pdf", ".jpg", ".jpeg" })
            if (!found && !p.has_extension())
                found = fs::is_regular_file(fs::path(p).concat(ext));
        out += found ? m[0].str() : fmt::format("\\fbox{{Missing figure: \\detokenize{{{}}}}}", name);
        last = m[0].second;
    }
    out.append(last, source.cend());
    return out;
}

auto error_snippet(const std::string& log, const std::string& source, int context) -> std::string
{
    static const std::regex re(R"((?:^|\n)l\.(\d+))");
    std::smatch m;
    if (!std::regex_search(log, m, re))
        return "None";
    int line_no = std::stoi(m[1].str());
    std::istringstream in(source);
    std::string out;
    int n = 0;
    for (std::string line; std::getline(in, line);)
    {
        ++n;
        if (n >= line_no - context && n <= line_no + context)
            out += fmt::format("{}{:>5}: {}\n", n == line_no ? ">" : " ", n, line);
    }
    return out.empty() ? "None" : out;
}

auto stage_figures(const fs::path& outputs_dir, const fs::path& report_dir) -> std::vector<fs::path>
{
    std::vector<fs::path> out;
    std::error_code ec;
    if (outputs_dir.empty() || !fs::is_directory(outputs_dir, ec))
        return out;
    for (auto it = fs::recursive_directory_iterator(outputs_dir, ec); it != fs::recursive_directory_iterator();
         it.increment(ec))
    {
        if (ec)
            break;
        auto ext = text::to_lower(it->path().extension().string());
        if (!it->is_regular_file() || (ext != ".png" && ext != ".jpg" && ext != ".jpeg" && ext != ".pdf"))
            continue;
        auto rel = fs::path("figures") / it->path().filename();
        fs::create_directories(report_dir / "figures");
        fs::copy_file(it->path(), report_dir / rel, fs::copy_options::overwrite_existing);
        out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

auto run_report_agent(const ReportInputs& inputs,
                      const PipelineConfig& cfg,
                      Gateway& gateway,
                      DocumentCompiler& compiler,
                      ImageAnalyzer& analyzer,
                      const AgentContext& ctx) -> ReportDocument
{
    const auto& rc = cfg.report;
    auto dir = ctx.stage_dir;
    fs::create_directories(dir / "sections");
    auto section_limit = static_cast<std::size_t>(rc.max_chars_section_input);

    std::string figures;
    for (const auto& f: inputs.figures)
        figures += "- " + f.generic_string() + "\n";

    ReportDocument doc;
    int step = 0;
    for (auto name: prompts::report_sections)
    {
        ++step;
        auto user = text::render(prompts::report_section,
                                 { { "section", std::string(name) },
                                   { "task", text::or_none(text::truncate_head(inputs.task, section_limit)) },
                                   { "data_report", text::or_none(text::truncate_head(inputs.profile, section_limit)) },
                                   { "plan", text::or_none(text::truncate_head(inputs.plan, section_limit)) },
                                   { "training_output",
                                     text::or_none(text::truncate_tail(inputs.training_output,
                                                                       static_cast<std::size_t>(rc.max_chars_training_output))) },
                                   { "image_descriptions", text::or_none(inputs.image_descriptions) },
                                   { "figures", text::or_none(figures) } });
        auto want = heading(name);
        auto check = [&want](const std::string& reply) -> Checked {
            auto src = latex_block(reply);
            if (!src)
                return Checked::bad("no non-empty ```latex block found.");
            if (src->rfind(want, 0) != 0)
                return Checked::bad("the section must start with " + want + ".");
            return Checked::ok(*src);
        };
        auto ex = ask_with_reprompt(gateway, rc.llm, prompts::report_system, user, { "report_agent", ctx.round_idx, step },
                                    dir, check, prompts::report_reformat);
        if (!ex.value)
        {
            text::write_file(dir / "rejected_reply.md", ex.last_reply);
            throw SectionFormatError(fmt::format("section '{}' rejected twice: {}", name, ex.problem));
        }
        text::write_file(dir / "sections" / (slug(name) + ".tex"), *ex.value);
        doc.section_sources[std::string(name)] = *ex.value;
    }

    std::string sections_text;
    std::string order;
    for (auto name: prompts::report_sections)
    {
        sections_text += doc.section_sources[std::string(name)] + "\n";
        order += (order.empty() ? "" : ", ") + std::string(name);
    }
    auto assemble_user = text::render(prompts::report_assemble,
                                      { { "title", inputs.title },
                                        { "author", inputs.author },
                                        { "sections", sections_text },
                                        { "order", order } });
    auto assembled = gateway.chat(ChatRequest::from(rc.llm, { { Role::System, prompts::report_system }, { Role::User, assemble_user } }),
                                  { "report_agent", ctx.round_idx, 4 }, dir);
    auto check = document_check(assembled.content);
    if (check.value)
        doc.full_source = *check.value;
    else
    {
        spdlog::warn("assembled report unusable ({}); using the built-in layout", check.problem);
        doc.full_source = assemble_template(doc.section_sources, inputs.title, inputs.author);
        doc.assembled_by_template = true;
    }
    doc.full_source = replace_missing_figures(doc.full_source, dir);

    if (rc.visual_review && analyzer.available() && !inputs.figures.empty())
    {
        std::string feedback;
        for (const auto& f: inputs.figures)
            if (doc.full_source.find(f.generic_string()) != std::string::npos)
                feedback += fmt::format("- {}: {}\n", f.generic_string(),
                                        analyzer.analyze(dir / f, "Is this figure legible, labeled and suitable for a report?"));
        if (!feedback.empty())
        {
            auto user = text::render(prompts::report_visual, { { "figure_feedback", feedback }, { "source", doc.full_source } });
            auto reply = gateway.chat(ChatRequest::from(rc.llm, { { Role::System, prompts::report_system }, { Role::User, user } }),
                                      { "report_agent", ctx.round_idx, 5 }, dir);
            if (auto revised = document_check(reply.content); revised.value)
                doc.full_source = replace_missing_figures(*revised.value, dir);
        }
    }

    doc.source_path = dir / "report.tex";
    text::write_file(doc.source_path, doc.full_source);

    if (!compiler.available())
    {
        spdlog::warn("document compiler not available; report source kept at {}", doc.source_path.string());
        doc.status = ReportStatus::CompilerUnavailable;
    }
    else
    {
        for (;;)
        {
            auto result = compiler.compile(dir, "report.tex");
            text::write_file(dir / fmt::format("compile_{}.log", doc.fix_attempts), result.log);
            if (result.success)
            {
                doc.status = ReportStatus::Compiled;
                doc.compiled_ref = result.output;
                break;
            }
            if (doc.fix_attempts >= rc.max_fix_attempts)
            {
                doc.status = ReportStatus::GaveUp;
                break;
            }
            ++doc.fix_attempts;
            auto user = text::render(prompts::report_fix,
                                     { { "log_tail", text::truncate_tail(result.log, static_cast<std::size_t>(rc.max_chars_compile_log)) },
                                       { "snippet", error_snippet(result.log, doc.full_source) },
                                       { "source", doc.full_source } });
            auto reply = gateway.chat(ChatRequest::from(rc.llm, { { Role::System, prompts::report_system }, { Role::User, user } }),
                                      { "report_agent", ctx.round_idx, 5 + doc.fix_attempts }, dir);
            if (auto fixed = document_check(reply.content); fixed.value)
                doc.full_source = replace_missing_figures(*fixed.value, dir);
            text::write_file(doc.source_path, doc.full_source);
        }
    }

    nlohmann::json summary {
        { "status", to_string(doc.status) },
        { "fix_attempts", doc.fix_attempts },
        { "assembled_by_template", doc.assembled_by_template },
        { "source", "report.tex" },
        { "compiled", doc.compiled_ref ? nlohmann::json(fs::relative(*doc.compiled_ref, dir).generic_string())
                                       : nlohmann::json(nullptr) },
    };
    text::write_file(dir / "report_summary.json", summary.dump(2) + "\n");
    return doc;
}

} // namespace medloop
