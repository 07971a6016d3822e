// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/agent_common.hpp>
#include <medloop/tools.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace medloop
{

struct ReportInputs
{
    std::string task;
    std::string profile;
    std::string plan;
    std::string training_output;
    std::string image_descriptions;
    /// Image files copied into the report directory under figures/.
    std::vector<std::filesystem::path> figures;
    std::string title;
    std::string author;
};

enum class ReportStatus
{
    Compiled,
    GaveUp,
    CompilerUnavailable,
};

[[nodiscard]] auto to_string(ReportStatus s) -> std::string_view;

struct ReportDocument
{
    std::map<std::string, std::string> section_sources; ///< Keyed by section name.
    std::string full_source;
    std::filesystem::path source_path;
    std::optional<std::filesystem::path> compiled_ref;
    int fix_attempts = 0;
    bool assembled_by_template = false;
    ReportStatus status = ReportStatus::GaveUp;
};

/// Offsets of the three \section headings, or nullopt when one is missing or out of order.
[[nodiscard]] auto section_offsets(std::string_view source) -> std::optional<std::vector<std::size_t>>;

/// Deterministic document holding the sections in the fixed order.
[[nodiscard]] auto assemble_template(const std::map<std::string, std::string>& sections,
                                     const std::string& title,
                                     const std::string& author) -> std::string;

/// Rewrites \includegraphics references to files missing under `dir` into a placeholder box.
[[nodiscard]] auto replace_missing_figures(const std::string& source, const std::filesystem::path& dir) -> std::string;

/// Source lines around the first "l.<n>" marker of a compiler log, or "None".
[[nodiscard]] auto error_snippet(const std::string& log, const std::string& source, int context = 5) -> std::string;

/// Copies image files found under `outputs_dir` into `report_dir`/figures. Returns paths relative
/// to `report_dir`, sorted.
auto stage_figures(const std::filesystem::path& outputs_dir, const std::filesystem::path& report_dir)
    -> std::vector<std::filesystem::path>;

/// Sections, assembly, optional figure review and the compile loop, all in ctx.stage_dir.
/// Throws SectionFormatError. Compile failures are reported through the status.
auto run_report_agent(const ReportInputs& inputs,
                      const PipelineConfig& cfg,
                      Gateway& gateway,
                      DocumentCompiler& compiler,
                      ImageAnalyzer& analyzer,
                      const AgentContext& ctx) -> ReportDocument;

} // namespace medloop
