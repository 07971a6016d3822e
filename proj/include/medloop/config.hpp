// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <medloop/core_model.hpp>

#include <filesystem>
#include <string>

namespace medloop
{

struct LlmSettings
{
    std::string model = "deepseek-chat";
    double temperature = 0.4;
    double top_p = 0.7;
    int max_tokens = 8192;
};

struct DataAgentConfig
{
    int max_iterations = 15;
    int max_observation_chars = 10000;
    double timeout_seconds = 600;
    int max_chars_previous_profile = 20000;
    int max_chars_requirements = 8000;
    LlmSettings llm { .model = "deepseek-chat", .temperature = 0.3, .top_p = 0.3, .max_tokens = 8192 };
};

struct DesignAgentConfig
{
    int review_rounds = 1;
    int max_chars_task = 8000;
    int max_chars_data_report = 20000;
    int max_chars_feedback = 8000;
    int max_chars_retrieval = 6000;
    bool enable_uncertainty = true;
    bool enable_retrieval = false;
    std::filesystem::path uncertainty_methods_path;
    std::filesystem::path case_dir;
    LlmSettings llm { .model = "deepseek-chat", .temperature = 0.4, .top_p = 0.7, .max_tokens = 8192 };
};

struct CodingAgentConfig
{
    int max_steps = 10;
    int max_retries = 10;
    int feedback_max_iterations = 10;
    double fragment_timeout_seconds = 600;
    int max_output_chars = 10000;
    int max_chars_plan = 20000;
    int max_chars_history = 20000;
    bool enable_image_analysis = true;
    LlmSettings llm { .model = "deepseek-chat", .temperature = 0.2, .top_p = 0.7, .max_tokens = 8192 };
};

struct MetaAgentConfig
{
    int max_chars_task = 3000;
    int max_chars_context = 8000;
    LlmSettings llm { .model = "deepseek-chat", .temperature = 0.4, .top_p = 0.7, .max_tokens = 8192 };
};

struct ReportAgentConfig
{
    bool enabled = true;
    int max_fix_attempts = 3;
    int max_chars_training_output = 12000;
    int max_chars_section_input = 20000;
    int max_chars_compile_log = 4000;
    /// Command run inside the report directory; `{source}` is replaced with the file name.
    /// Empty selects the built-in stub that accepts every document.
    std::string compiler_command = "pdflatex -interaction=nonstopmode -halt-on-error {source}";
    double compiler_timeout_seconds = 300;
    bool visual_review = true;
    std::string title = "Automated Modeling Report";
    std::string author = "medloop";
    LlmSettings llm { .model = "deepseek-chat", .temperature = 0.7, .top_p = 0.7, .max_tokens = 8192 };
};

struct GatewayConfig
{
    int max_retries = 3;
    double timeout_seconds = 120;
    double backoff_seconds = 1.0;
};

struct PipelineConfig
{
    int max_rounds = 5;
    int patience = 1;
    double min_delta = 0.0;
    int max_chars_snapshot = 8000;
    int max_chars_execution_tail = 8000;
    /// `{driver}` expands to the generated driver script path.
    std::string interpreter_command = "python3 -u {driver}";
    TokenPrices token_prices;
    GatewayConfig gateway;
    DataAgentConfig data;
    DesignAgentConfig design;
    CodingAgentConfig coding;
    MetaAgentConfig meta;
    ReportAgentConfig report;
};

/// Checks every invariant and fills derived defaults. Throws ConfigError naming the field.
[[nodiscard]] auto validate_config(PipelineConfig cfg) -> PipelineConfig;

/// Overlays the YAML document at `path` onto `base`. Unknown keys raise ConfigError.
[[nodiscard]] auto load_config_file(const std::filesystem::path& path, PipelineConfig base = {})
    -> PipelineConfig;

/// Same as load_config_file but from text.
[[nodiscard]] auto load_config_text(const std::string& yaml, PipelineConfig base = {})
    -> PipelineConfig;

/// Directory holding shipped data files such as the uncertainty catalog.
[[nodiscard]] auto default_data_dir() -> std::filesystem::path;

} // namespace medloop
