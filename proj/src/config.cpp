// SPDX-License-Identifier: Apache-2.0
#include <medloop/config.hpp>
#include <medloop/errors.hpp>

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <functional>
#include <map>

namespace medloop
{

namespace
{
    void require_positive(int value, const std::string& field)
    {
        if (value <= 0)
            throw ConfigError(field, "must be > 0, got " + std::to_string(value));
    }

    void require_non_negative(int value, const std::string& field)
    {
        if (value < 0)
            throw ConfigError(field, "must be >= 0, got " + std::to_string(value));
    }

    void check_llm(const LlmSettings& llm, const std::string& prefix)
    {
        if (llm.model.empty())
            throw ConfigError(prefix + ".model", "empty");
        if (!(llm.temperature >= 0.0 && llm.temperature <= 2.0))
            throw ConfigError(prefix + ".temperature", "outside [0,2]");
        if (!(llm.top_p >= 0.0 && llm.top_p <= 1.0))
            throw ConfigError(prefix + ".top_p", "outside [0,1]");
        require_positive(llm.max_tokens, prefix + ".max_tokens");
    }

    class Overlay
    {
      public:
        explicit Overlay(PipelineConfig& cfg): cfg_(cfg) {}

        void apply(const YAML::Node& root)
        {
            if (!root || root.IsNull())
                return;
            if (!root.IsMap())
                throw ConfigError("<root>", "expected a mapping");
            walk(root, "");
        }

      private:
        void walk(const YAML::Node& node, const std::string& prefix)
        {
            for (const auto& kv: node)
            {
                auto key = prefix.empty() ? kv.first.as<std::string>()
                                          : prefix + "." + kv.first.as<std::string>();
                if (kv.second.IsMap())
                    walk(kv.second, key);
                else
                    set(key, kv.second);
            }
        }

        template <typename T>
        static auto as(const YAML::Node& n, const std::string& key) -> T
        {
            try
            {
                return n.as<T>();
            }
            catch (const YAML::Exception&)
            {
                throw ConfigError(key, "wrong type");
            }
        }

        void set(const std::string& key, const YAML::Node& n)
        {
            auto& c = cfg_;
            auto i = [&](int& dst) { dst = as<int>(n, key); };
            auto d = [&](double& dst) { dst = as<double>(n, key); };
            auto s = [&](std::string& dst) { dst = as<std::string>(n, key); };
            auto b = [&](bool& dst) { dst = as<bool>(n, key); };
            auto p = [&](std::filesystem::path& dst) { dst = as<std::string>(n, key); };
            auto llm = [&](LlmSettings& l, const std::string& field) {
                if (field == "model")
                    s(l.model);
                else if (field == "temperature")
                    d(l.temperature);
                else if (field == "top_p")
                    d(l.top_p);
                else if (field == "max_tokens")
                    i(l.max_tokens);
                else
                    throw ConfigError(key, "unknown key");
            };

            static const std::string llm_prefixes[] = { "data.llm.", "design.llm.", "coding.llm.",
                                                        "meta.llm.", "report.llm." };
            for (const auto& pre: llm_prefixes)
                if (key.rfind(pre, 0) == 0)
                {
                    auto field = key.substr(pre.size());
                    auto& target = pre[0] == 'd' && pre[1] == 'a' ? c.data.llm
                                   : pre[0] == 'd'               ? c.design.llm
                                   : pre[0] == 'c'               ? c.coding.llm
                                   : pre[0] == 'm'               ? c.meta.llm
                                                                 : c.report.llm;
                    llm(target, field);
                    return;
                }

            const std::map<std::string, std::function<void()>> table {
                { "max_rounds", [&] { i(c.max_rounds); } },
                { "patience", [&] { i(c.patience); } },
                { "min_delta", [&] { d(c.min_delta); } },
                { "max_chars_snapshot", [&] { i(c.max_chars_snapshot); } },
                { "max_chars_execution_tail", [&] { i(c.max_chars_execution_tail); } },
                { "interpreter_command", [&] { s(c.interpreter_command); } },
                { "token_prices.input", [&] { d(c.token_prices.input); } },
                { "token_prices.output", [&] { d(c.token_prices.output); } },
                { "token_prices.cache", [&] { d(c.token_prices.cache); } },
                { "gateway.max_retries", [&] { i(c.gateway.max_retries); } },
                { "gateway.timeout_seconds", [&] { d(c.gateway.timeout_seconds); } },
                { "gateway.backoff_seconds", [&] { d(c.gateway.backoff_seconds); } },
                { "data.max_iterations", [&] { i(c.data.max_iterations); } },
                { "data.max_observation_chars", [&] { i(c.data.max_observation_chars); } },
                { "data.timeout_seconds", [&] { d(c.data.timeout_seconds); } },
                { "data.max_chars_previous_profile", [&] { i(c.data.max_chars_previous_profile); } },
                { "data.max_chars_requirements", [&] { i(c.data.max_chars_requirements); } },
                { "design.review_rounds", [&] { i(c.design.review_rounds); } },
                { "design.max_chars_task", [&] { i(c.design.max_chars_task); } },
                { "design.max_chars_data_report", [&] { i(c.design.max_chars_data_report); } },
                { "design.max_chars_feedback", [&] { i(c.design.max_chars_feedback); } },
                { "design.max_chars_retrieval", [&] { i(c.design.max_chars_retrieval); } },
                { "design.enable_uncertainty", [&] { b(c.design.enable_uncertainty); } },
                { "design.enable_retrieval", [&] { b(c.design.enable_retrieval); } },
                { "design.uncertainty_methods_path", [&] { p(c.design.uncertainty_methods_path); } },
                { "design.case_dir", [&] { p(c.design.case_dir); } },
                { "coding.max_steps", [&] { i(c.coding.max_steps); } },
                { "coding.max_retries", [&] { i(c.coding.max_retries); } },
                { "coding.feedback_max_iterations", [&] { i(c.coding.feedback_max_iterations); } },
                { "coding.fragment_timeout_seconds", [&] { d(c.coding.fragment_timeout_seconds); } },
                { "coding.max_output_chars", [&] { i(c.coding.max_output_chars); } },
                { "coding.max_chars_plan", [&] { i(c.coding.max_chars_plan); } },
                { "coding.max_chars_history", [&] { i(c.coding.max_chars_history); } },
                { "coding.enable_image_analysis", [&] { b(c.coding.enable_image_analysis); } },
                { "meta.max_chars_task", [&] { i(c.meta.max_chars_task); } },
                { "meta.max_chars_context", [&] { i(c.meta.max_chars_context); } },
                { "report.enabled", [&] { b(c.report.enabled); } },
                { "report.max_fix_attempts", [&] { i(c.report.max_fix_attempts); } },
                { "report.max_chars_training_output", [&] { i(c.report.max_chars_training_output); } },
                { "report.max_chars_section_input", [&] { i(c.report.max_chars_section_input); } },
                { "report.max_chars_compile_log", [&] { i(c.report.max_chars_compile_log); } },
                { "report.compiler_command", [&] { s(c.report.compiler_command); } },
                { "report.compiler_timeout_seconds", [&] { d(c.report.compiler_timeout_seconds); } },
                { "report.visual_review", [&] { b(c.report.visual_review); } },
                { "report.title", [&] { s(c.report.title); } },
                { "report.author", [&] { s(c.report.author); } },
            };
            auto it = table.find(key);
            if (it == table.end())
                throw ConfigError(key, "unknown key");
            it->second();
        }

        PipelineConfig& cfg_;
    };
} // namespace

auto default_data_dir() -> std::filesystem::path
{
    if (const char* env = std::getenv("MEDLOOP_DATA_DIR"); env && *env)
        return env;
#ifdef MEDLOOP_DEFAULT_DATA_DIR
    return MEDLOOP_DEFAULT_DATA_DIR;
#else
    return "data";
#endif
}

auto validate_config(PipelineConfig cfg) -> PipelineConfig
{
    if (cfg.max_rounds < 1)
        throw ConfigError("max_rounds", "must be >= 1, got " + std::to_string(cfg.max_rounds));
    require_non_negative(cfg.patience, "patience");
    if (!(cfg.min_delta >= 0.0))
        throw ConfigError("min_delta", "must be >= 0");
    require_positive(cfg.max_chars_snapshot, "max_chars_snapshot");
    require_positive(cfg.max_chars_execution_tail, "max_chars_execution_tail");
    if (cfg.interpreter_command.empty())
        throw ConfigError("interpreter_command", "empty");
    if (cfg.token_prices.input < 0)
        throw ConfigError("token_prices.input", "negative");
    if (cfg.token_prices.output < 0)
        throw ConfigError("token_prices.output", "negative");
    if (cfg.token_prices.cache < 0)
        throw ConfigError("token_prices.cache", "negative");

    require_non_negative(cfg.gateway.max_retries, "gateway.max_retries");
    if (!(cfg.gateway.timeout_seconds > 0))
        throw ConfigError("gateway.timeout_seconds", "must be > 0");
    if (cfg.gateway.backoff_seconds < 0)
        throw ConfigError("gateway.backoff_seconds", "negative");

    require_non_negative(cfg.data.max_iterations, "data.max_iterations");
    require_positive(cfg.data.max_observation_chars, "data.max_observation_chars");
    if (!(cfg.data.timeout_seconds > 0))
        throw ConfigError("data.timeout_seconds", "must be > 0");
    require_positive(cfg.data.max_chars_previous_profile, "data.max_chars_previous_profile");
    require_positive(cfg.data.max_chars_requirements, "data.max_chars_requirements");
    check_llm(cfg.data.llm, "data.llm");

    require_non_negative(cfg.design.review_rounds, "design.review_rounds");
    require_positive(cfg.design.max_chars_task, "design.max_chars_task");
    require_positive(cfg.design.max_chars_data_report, "design.max_chars_data_report");
    require_positive(cfg.design.max_chars_feedback, "design.max_chars_feedback");
    require_positive(cfg.design.max_chars_retrieval, "design.max_chars_retrieval");
    if (cfg.design.uncertainty_methods_path.empty())
        cfg.design.uncertainty_methods_path = default_data_dir() / "uncertainty_methods.md";
    check_llm(cfg.design.llm, "design.llm");

    require_positive(cfg.coding.max_steps, "coding.max_steps");
    require_non_negative(cfg.coding.max_retries, "coding.max_retries");
    require_non_negative(cfg.coding.feedback_max_iterations, "coding.feedback_max_iterations");
    if (!(cfg.coding.fragment_timeout_seconds > 0))
        throw ConfigError("coding.fragment_timeout_seconds", "must be > 0");
    require_positive(cfg.coding.max_output_chars, "coding.max_output_chars");
    require_positive(cfg.coding.max_chars_plan, "coding.max_chars_plan");
    require_positive(cfg.coding.max_chars_history, "coding.max_chars_history");
    check_llm(cfg.coding.llm, "coding.llm");

    require_positive(cfg.meta.max_chars_task, "meta.max_chars_task");
    require_positive(cfg.meta.max_chars_context, "meta.max_chars_context");
    check_llm(cfg.meta.llm, "meta.llm");

    require_non_negative(cfg.report.max_fix_attempts, "report.max_fix_attempts");
    require_positive(cfg.report.max_chars_training_output, "report.max_chars_training_output");
    require_positive(cfg.report.max_chars_section_input, "report.max_chars_section_input");
    require_positive(cfg.report.max_chars_compile_log, "report.max_chars_compile_log");
    if (!(cfg.report.compiler_timeout_seconds > 0))
        throw ConfigError("report.compiler_timeout_seconds", "must be > 0");
    check_llm(cfg.report.llm, "report.llm");
    return cfg;
}

auto load_config_text(const std::string& yaml, PipelineConfig base) -> PipelineConfig
{
    YAML::Node root;
    try
    {
        root = YAML::Load(yaml);
    }
    catch (const YAML::Exception& e)
    {
        throw ConfigError("<file>", e.what());
    }
    Overlay(base).apply(root);
    return base;
}

auto load_config_file(const std::filesystem::path& path, PipelineConfig base) -> PipelineConfig
{
    YAML::Node root;
    try
    {
        root = YAML::LoadFile(path.string());
    }
    catch (const YAML::BadFile&)
    {
        throw ConfigError("<file>", "cannot read " + path.string());
    }
    catch (const YAML::Exception& e)
    {
        throw ConfigError("<file>", e.what());
    }
    Overlay(base).apply(root);
    return base;
}

} // namespace medloop
