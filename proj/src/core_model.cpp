// SPDX-License-Identifier: Apache-2.0
#include <medloop/core_model.hpp>
#include <medloop/errors.hpp>

#include <nlohmann/json.hpp>

#include <set>

namespace medloop
{

using nlohmann::json;

void TaskSpec::validate() const
{
    if (name.empty())
        throw TaskParseError("name", "empty");
    if (name.find_first_of("/\\") != std::string::npos || name == "." || name == "..")
        throw TaskParseError("name", "not filesystem-safe: " + name);
    if (metric_name.empty())
        throw TaskParseError("metric", "empty");
    std::set<std::string> labels;
    for (const auto& p: data_paths)
        if (!labels.insert(p.label).second)
            throw TaskParseError("data_paths", "duplicate label " + p.label);
}

auto to_string(Stage stage) -> std::string_view
{
    switch (stage)
    {
        case Stage::DataUnderstanding: return "data_understanding";
        case Stage::Planning: return "planning";
        case Stage::CodeExecution: return "code_execution";
        case Stage::Meta: return "meta";
        case Stage::ReportGeneration: return "report_generation";
    }
    return "planning";
}

auto stage_from_string(std::string_view text) -> std::optional<Stage>
{
    for (auto s: { Stage::DataUnderstanding,
                   Stage::Planning,
                   Stage::CodeExecution,
                   Stage::Meta,
                   Stage::ReportGeneration })
        if (to_string(s) == text)
            return s;
    return std::nullopt;
}

auto TokenUsage::from_counts(std::int64_t input,
                             std::int64_t output,
                             std::int64_t cache,
                             const TokenPrices& prices) -> TokenUsage
{
    auto u = TokenUsage { .input_tokens = input,
                          .output_tokens = output,
                          .cache_hit_tokens = cache,
                          .total_tokens = input + output };
    return u.priced(prices);
}

auto TokenUsage::priced(const TokenPrices& prices) const -> TokenUsage
{
    auto u = *this;
    u.total_tokens = input_tokens + output_tokens;
    u.cost = static_cast<double>(input_tokens) * prices.input
             + static_cast<double>(output_tokens) * prices.output
             + static_cast<double>(cache_hit_tokens) * prices.cache;
    return u;
}

auto TokenUsage::operator+=(const TokenUsage& other) -> TokenUsage&
{
    input_tokens += other.input_tokens;
    output_tokens += other.output_tokens;
    cache_hit_tokens += other.cache_hit_tokens;
    total_tokens += other.total_tokens;
    cost += other.cost;
    return *this;
}

auto to_string(ExecutionStatus status) -> std::string_view
{
    switch (status)
    {
        case ExecutionStatus::Success: return "success";
        case ExecutionStatus::Failure: return "failure";
        case ExecutionStatus::Unknown: return "unknown";
    }
    return "unknown";
}

auto execution_status_from_string(std::string_view text) -> ExecutionStatus
{
    if (text == "success")
        return ExecutionStatus::Success;
    if (text == "failure")
        return ExecutionStatus::Failure;
    return ExecutionStatus::Unknown;
}

auto MetaDecision::stop(std::string reason, std::string why) -> MetaDecision
{
    return MetaDecision { .action = MetaAction::Stop,
                          .next_start = Stage::Planning,
                          .stop_reason = std::move(reason),
                          .decision_reason = std::move(why),
                          .next_start_reason = {} };
}

auto MetaDecision::proceed(Stage next, std::string why) -> MetaDecision
{
    return MetaDecision { .action = MetaAction::Continue,
                          .next_start = next,
                          .stop_reason = {},
                          .decision_reason = std::move(why),
                          .next_start_reason = {} };
}

namespace
{
    template <typename T>
    void put_opt(json& j, const char* key, const std::optional<T>& v)
    {
        if (v)
            j[key] = *v;
        else
            j[key] = nullptr;
    }

    template <typename T>
    void get_opt(const json& j, const char* key, std::optional<T>& v)
    {
        if (j.contains(key) && !j.at(key).is_null())
            v = j.at(key).get<T>();
        else
            v.reset();
    }

    auto direction_name(MetricDirection d) -> const char*
    {
        return d == MetricDirection::HigherBetter ? "higher_better" : "lower_better";
    }
} // namespace

void to_json(json& j, const TaskSpec& v)
{
    j = json::object();
    j["name"] = v.name;
    j["description"] = v.description;
    j["metric_name"] = v.metric_name;
    j["metric_direction"] = direction_name(v.metric_direction);
    auto paths = json::array();
    for (const auto& p: v.data_paths)
        paths.push_back({ { "label", p.label }, { "path", p.path.string() } });
    j["data_paths"] = paths;
    if (v.data_root)
        j["data_root"] = v.data_root->string();
    else
        j["data_root"] = nullptr;
}

void from_json(const json& j, TaskSpec& v)
{
    v.name = j.at("name").get<std::string>();
    v.description = j.value("description", "");
    v.metric_name = j.at("metric_name").get<std::string>();
    auto dir = j.at("metric_direction").get<std::string>();
    if (dir == "higher_better")
        v.metric_direction = MetricDirection::HigherBetter;
    else if (dir == "lower_better")
        v.metric_direction = MetricDirection::LowerBetter;
    else
        throw TaskParseError("metric_direction", dir);
    v.data_paths.clear();
    for (const auto& p: j.at("data_paths"))
        v.data_paths.push_back({ p.at("label").get<std::string>(), p.at("path").get<std::string>() });
    if (j.contains("data_root") && !j.at("data_root").is_null())
        v.data_root = j.at("data_root").get<std::string>();
    else
        v.data_root.reset();
}

void to_json(json& j, const TokenUsage& v)
{
    j = json { { "input_tokens", v.input_tokens },
               { "output_tokens", v.output_tokens },
               { "cache_hit_tokens", v.cache_hit_tokens },
               { "total_tokens", v.total_tokens },
               { "cost", v.cost } };
}

void from_json(const json& j, TokenUsage& v)
{
    v.input_tokens = j.value("input_tokens", std::int64_t { 0 });
    v.output_tokens = j.value("output_tokens", std::int64_t { 0 });
    v.cache_hit_tokens = j.value("cache_hit_tokens", std::int64_t { 0 });
    v.total_tokens = j.value("total_tokens", v.input_tokens + v.output_tokens);
    v.cost = j.value("cost", 0.0);
}

void to_json(json& j, const RoundArtifacts& v)
{
    j = json::object();
    j["round_idx"] = v.round_idx;
    j["data_report_ref"] = v.data_report_ref;
    j["plan_ref"] = v.plan_ref;
    j["execution_dir"] = v.execution_dir;
    j["execution_status"] = to_string(v.execution_status);
    j["feedback_ref"] = v.feedback_ref;
    j["metrics_ref"] = v.metrics_ref;
    put_opt(j, "primary_metric_value", v.primary_metric_value);
    j["stage_durations"] = v.stage_durations;
    j["stage_token_usage"] = v.stage_token_usage;
    j["failure_reason"] = v.failure_reason;
}

void from_json(const json& j, RoundArtifacts& v)
{
    v.round_idx = j.at("round_idx").get<int>();
    v.data_report_ref = j.value("data_report_ref", "");
    v.plan_ref = j.value("plan_ref", "");
    v.execution_dir = j.value("execution_dir", "");
    v.execution_status = execution_status_from_string(j.value("execution_status", "unknown"));
    v.feedback_ref = j.value("feedback_ref", "");
    v.metrics_ref = j.value("metrics_ref", "");
    get_opt(j, "primary_metric_value", v.primary_metric_value);
    v.stage_durations = j.value("stage_durations", std::map<std::string, double> {});
    v.stage_token_usage.clear();
    if (j.contains("stage_token_usage"))
        for (const auto& [k, u]: j.at("stage_token_usage").items())
            v.stage_token_usage[k] = u.get<TokenUsage>();
    v.failure_reason = j.value("failure_reason", "");
}

void to_json(json& j, const MemoryUnit& v)
{
    j = json { { "round_idx", v.round_idx }, { "summary_text", v.summary_text } };
}

void from_json(const json& j, MemoryUnit& v)
{
    v.round_idx = j.at("round_idx").get<int>();
    v.summary_text = j.at("summary_text").get<std::string>();
}

void to_json(json& j, const PreviousRound& v)
{
    j = json::object();
    j["round_idx"] = v.round_idx;
    put_opt(j, "primary_metric_value", v.primary_metric_value);
    j["status"] = to_string(v.status);
    j["plan_excerpt"] = v.plan_excerpt;
    j["execution_excerpt"] = v.execution_excerpt;
    j["feedback_excerpt"] = v.feedback_excerpt;
}

void from_json(const json& j, PreviousRound& v)
{
    v.round_idx = j.at("round_idx").get<int>();
    get_opt(j, "primary_metric_value", v.primary_metric_value);
    v.status = execution_status_from_string(j.value("status", "unknown"));
    v.plan_excerpt = j.value("plan_excerpt", "");
    v.execution_excerpt = j.value("execution_excerpt", "");
    v.feedback_excerpt = j.value("feedback_excerpt", "");
}

void to_json(json& j, const HistorySummary& v)
{
    j = json::object();
    put_opt(j, "best_metric_value", v.best_metric_value);
    put_opt(j, "best_round_idx", v.best_round_idx);
    j["no_improve_rounds"] = v.no_improve_rounds;
    j["previous_rounds"] = v.previous_rounds;
}

void from_json(const json& j, HistorySummary& v)
{
    get_opt(j, "best_metric_value", v.best_metric_value);
    get_opt(j, "best_round_idx", v.best_round_idx);
    v.no_improve_rounds = j.value("no_improve_rounds", 0);
    v.previous_rounds = j.value("previous_rounds", std::vector<PreviousRound> {});
}

void to_json(json& j, const MetaDecision& v)
{
    j = json { { "action", v.action == MetaAction::Stop ? "stop" : "continue" },
               { "next_start", to_string(v.next_start) },
               { "stop_reason", v.stop_reason },
               { "decision_reason", v.decision_reason },
               { "next_start_reason", v.next_start_reason } };
}

void from_json(const json& j, MetaDecision& v)
{
    auto action = j.at("action").get<std::string>();
    if (action == "stop")
        v.action = MetaAction::Stop;
    else if (action == "continue")
        v.action = MetaAction::Continue;
    else
        throw DecisionParseError("unknown action: " + action);
    v.next_start = stage_from_string(j.value("next_start", "planning")).value_or(Stage::Planning);
    v.stop_reason = j.value("stop_reason", "");
    v.decision_reason = j.value("decision_reason", "");
    v.next_start_reason = j.value("next_start_reason", "");
}

} // namespace medloop
