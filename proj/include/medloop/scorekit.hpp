// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

namespace medloop::score
{

enum class MetricKind
{
    AccuracyLike,
    LossLike,
};

struct TaskOutcome
{
    bool model_ok = false;
    bool uncertainty_ok = false;
    std::optional<double> perf_value;
    MetricKind perf_kind = MetricKind::AccuracyLike;
    std::optional<double> unc_value;
    MetricKind unc_kind = MetricKind::LossLike;
};

struct ScoreCard
{
    double sr = 0;
    double perf_norm = 0;
    double unc_norm = 0;
    double nps = 0;
    double cs = 0;
};

struct Aggregate
{
    double avg_sr = 0;
    double avg_nps = 0;
    double avg_cs = 0;
    double avg_perf = 0;
    double avg_unc = 0;
};

struct ProbPrediction
{
    std::vector<double> probs;
    std::size_t true_class = 0;
};

struct IntervalPrediction
{
    double lower = 0;
    double upper = 0;
    double target = 0;
    double nominal_level = 0.95;
};

/// Accuracy-like values pass through; loss-like s maps to 0.1 / (0.1 + s).
/// Throws DomainError for a negative loss or an accuracy outside [0, 1].
[[nodiscard]] auto normalize(double value, MetricKind kind) -> double;

[[nodiscard]] auto success_rate(bool model_ok, bool uncertainty_ok) -> double;

/// Throws DomainError when a value is present without its success flag.
[[nodiscard]] auto score(const TaskOutcome& outcome) -> ScoreCard;

/// Unweighted means. Throws EmptyInput.
[[nodiscard]] auto aggregate(const std::vector<ScoreCard>& cards) -> Aggregate;

/// Equal-width bins over (0, 1] on the top-class probability. Throws EmptyInput.
[[nodiscard]] auto ece(const std::vector<ProbPrediction>& preds, std::size_t n_bins = 10) -> double;

/// Mean over samples of the squared distance to the one-hot target. Throws EmptyInput.
[[nodiscard]] auto brier(const std::vector<ProbPrediction>& preds) -> double;

/// Mean of -log(max(p_true, floor)). Throws EmptyInput.
[[nodiscard]] auto nll(const std::vector<ProbPrediction>& preds, double floor = 1e-15) -> double;

/// |coverage - nominal|. Throws EmptyInput, or MixedNominal when nominal levels differ.
[[nodiscard]] auto delta_pcip(const std::vector<IntervalPrediction>& preds) -> double;

} // namespace medloop::score
