// SPDX-License-Identifier: Apache-2.0
#include <medloop/errors.hpp>
#include <medloop/scorekit.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace medloop::score
{

auto normalize(double value, MetricKind kind) -> double
{
    if (!std::isfinite(value))
        throw DomainError(fmt::format("non-finite metric value {}", value));
    if (kind == MetricKind::AccuracyLike)
    {
        if (value < 0.0 || value > 1.0)
            throw DomainError(fmt::format("accuracy-like value {} outside [0, 1]", value));
        return value;
    }
    if (value < 0.0)
        throw DomainError(fmt::format("negative loss-like value {}", value));
    return 0.1 / (0.1 + value);
}

auto success_rate(bool model_ok, bool uncertainty_ok) -> double
{
    return (model_ok ? 0.5 : 0.0) + (uncertainty_ok ? 0.5 : 0.0);
}

auto score(const TaskOutcome& outcome) -> ScoreCard
{
    if (outcome.perf_value && !outcome.model_ok)
        throw DomainError("performance value present for a failed model");
    if (outcome.unc_value && !outcome.uncertainty_ok)
        throw DomainError("uncertainty value present for a failed uncertainty analysis");
    ScoreCard card;
    card.sr = success_rate(outcome.model_ok, outcome.uncertainty_ok);
    card.perf_norm = outcome.perf_value ? normalize(*outcome.perf_value, outcome.perf_kind) : 0.0;
    card.unc_norm = outcome.unc_value ? normalize(*outcome.unc_value, outcome.unc_kind) : 0.0;
    card.nps = 0.5 * card.perf_norm + 0.5 * card.unc_norm;
    card.cs = 0.5 * card.sr + 0.5 * card.nps;
    return card;
}

auto aggregate(const std::vector<ScoreCard>& cards) -> Aggregate
{
    if (cards.empty())
        throw EmptyInput("aggregate of zero score cards");
    Aggregate a;
    for (const auto& c: cards)
    {
        a.avg_sr += c.sr;
        a.avg_nps += c.nps;
        a.avg_cs += c.cs;
        a.avg_perf += c.perf_norm;
        a.avg_unc += c.unc_norm;
    }
    auto n = static_cast<double>(cards.size());
    a.avg_sr /= n;
    a.avg_nps /= n;
    a.avg_cs /= n;
    a.avg_perf /= n;
    a.avg_unc /= n;
    return a;
}

namespace
{
    void check_prediction(const ProbPrediction& p)
    {
        if (p.probs.empty())
            throw DomainError("empty probability vector");
        if (p.true_class >= p.probs.size())
            throw DomainError(fmt::format("true class {} out of range", p.true_class));
    }
} // namespace

auto ece(const std::vector<ProbPrediction>& preds, std::size_t n_bins) -> double
{
    if (preds.empty())
        throw EmptyInput("ece of zero predictions");
    if (n_bins == 0)
        throw DomainError("ece needs at least one bin");

    std::vector<double> conf_sum(n_bins, 0.0);
    std::vector<double> hits(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    auto nb = static_cast<double>(n_bins);
    for (const auto& p: preds)
    {
        check_prediction(p);
        auto top = std::max_element(p.probs.begin(), p.probs.end());
        auto conf = *top;
        auto predicted = static_cast<std::size_t>(top - p.probs.begin());
        // bin b covers (b/n, (b+1)/n]; confidence 0 falls into bin 0
        auto b = conf <= 0.0 ? std::size_t { 0 }
                             : static_cast<std::size_t>(std::ceil(conf * nb)) - 1;
        b = std::min(b, n_bins - 1);
        while (b > 0 && conf <= static_cast<double>(b) / nb)
            --b;
        while (b + 1 < n_bins && conf > static_cast<double>(b + 1) / nb)
            ++b;
        conf_sum[b] += conf;
        hits[b] += predicted == p.true_class ? 1.0 : 0.0;
        ++count[b];
    }
    auto n = static_cast<double>(preds.size());
    double total = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b)
    {
        if (count[b] == 0)
            continue;
        auto c = static_cast<double>(count[b]);
        total += (c / n) * std::abs(hits[b] / c - conf_sum[b] / c);
    }
    return total;
}

auto brier(const std::vector<ProbPrediction>& preds) -> double
{
    if (preds.empty())
        throw EmptyInput("brier of zero predictions");
    double total = 0.0;
    for (const auto& p: preds)
    {
        check_prediction(p);
        double s = 0.0;
        for (std::size_t k = 0; k < p.probs.size(); ++k)
        {
            auto d = p.probs[k] - (k == p.true_class ? 1.0 : 0.0);
            s += d * d;
        }
        total += s;
    }
    return total / static_cast<double>(preds.size());
}

auto nll(const std::vector<ProbPrediction>& preds, double floor) -> double
{
    if (preds.empty())
        throw EmptyInput("nll of zero predictions");
    if (!(floor > 0.0))
        throw DomainError("nll floor must be positive");
    double total = 0.0;
    for (const auto& p: preds)
    {
        check_prediction(p);
        total += -std::log(std::max(p.probs[p.true_class], floor));
    }
    return total / static_cast<double>(preds.size());
}

auto delta_pcip(const std::vector<IntervalPrediction>& preds) -> double
{
    if (preds.empty())
        throw EmptyInput("delta_pcip of zero intervals");
    auto nominal = preds.front().nominal_level;
    if (!(nominal > 0.0 && nominal < 1.0))
        throw DomainError(fmt::format("nominal level {} outside (0, 1)", nominal));
    std::size_t covered = 0;
    for (const auto& p: preds)
    {
        if (p.nominal_level != nominal)
            throw MixedNominal(fmt::format("nominal levels {} and {} mixed", nominal, p.nominal_level));
        if (p.lower > p.upper)
            throw DomainError("interval with lower > upper");
        if (p.lower <= p.target && p.target <= p.upper)
            ++covered;
    }
    auto coverage = static_cast<double>(covered) / static_cast<double>(preds.size());
    return std::abs(coverage - nominal);
}

} // namespace medloop::score
