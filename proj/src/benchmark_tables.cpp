// SPDX-License-Identifier: Apache-2.0
#include <medloop/benchmark_tables.hpp>
#include <medloop/errors.hpp>
#include <medloop/text_util.hpp>

#include <fmt/format.h>

#include <sstream>

namespace medloop::score
{

namespace
{
    auto split_tabs(std::string_view line) -> std::vector<std::string>
    {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (true)
        {
            auto tab = line.find('\t', pos);
            out.emplace_back(text::trim(line.substr(pos, tab - pos)));
            if (tab == std::string_view::npos)
                break;
            pos = tab + 1;
        }
        return out;
    }

    auto data_lines(const std::filesystem::path& path) -> std::vector<std::vector<std::string>>
    {
        auto content = text::read_file(path);
        std::vector<std::vector<std::string>> out;
        std::istringstream in(content);
        std::string line;
        while (std::getline(in, line))
        {
            auto t = text::trim(line);
            if (t.empty() || t.front() == '#')
                continue;
            out.push_back(split_tabs(line));
        }
        if (out.empty())
            throw FilesystemError("no header in " + path.string());
        return out;
    }

    auto parse_cell(const std::string& s, const std::filesystem::path& path) -> std::optional<double>
    {
        if (s == "Fail" || s == "N/A" || s == "-")
            return std::nullopt;
        try
        {
            std::size_t used = 0;
            auto v = std::stod(s, &used);
            if (used != s.size())
                throw std::invalid_argument(s);
            return v;
        }
        catch (const std::exception&)
        {
            throw FilesystemError(fmt::format("bad cell '{}' in {}", s, path.string()));
        }
    }

    auto parse_kind(const std::string& s) -> MetricKind
    {
        if (s == "loss")
            return MetricKind::LossLike;
        if (s == "accuracy")
            return MetricKind::AccuracyLike;
        throw FilesystemError("unknown metric kind " + s);
    }
} // namespace

auto Table::cell(const std::string& method, std::size_t col) const -> std::optional<double>
{
    auto it = rows.find(method);
    if (it == rows.end() || col >= it->second.size())
        return std::nullopt;
    return it->second[col];
}

auto read_table(const std::filesystem::path& path) -> Table
{
    auto lines = data_lines(path);
    Table t;
    t.columns.assign(lines[0].begin() + 1, lines[0].end());
    for (std::size_t i = 1; i < lines.size(); ++i)
    {
        const auto& row = lines[i];
        if (row.size() != t.columns.size() + 1)
            throw FilesystemError(fmt::format("{}: row '{}' has {} cells, expected {}",
                                              path.string(), row[0], row.size() - 1, t.columns.size()));
        std::vector<std::optional<double>> cells;
        for (std::size_t c = 1; c < row.size(); ++c)
            cells.push_back(parse_cell(row[c], path));
        t.methods.push_back(row[0]);
        t.rows[row[0]] = std::move(cells);
    }
    return t;
}

auto read_tasks(const std::filesystem::path& path) -> std::vector<TaskInfo>
{
    auto lines = data_lines(path);
    std::vector<TaskInfo> out;
    for (std::size_t i = 1; i < lines.size(); ++i)
    {
        const auto& r = lines[i];
        if (r.size() != 5)
            throw FilesystemError(fmt::format("{}: task row needs 5 cells", path.string()));
        out.push_back({ r[0], r[1], parse_kind(r[2]), r[3], parse_kind(r[4]) });
    }
    return out;
}

auto load_benchmark(const std::filesystem::path& dir) -> BenchmarkData
{
    BenchmarkData d;
    d.tasks = read_tasks(dir / "tasks.tsv");
    d.performance = read_table(dir / "raw_performance.tsv");
    d.uncertainty = read_table(dir / "raw_uncertainty.tsv");
    d.success_model = read_table(dir / "success_model.tsv");
    d.success_uncertainty = read_table(dir / "success_uncertainty.tsv");
    return d;
}

auto outcomes_for(const BenchmarkData& data, const std::string& method) -> std::vector<TaskOutcome>
{
    std::vector<TaskOutcome> out;
    for (std::size_t i = 0; i < data.tasks.size(); ++i)
    {
        TaskOutcome o;
        o.model_ok = data.success_model.cell(method, i).value_or(0.0) != 0.0;
        o.uncertainty_ok = data.success_uncertainty.cell(method, i).value_or(0.0) != 0.0;
        o.perf_value = data.performance.cell(method, i);
        o.perf_kind = data.tasks[i].perf_kind;
        o.unc_value = data.uncertainty.cell(method, i);
        o.unc_kind = data.tasks[i].unc_kind;
        out.push_back(o);
    }
    return out;
}

auto score_benchmark(const BenchmarkData& data) -> std::vector<MethodScores>
{
    std::vector<MethodScores> out;
    for (const auto& m: data.performance.methods)
    {
        MethodScores s;
        s.method = m;
        for (const auto& o: outcomes_for(data, m))
            s.cards.push_back(score(o));
        s.avg = aggregate(s.cards);
        out.push_back(std::move(s));
    }
    return out;
}

auto render_table(const std::vector<MethodScores>& scores,
                  const std::vector<TaskInfo>& tasks,
                  Column column) -> std::string
{
    auto pick = [column](const ScoreCard& c) {
        switch (column)
        {
            case Column::Sr: return c.sr;
            case Column::Perf: return c.perf_norm;
            case Column::Unc: return c.unc_norm;
            case Column::Nps: return c.nps;
            case Column::Cs: return c.cs;
        }
        return 0.0;
    };
    auto pick_avg = [column](const Aggregate& a) {
        switch (column)
        {
            case Column::Sr: return a.avg_sr;
            case Column::Perf: return a.avg_perf;
            case Column::Unc: return a.avg_unc;
            case Column::Nps: return a.avg_nps;
            case Column::Cs: return a.avg_cs;
        }
        return 0.0;
    };
    std::string out = "method";
    for (const auto& t: tasks)
        out += "\t" + t.task;
    out += "\tAVG\n";
    for (const auto& s: scores)
    {
        out += s.method;
        for (const auto& c: s.cards)
            out += fmt::format("\t{:.3f}", pick(c));
        out += fmt::format("\t{:.3f}\n", pick_avg(s.avg));
    }
    return out;
}

} // namespace medloop::score
