#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "foreauth/common/error.hpp"
#include "foreauth/data/csv_io.hpp"
#include "foreauth/eval/bench.hpp"
#include "foreauth/eval/metrics.hpp"
#include "foreauth/eval/sweep.hpp"

namespace foreauth::eval {

enum class GridMetric { eer, mse };

inline const char* metric_name(GridMetric metric) { return metric == GridMetric::eer ? "eer" : "mse"; }

inline const char* mode_name(auth::TrainMode mode) {
    return mode == auth::TrainMode::with_forecast ? "with_forecast" : "no_forecast";
}

namespace detail {

inline bool cell_has_value(const SweepCellResult& cell, GridMetric metric) {
    return cell.present && (metric == GridMetric::eer || cell.has_mse);
}

inline double cell_value(const SweepCellResult& cell, GridMetric metric) {
    return metric == GridMetric::eer ? cell.mean_eer : cell.mean_mse;
}

} // namespace detail

/// Writes one grid table as CSV: a metadata comment line, a header row of
/// horizons, then one row per window size. Absent cells print "--". Values
/// use the shortest round-trip decimal form, so parse_grid_csv recovers them
/// bit for bit.
inline void write_grid_csv(const std::filesystem::path& path, const SweepGrid& grid, GridMetric metric) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write grid table " + path.string());
    out << "# variant=" << auth::variant_name(grid.variant) << " mode=" << mode_name(grid.mode)
        << " metric=" << metric_name(metric) << " master_seed=" << grid.master_seed << "\n";
    out << "window_size";
    for (int h : grid.definition.horizons) out << ",h" << h;
    out << "\n";
    for (int ws : grid.definition.window_sizes) {
        out << ws;
        for (int h : grid.definition.horizons) {
            const SweepCellResult* cell = grid.find(ws, h);
            if (cell != nullptr && detail::cell_has_value(*cell, metric))
                out << ',' << data::detail::format_number(detail::cell_value(*cell, metric));
            else
                out << ",--";
        }
        out << "\n";
    }
    if (!out) throw DataError("write failed for grid table " + path.string());
}

struct ParsedGridTable {
    SweepGrid grid;
    GridMetric metric = GridMetric::eer;
};

/// Reads a table written by write_grid_csv back into a grid. Only the fields
/// a table carries are recovered: definition, presence, and the per-cell
/// means for the table's metric.
inline ParsedGridTable parse_grid_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open grid table " + path.string());
    const std::string name = path.string();
    ParsedGridTable parsed;

    std::string line;
    if (!std::getline(in, line) || !line.starts_with("# "))
        throw DataError(name + ": missing metadata comment line");
    {
        std::istringstream meta(line.substr(2));
        std::string pair;
        while (meta >> pair) {
            const auto eq = pair.find('=');
            if (eq == std::string::npos) throw DataError(name + ": malformed metadata entry '" + pair + "'");
            const std::string key = pair.substr(0, eq), value = pair.substr(eq + 1);
            if (key == "variant") parsed.grid.variant = auth::parse_variant(value);
            else if (key == "mode") {
                if (value != "no_forecast" && value != "with_forecast")
                    throw DataError(name + ": unknown mode '" + value + "'");
                parsed.grid.mode =
                    value == "with_forecast" ? auth::TrainMode::with_forecast : auth::TrainMode::no_forecast;
            } else if (key == "metric") {
                if (value != "eer" && value != "mse") throw DataError(name + ": unknown metric '" + value + "'");
                parsed.metric = value == "eer" ? GridMetric::eer : GridMetric::mse;
            } else if (key == "master_seed") {
                parsed.grid.master_seed = std::stoull(value);
            } else {
                throw DataError(name + ": unknown metadata key '" + key + "'");
            }
        }
    }

    if (!std::getline(in, line)) throw DataError(name + ": missing header row");
    const auto header = data::detail::split_line(line);
    if (header.empty() || header[0] != "window_size")
        throw DataError(name + ": header must start with window_size");
    for (std::size_t i = 1; i < header.size(); ++i) {
        const auto cell = header[i];
        if (cell.empty() || cell[0] != 'h') throw DataError(name + ": horizon column '" + std::string(cell) + "'");
        parsed.grid.definition.horizons.push_back(
            static_cast<int>(data::detail::parse_number(cell.substr(1), name, 2, "horizon")));
    }
    if (parsed.grid.definition.horizons.empty()) throw DataError(name + ": no horizon columns");

    int row = 2;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = data::detail::split_line(line);
        if (cells.size() != header.size())
            throw DataError(name + ": row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                            " columns, got " + std::to_string(cells.size()));
        const int ws = static_cast<int>(data::detail::parse_number(cells[0], name, row, "window_size"));
        parsed.grid.definition.window_sizes.push_back(ws);
        for (std::size_t i = 1; i < cells.size(); ++i) {
            SweepCellResult cell;
            cell.window_size = ws;
            cell.horizon = parsed.grid.definition.horizons[i - 1];
            if (cells[i] != "--") {
                cell.present = true;
                const double v = data::detail::parse_number(cells[i], name, row, "value");
                if (parsed.metric == GridMetric::eer) {
                    cell.mean_eer = v;
                } else {
                    cell.has_mse = true;
                    cell.mean_mse = v;
                }
            }
            parsed.grid.cells.push_back(std::move(cell));
        }
    }
    if (parsed.grid.definition.window_sizes.empty()) throw DataError(name + ": no data rows");
    return parsed;
}

/// True when two grids agree on layout and carry bit-identical values for
/// the given metric wherever a value exists.
inline bool same_table(const SweepGrid& a, const SweepGrid& b, GridMetric metric) {
    if (a.definition != b.definition || a.variant != b.variant || a.mode != b.mode || a.master_seed != b.master_seed)
        return false;
    for (int ws : a.definition.window_sizes)
        for (int h : a.definition.horizons) {
            const SweepCellResult* ca = a.find(ws, h);
            const SweepCellResult* cb = b.find(ws, h);
            if (ca == nullptr || cb == nullptr) return false;
            const bool va = detail::cell_has_value(*ca, metric), vb = detail::cell_has_value(*cb, metric);
            if (va != vb) return false;
            if (va && detail::cell_value(*ca, metric) != detail::cell_value(*cb, metric)) return false;
        }
    return true;
}

/// Renders a grid as an aligned, human-readable table.
inline std::string grid_text(const SweepGrid& grid, GridMetric metric, const std::string& title) {
    auto fmt = [&](const SweepCellResult* cell) -> std::string {
        if (cell == nullptr || !detail::cell_has_value(*cell, metric)) return "--";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", detail::cell_value(*cell, metric));
        return buf;
    };
    std::vector<std::string> header{"window"};
    for (int h : grid.definition.horizons) header.push_back("h" + std::to_string(h));
    std::vector<std::vector<std::string>> rows;
    for (int ws : grid.definition.window_sizes) {
        std::vector<std::string> r{std::to_string(ws)};
        for (int h : grid.definition.horizons) r.push_back(fmt(grid.find(ws, h)));
        rows.push_back(std::move(r));
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream out;
    out << title << "\n";
    auto emit_row = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c)
            out << (c == 0 ? "" : "  ") << std::setw(static_cast<int>(width[c])) << r[c];
        out << "\n";
    };
    emit_row(header);
    for (const auto& r : rows) emit_row(r);
    return out.str();
}

/// Per-window-size comparison of the no-forecast error rate with the best
/// forecast-augmented cell at the same window size.
struct ReductionRow {
    int window_size = 0;
    double no_forecast_eer = 0.0;
    double best_forecast_eer = 0.0;
    int best_horizon = 0;
    double reduction_pct = 0.0;
};

struct ReductionSummary {
    std::vector<ReductionRow> rows;
    double max_reduction_pct = 0.0;
    int max_row_window = 0;
    /// Mean of each window size's best-cell reduction.
    double mean_over_best_rows = 0.0;
    /// Mean reduction over every populated forecast cell, each compared
    /// against the no-forecast baseline at its window size.
    double mean_over_all_cells = 0.0;
    int all_cell_count = 0;
};

/// Only window sizes with a populated cell in both grids and a strictly
/// positive baseline error enter the summary; a zero baseline has no
/// well-defined percentage reduction.
inline ReductionSummary build_reduction_summary(const SweepGrid& no_forecast, const SweepGrid& with_forecast) {
    ReductionSummary summary;
    double all_total = 0.0;
    for (int ws : with_forecast.definition.window_sizes) {
        const SweepCellResult* base = no_forecast.find(ws, 0);
        if (base == nullptr || !base->present || base->mean_eer <= 0.0) continue;
        ReductionRow row;
        row.window_size = ws;
        row.no_forecast_eer = base->mean_eer;
        bool any = false;
        for (int h : with_forecast.definition.horizons) {
            const SweepCellResult* cell = with_forecast.find(ws, h);
            if (cell == nullptr || !cell->present) continue;
            all_total += reduction_percentage(base->mean_eer, cell->mean_eer);
            ++summary.all_cell_count;
            if (!any || cell->mean_eer < row.best_forecast_eer) {
                row.best_forecast_eer = cell->mean_eer;
                row.best_horizon = h;
                any = true;
            }
        }
        if (!any) continue;
        row.reduction_pct = reduction_percentage(row.no_forecast_eer, row.best_forecast_eer);
        summary.rows.push_back(row);
    }
    if (summary.rows.empty())
        throw EvalError(
            "reduction summary: no window size has a populated cell in both grids "
            "with a nonzero no-forecast baseline");
    summary.max_reduction_pct = summary.rows.front().reduction_pct;
    summary.max_row_window = summary.rows.front().window_size;
    double best_total = 0.0;
    for (const auto& row : summary.rows) {
        best_total += row.reduction_pct;
        if (row.reduction_pct > summary.max_reduction_pct) {
            summary.max_reduction_pct = row.reduction_pct;
            summary.max_row_window = row.window_size;
        }
    }
    summary.mean_over_best_rows = best_total / static_cast<double>(summary.rows.size());
    summary.mean_over_all_cells = all_total / static_cast<double>(summary.all_cell_count);
    return summary;
}

/// Overlap-study series as CSV: one (overlap, mean MSE) point per row.
inline void write_overlap_csv(const std::filesystem::path& path, const OverlapSeries& series) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write overlap series " + path.string());
    out << "overlap,mean_mse\n";
    for (const auto& p : series.points) out << p.overlap << ',' << data::detail::format_number(p.mean_mse) << "\n";
    if (!out) throw DataError("write failed for overlap series " + path.string());
}

struct ReportInputs {
    const SweepGrid* no_forecast = nullptr;
    const SweepGrid* with_forecast = nullptr;
    std::vector<const OverlapSeries*> overlaps;
    const LatencyStats* timing = nullptr;
};

namespace detail {

inline nlohmann::json grid_json(const SweepGrid& grid) {
    nlohmann::json j;
    j["variant"] = auth::variant_name(grid.variant);
    j["mode"] = mode_name(grid.mode);
    j["master_seed"] = grid.master_seed;
    j["window_sizes"] = grid.definition.window_sizes;
    j["horizons"] = grid.definition.horizons;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : grid.cells) {
        nlohmann::json c;
        c["window_size"] = cell.window_size;
        c["horizon"] = cell.horizon;
        c["present"] = cell.present;
        if (cell.present) {
            c["mean_eer"] = cell.mean_eer;
            c["per_user_eer"] = cell.per_user_eer;
            if (cell.has_mse) {
                c["mean_mse"] = cell.mean_mse;
                c["per_user_mse"] = cell.per_user_mse;
            }
        }
        cells.push_back(std::move(c));
    }
    j["cells"] = std::move(cells);
    return j;
}

} // namespace detail

/// Writes every report artifact available from the given inputs into dir:
/// per-table CSVs, overlap-series CSVs, an aligned-text report, and a
/// machine-readable summary. Returns the paths written.
inline std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir, const ReportInputs& inputs) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<fs::path> written;
    std::ostringstream text;
    nlohmann::json summary;
    summary["tool"] = "foreauth";

    if (inputs.no_forecast != nullptr) {
        const fs::path p = dir / "table_no_forecast_eer.csv";
        write_grid_csv(p, *inputs.no_forecast, GridMetric::eer);
        written.push_back(p);
        text << grid_text(*inputs.no_forecast, GridMetric::eer, "== Mean test EER without forecasting ==") << "\n";
        summary["no_forecast"] = detail::grid_json(*inputs.no_forecast);
    }
    if (inputs.with_forecast != nullptr) {
        const fs::path pe = dir / "table_forecast_eer.csv";
        write_grid_csv(pe, *inputs.with_forecast, GridMetric::eer);
        written.push_back(pe);
        const fs::path pm = dir / "table_forecast_mse.csv";
        write_grid_csv(pm, *inputs.with_forecast, GridMetric::mse);
        written.push_back(pm);
        text << grid_text(*inputs.with_forecast, GridMetric::eer, "== Mean test EER with forecasting ==") << "\n";
        text << grid_text(*inputs.with_forecast, GridMetric::mse, "== Mean forecaster position MSE ==") << "\n";
        summary["with_forecast"] = detail::grid_json(*inputs.with_forecast);
    }

    if (inputs.no_forecast != nullptr && inputs.with_forecast != nullptr) {
        const ReductionSummary reduction = build_reduction_summary(*inputs.no_forecast, *inputs.with_forecast);
        text << "== EER reduction from forecasting ==\n";
        text << "window  no_forecast  best_forecast  best_horizon  reduction_%\n";
        char buf[128];
        for (const auto& row : reduction.rows) {
            std::snprintf(buf, sizeof(buf), "%6d  %11.4f  %13.4f  %12d  %11.2f\n", row.window_size,
                          row.no_forecast_eer, row.best_forecast_eer, row.best_horizon, row.reduction_pct);
            text << buf;
        }
        std::snprintf(buf, sizeof(buf), "max reduction: %.2f%% at window size %d\n", reduction.max_reduction_pct,
                      reduction.max_row_window);
        text << buf;
        // Two defensible averages exist; both are reported with labels so a
        // reader can tell which convention a downstream number used.
        std::snprintf(buf, sizeof(buf), "mean reduction over per-window best cells: %.2f%%\n",
                      reduction.mean_over_best_rows);
        text << buf;
        std::snprintf(buf, sizeof(buf), "mean reduction over all forecast cells:    %.2f%% (%d cells)\n",
                      reduction.mean_over_all_cells, reduction.all_cell_count);
        text << buf << "\n";
        nlohmann::json jr;
        jr["max_reduction_pct"] = reduction.max_reduction_pct;
        jr["max_row_window"] = reduction.max_row_window;
        jr["mean_over_best_rows"] = reduction.mean_over_best_rows;
        jr["mean_over_all_cells"] = reduction.mean_over_all_cells;
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& row : reduction.rows)
            rows.push_back({{"window_size", row.window_size},
                            {"no_forecast_eer", row.no_forecast_eer},
                            {"best_forecast_eer", row.best_forecast_eer},
                            {"best_horizon", row.best_horizon},
                            {"reduction_pct", row.reduction_pct}});
        jr["rows"] = std::move(rows);
        summary["reduction"] = std::move(jr);
    }

    if (!inputs.overlaps.empty()) {
        nlohmann::json jseries = nlohmann::json::array();
        for (const OverlapSeries* series : inputs.overlaps) {
            const fs::path p = dir / ("overlap_ws" + std::to_string(series->l_window) + "_h" +
                                      std::to_string(series->l_forecasting) + ".csv");
            write_overlap_csv(p, *series);
            written.push_back(p);
            char buf[128];
            std::snprintf(buf, sizeof(buf), "== Overlap study (window %d, horizon %d) ==\n", series->l_window,
                          series->l_forecasting);
            text << buf << "overlap  mean_mse\n";
            for (const auto& point : series->points) {
                std::snprintf(buf, sizeof(buf), "%7d  %.6f\n", point.overlap, point.mean_mse);
                text << buf;
            }
            std::snprintf(buf, sizeof(buf), "spread (max - min): %.6f\n\n", series->spread());
            text << buf;
            nlohmann::json js;
            js["l_window"] = series->l_window;
            js["l_forecasting"] = series->l_forecasting;
            js["spread"] = series->spread();
            nlohmann::json points = nlohmann::json::array();
            for (const auto& point : series->points)
                points.push_back(
                    {{"overlap", point.overlap}, {"mean_mse", point.mean_mse}, {"per_user_mse", point.per_user_mse}});
            js["points"] = std::move(points);
            jseries.push_back(std::move(js));
        }
        summary["overlap"] = std::move(jseries);
    }

    if (inputs.timing != nullptr) {
        const LatencyStats& t = *inputs.timing;
        char buf[160];
        text << "== Inference latency ==\n";
        std::snprintf(buf, sizeof(buf),
                      "repetitions %d\nmedian  %.3f ms\np95     %.3f ms\nmin     %.3f ms\nmax     %.3f ms\n"
                      "sample spacing budget %.3f ms\nreal-time ceiling 50 ms: %s\n\n",
                      t.repetitions, t.median_ms, t.p95_ms, t.min_ms, t.max_ms, t.budget_ms,
                      t.within(50.0) ? "within" : "exceeded");
        text << buf;
        summary["timing"] = {{"repetitions", t.repetitions}, {"median_ms", t.median_ms}, {"p95_ms", t.p95_ms},
                             {"min_ms", t.min_ms},           {"max_ms", t.max_ms},       {"mean_ms", t.mean_ms},
                             {"budget_ms", t.budget_ms}};
    }

    {
        const fs::path p = dir / "report.txt";
        std::ofstream out(p, std::ios::trunc);
        if (!out) throw DataError("cannot write report " + p.string());
        out << text.str();
        written.push_back(p);
    }
    {
        const fs::path p = dir / "summary.json";
        std::ofstream out(p, std::ios::trunc);
        if (!out) throw DataError("cannot write summary " + p.string());
        out << summary.dump(2) << "\n";
        written.push_back(p);
    }
    return written;
}

} // namespace foreauth::eval
