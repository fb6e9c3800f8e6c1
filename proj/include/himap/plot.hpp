// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Self-contained SVG line charts (no external assets) plus a tiny CSV reader.
// The plot area carries data-xmin/xmax/ymin/ymax attributes so generated
// figures remain machine-checkable against their companion CSVs. Axis ranges
// pad the data extrema by 5%.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "himap/util.hpp"

namespace himap {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
    void require_columns(const std::vector<std::string>& names) const {
        std::string missing;
        for (const auto& n : names)
            if (column(n) < 0) missing += missing.empty() ? n : ", " + n;
        if (!missing.empty())
            throw std::invalid_argument("csv: missing required column(s): " + missing);
    }
    double num(std::size_t row, int col) const { return std::stod(rows[row][static_cast<std::size_t>(col)]); }
};

inline CsvTable read_csv(const std::string& path) {
    CsvTable t;
    std::string text = read_text_file(path);
    bool first = true;
    for (const auto& line : split(text, '\n')) {
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    if (first) throw std::invalid_argument("csv: empty file " + path);
    return t;
}

// ---------------------------------------------------------------------------
// Chart model.

struct Series {
    std::string label;
    std::string color = "#1f77b4";
    bool dashed = false;
    bool right_axis = false;
    std::vector<std::pair<double, double>> points;
};

struct Chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::string y2_label;  // right axis, used when any series sets right_axis
    std::vector<Series> series;
};

namespace detail {

struct Range {
    double lo = 0.0, hi = 1.0;
    void widen(double x) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    // 5% margin on each side; degenerate ranges get a unit pad
    Range padded() const {
        double span = hi - lo;
        if (span <= 0.0) return {lo - 0.5, hi + 0.5};
        return {lo - 0.05 * span, hi + 0.05 * span};
    }
};

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

}  // namespace detail

inline std::string render_chart_svg(const Chart& chart) {
    if (chart.series.empty()) throw std::invalid_argument("chart: no series");
    const double width = 760, height = 480;
    const double ml = 64, mr = 72, mt = 42, mb = 52;
    const double pw = width - ml - mr, ph = height - mt - mb;

    bool first_pt = true, first_right = true, first_left = true;
    detail::Range xr, yr, y2r;
    for (const auto& s : chart.series)
        for (const auto& [x, y] : s.points) {
            if (first_pt) {
                xr = {x, x};
                first_pt = false;
            } else
                xr.widen(x);
            if (s.right_axis) {
                if (first_right) {
                    y2r = {y, y};
                    first_right = false;
                } else
                    y2r.widen(y);
            } else {
                if (first_left) {
                    yr = {y, y};
                    first_left = false;
                } else
                    yr.widen(y);
            }
        }

    detail::Range px = xr.padded(), py = yr.padded(), py2 = y2r.padded();
    auto map_x = [&](double x) { return ml + (x - px.lo) / (px.hi - px.lo) * pw; };
    auto map_y = [&](double y) { return mt + ph - (y - py.lo) / (py.hi - py.lo) * ph; };
    auto map_y2 = [&](double y) { return mt + ph - (y - py2.lo) / (py2.hi - py2.lo) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_num(width) +
           "\" height=\"" + format_num(height) + "\" viewBox=\"0 0 " + format_num(width) + " " +
           format_num(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + format_num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" +
           detail::svg_escape(chart.title) + "</text>\n";

    svg += "<g id=\"plot-area\" data-xmin=\"" + format_num(px.lo) + "\" data-xmax=\"" +
           format_num(px.hi) + "\" data-ymin=\"" + format_num(py.lo) + "\" data-ymax=\"" +
           format_num(py.hi) + "\">\n";
    svg += "<rect x=\"" + format_num(ml) + "\" y=\"" + format_num(mt) + "\" width=\"" +
           format_num(pw) + "\" height=\"" + format_num(ph) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";

    // ticks
    for (int i = 0; i <= 5; ++i) {
        double fx = px.lo + (px.hi - px.lo) * i / 5.0;
        double sx = map_x(fx);
        svg += "<line x1=\"" + format_num(sx) + "\" y1=\"" + format_num(mt + ph) + "\" x2=\"" +
               format_num(sx) + "\" y2=\"" + format_num(mt + ph + 5) + "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + format_num(sx) + "\" y=\"" + format_num(mt + ph + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_num(fx) + "</text>\n";
        double fy = py.lo + (py.hi - py.lo) * i / 5.0;
        double sy = map_y(fy);
        svg += "<line x1=\"" + format_num(ml - 5) + "\" y1=\"" + format_num(sy) + "\" x2=\"" +
               format_num(ml) + "\" y2=\"" + format_num(sy) + "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + format_num(ml - 8) + "\" y=\"" + format_num(sy + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_num(fy) + "</text>\n";
        if (!first_right) {
            double fy2 = py2.lo + (py2.hi - py2.lo) * i / 5.0;
            double sy2 = map_y2(fy2);
            svg += "<text x=\"" + format_num(ml + pw + 8) + "\" y=\"" + format_num(sy2 + 4) +
                   "\" text-anchor=\"start\" font-family=\"sans-serif\" font-size=\"11\">" +
                   format_num(fy2) + "</text>\n";
        }
    }
    svg += "<text x=\"" + format_num(ml + pw / 2) + "\" y=\"" + format_num(height - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           detail::svg_escape(chart.x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + format_num(mt + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 " +
           format_num(mt + ph / 2) + ")\">" + detail::svg_escape(chart.y_label) + "</text>\n";
    if (!first_right && !chart.y2_label.empty())
        svg += "<text x=\"" + format_num(width - 14) + "\" y=\"" + format_num(mt + ph / 2) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
               "transform=\"rotate(90 " +
               format_num(width - 14) + " " + format_num(mt + ph / 2) + ")\">" +
               detail::svg_escape(chart.y2_label) + "</text>\n";

    // series
    for (const auto& s : chart.series) {
        if (s.points.empty()) continue;
        std::string pts;
        for (const auto& [x, y] : s.points)
            pts += format_num(map_x(x)) + "," +
                   format_num(s.right_axis ? map_y2(y) : map_y(y)) + " ";
        svg += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\"";
        if (s.dashed) svg += " stroke-dasharray=\"7,5\"";
        svg += " points=\"" + pts + "\"/>\n";
        for (const auto& [x, y] : s.points)
            svg += "<circle cx=\"" + format_num(map_x(x)) + "\" cy=\"" +
                   format_num(s.right_axis ? map_y2(y) : map_y(y)) + "\" r=\"2.5\" fill=\"" +
                   s.color + "\"/>\n";
    }
    svg += "</g>\n";

    // legend
    double ly = mt + 10;
    for (const auto& s : chart.series) {
        svg += "<line x1=\"" + format_num(ml + 12) + "\" y1=\"" + format_num(ly) + "\" x2=\"" +
               format_num(ml + 44) + "\" y2=\"" + format_num(ly) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"2\"" + (s.dashed ? " stroke-dasharray=\"7,5\"" : "") + "/>\n";
        svg += "<text x=\"" + format_num(ml + 50) + "\" y=\"" + format_num(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + detail::svg_escape(s.label) +
               "</text>\n";
        ly += 16;
    }
    svg += "</svg>\n";
    return svg;
}

// ---------------------------------------------------------------------------
// Figure builders. Each writes the SVG plus a numeric companion CSV so the
// plot is never the only record.

// Tracking-availability figure: baseline error curves vs tracked steps,
// horizontal dashed lines for the tracking-free model, and the mean distance
// traveled on the right axis.
inline void plot_sweep_csv(const std::string& sweep_csv, const std::string& out_svg) {
    CsvTable t = read_csv(sweep_csv);
    t.require_columns(
        {"n_tracked_steps", "model", "minADE_6", "minFDE_6", "MR_6", "mean_dist_traveled"});
    int c_n = t.column("n_tracked_steps"), c_m = t.column("model"), c_ade = t.column("minADE_6"),
        c_fde = t.column("minFDE_6"), c_tr = t.column("mean_dist_traveled");

    Series b_ade{"baseline minADE_6", "#1f77b4", false, false, {}};
    Series b_fde{"baseline minFDE_6", "#d62728", false, false, {}};
    Series h_ade{"himap minADE_6 (no IDs)", "#1f77b4", true, false, {}};
    Series h_fde{"himap minFDE_6 (no IDs)", "#d62728", true, false, {}};
    Series travel{"mean distance traveled", "#2ca02c", false, true, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        double n = t.num(r, c_n);
        const std::string& model = t.rows[r][static_cast<std::size_t>(c_m)];
        if (model == "baseline") {
            b_ade.points.emplace_back(n, t.num(r, c_ade));
            b_fde.points.emplace_back(n, t.num(r, c_fde));
            travel.points.emplace_back(n, t.num(r, c_tr));
        } else if (model == "himap") {
            h_ade.points.emplace_back(n, t.num(r, c_ade));
            h_fde.points.emplace_back(n, t.num(r, c_fde));
        }
    }
    Chart chart;
    chart.title = "error vs available tracking steps";
    chart.x_label = "tracked history steps n";
    chart.y_label = "error (m)";
    chart.y2_label = "distance traveled (m)";
    chart.series = {b_ade, b_fde, h_ade, h_fde, travel};
    write_text_file(out_svg, render_chart_svg(chart));

    // numeric companion
    std::string companion = out_svg;
    std::size_t dot = companion.rfind('.');
    companion = (dot == std::string::npos ? companion : companion.substr(0, dot)) + ".csv";
    std::string out = "series,x,y\n";
    for (const Series* s : {&b_ade, &b_fde, &h_ade, &h_fde, &travel})
        for (const auto& [x, y] : s->points)
            out += s->label + "," + format_num(x) + "," + format_num(y) + "\n";
    write_text_file(companion, out);
}

// Training curves: loss components over steps.
inline void plot_train_csv(const std::string& log_csv, const std::string& out_svg) {
    CsvTable t = read_csv(log_csv);
    t.require_columns({"step", "loss_total", "loss_reg", "loss_cls", "loss_his"});
    int c_s = t.column("step");
    Series total{"total", "#1f77b4", false, false, {}};
    Series reg{"regression", "#d62728", false, false, {}};
    Series cls{"classification", "#9467bd", false, false, {}};
    Series his{"history", "#2ca02c", false, false, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        double s = t.num(r, c_s);
        total.points.emplace_back(s, t.num(r, t.column("loss_total")));
        reg.points.emplace_back(s, t.num(r, t.column("loss_reg")));
        cls.points.emplace_back(s, t.num(r, t.column("loss_cls")));
        his.points.emplace_back(s, t.num(r, t.column("loss_his")));
    }
    Chart chart;
    chart.title = "training losses";
    chart.x_label = "step";
    chart.y_label = "loss";
    chart.series = {total, reg, cls, his};
    write_text_file(out_svg, render_chart_svg(chart));

    std::string companion = out_svg;
    std::size_t dot = companion.rfind('.');
    companion = (dot == std::string::npos ? companion : companion.substr(0, dot)) + ".csv";
    std::string out = "series,x,y\n";
    for (const Series* s : {&total, &reg, &cls, &his})
        for (const auto& [x, y] : s->points)
            out += s->label + "," + format_num(x) + "," + format_num(y) + "\n";
    write_text_file(companion, out);
}

}  // namespace himap
