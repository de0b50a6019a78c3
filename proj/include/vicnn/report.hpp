#pragma once

// CSV and SVG output for effect reports.
//
// effects.csv columns:
//   model,kind,colored,scale,kernel,channel,E,expected,verdict,tau
// channel is R, G, B or Y. E and tau use shortest round-trip decimal form.
// A stimulus that could not be generated gives one row with channel "-",
// an empty E and verdict "rejected".

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vicnn/error.hpp"
#include "vicnn/eval.hpp"

namespace vicnn {

inline constexpr std::string_view csv_header = "model,kind,colored,scale,kernel,channel,E,expected,verdict,tau";

inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw DataError("not a number: '" + std::string(s) + "'");
    return v;
}

struct CsvRow {
    std::string model;
    std::string kind;
    bool colored = false;
    std::size_t scale = 0;
    std::size_t kernel = 0;
    std::string channel;
    std::optional<double> effect;
    int expected = 0;
    std::string verdict;
    double tau = default_tau;
};

inline std::vector<CsvRow> csv_rows(const EffectReport& r) {
    const CsvRow base{r.model, to_string(r.stimulus.kind), r.stimulus.colored, r.stimulus.scale, r.kernel,
                      "-", std::nullopt, 0, "rejected", r.tau};
    if (r.rejection) return {base};
    std::vector<CsvRow> rows;
    for (std::size_t c = 0; c < 4; ++c) {
        CsvRow row = base;
        row.channel = channel_names[c];
        row.effect = r.channels[c].effect;
        row.expected = r.channels[c].expected;
        row.verdict = to_string(r.channels[c].verdict);
        rows.push_back(row);
    }
    return rows;
}

inline std::string to_csv(const std::vector<EffectReport>& reports) {
    std::string out(csv_header);
    out += '\n';
    for (const auto& r : reports)
        for (const auto& row : csv_rows(r)) {
            out += row.model + ',' + row.kind + ',' + (row.colored ? "1" : "0") + ',' + std::to_string(row.scale) +
                   ',' + std::to_string(row.kernel) + ',' + row.channel + ',' +
                   (row.effect ? format_double(*row.effect) : std::string()) + ',' + std::to_string(row.expected) +
                   ',' + row.verdict + ',' + format_double(row.tau) + '\n';
        }
    return out;
}

inline std::vector<CsvRow> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != csv_header) throw DataError("effects CSV has an unexpected header");
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i)
            if (i == line.size() || line[i] == ',') {
                f.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        if (f.size() != 10) throw DataError("effects CSV row has " + std::to_string(f.size()) + " fields");
        CsvRow r;
        r.model = f[0];
        r.kind = f[1];
        r.colored = f[2] == "1";
        r.scale = static_cast<std::size_t>(parse_double(f[3]));
        r.kernel = static_cast<std::size_t>(parse_double(f[4]));
        r.channel = f[5];
        if (!f[6].empty()) r.effect = parse_double(f[6]);
        r.expected = static_cast<int>(parse_double(f[7]));
        r.verdict = f[8];
        r.tau = parse_double(f[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

/// |E| along a sweep axis for one channel (3 = Y); rejected cells are empty.
inline std::vector<std::optional<double>> abs_series(const SweepReport& s, std::size_t channel = 3) {
    std::vector<std::optional<double>> out;
    for (const auto& c : s.cells) {
        if (c.rejection)
            out.emplace_back();
        else
            out.emplace_back(std::abs(c.channels[channel].effect));
    }
    return out;
}

namespace svg {

struct Frame {
    double width = 640, height = 360, left = 60, right = 20, top = 30, bottom = 45;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string num(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

inline std::string open(const Frame& f, const std::string& title) {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << f.left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
    return s.str();
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
    std::ostringstream s;
    s << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << f.left << "\" y=\"" << f.top << "\" width=\""
      << f.width - f.left - f.right << "\" height=\"" << f.height - f.top - f.bottom << "\"/></g>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        s << "<text x=\"" << f.px(xv) << "\" y=\"" << f.height - f.bottom + 14 << "\" text-anchor=\"middle\">"
          << num(xv) << "</text>\n";
        s << "<text x=\"" << f.left - 4 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
          << "</text>\n";
    }
    s << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\"" << f.height - 8
      << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    s << "<text x=\"14\" y=\"" << (f.top + f.height - f.bottom) / 2 << "\" transform=\"rotate(-90 14 "
      << (f.top + f.height - f.bottom) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
    return s.str();
}

inline std::string polyline(const Frame& f, const std::vector<double>& xs, const std::vector<double>& ys,
                            const std::string& color, bool dashed = false) {
    std::ostringstream s;
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
      << (dashed ? " stroke-dasharray=\"4 3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? " " : "") << f.px(xs[i]) << ',' << f.py(ys[i]);
    s << "\"/>\n";
    return s.str();
}

}  // namespace svg

inline const char* channel_color(std::size_t c) {
    static constexpr const char* colors[] = {"#d62728", "#2ca02c", "#1f77b4", "#333333"};
    return colors[c];
}

/// Input (dashed) and output (solid) along one probe. Gray stimuli plot
/// only the Y series; colored ones plot R, G, B. Target spans are shaded.
inline std::string profile_svg(const ProfileRecord& p, bool colored) {
    svg::Frame f;
    f.x0 = static_cast<double>(p.probe.x0);
    f.x1 = static_cast<double>(std::max(p.probe.x1, p.probe.x0 + 2) - 1);
    const std::vector<std::size_t> channels = colored ? std::vector<std::size_t>{0, 1, 2} : std::vector<std::size_t>{3};
    double lo = 0.0, hi = 1.0;
    for (const auto c : channels)
        for (const auto* series : {&p.input[c], &p.output[c]})
            for (const float v : *series) lo = std::min<double>(lo, v), hi = std::max<double>(hi, v);
    f.y0 = lo;
    f.y1 = hi;
    std::string out = svg::open(f, p.stimulus + " row " + std::to_string(p.probe.row));
    for (const auto& [a, b] : p.target_spans)
        out += "<rect x=\"" + svg::num(f.px(static_cast<double>(a) - 0.5)) + "\" y=\"" + svg::num(f.top) +
               "\" width=\"" + svg::num(f.px(static_cast<double>(b) - 0.5) - f.px(static_cast<double>(a) - 0.5)) +
               "\" height=\"" + svg::num(f.height - f.top - f.bottom) + "\" fill=\"#ffd54f\" fill-opacity=\"0.35\"/>\n";
    std::vector<double> xs;
    for (std::size_t x = p.probe.x0; x < p.probe.x1; ++x) xs.push_back(static_cast<double>(x));
    for (const auto c : channels) {
        const std::vector<double> in(p.input[c].begin(), p.input[c].end());
        const std::vector<double> outv(p.output[c].begin(), p.output[c].end());
        out += svg::polyline(f, xs, in, channel_color(c), true);
        out += svg::polyline(f, xs, outv, channel_color(c));
    }
    out += svg::axes(f, "x (px), dashed input, solid output", colored ? "RGB value" : "luminance");
    return out + "</svg>\n";
}

/// |E| per channel against the sweep axis; rejected cells break the line.
inline std::string sweep_svg(const SweepReport& s) {
    svg::Frame f;
    if (s.values.empty()) throw ValidationError("sweep has no grid values");
    f.x0 = static_cast<double>(*std::min_element(s.values.begin(), s.values.end()));
    f.x1 = static_cast<double>(*std::max_element(s.values.begin(), s.values.end()));
    if (f.x1 == f.x0) f.x1 = f.x0 + 1;
    double hi = 0.0;
    for (std::size_t c = 0; c < 4; ++c)
        for (const auto& v : abs_series(s, c))
            if (v) hi = std::max(hi, *v);
    f.y1 = hi > 0 ? hi * 1.1 : 1.0;
    const bool colored = !s.cells.empty() && s.cells[0].stimulus.colored;
    std::string out = svg::open(f, to_string(s.kind) + ": |E| vs " + s.axis);
    for (std::size_t c = colored ? 0 : 3; c < 4; ++c) {
        const auto series = abs_series(s, c);
        std::vector<double> xs, ys;
        auto flush = [&] {
            if (!xs.empty()) out += svg::polyline(f, xs, ys, channel_color(c));
            xs.clear();
            ys.clear();
        };
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (!series[i]) {
                flush();
                continue;
            }
            const double x = static_cast<double>(s.values[i]);
            out += "<circle cx=\"" + svg::num(f.px(x)) + "\" cy=\"" + svg::num(f.py(*series[i])) +
                   "\" r=\"3\" fill=\"" + channel_color(c) + "\"/>\n";
            xs.push_back(x);
            ys.push_back(*series[i]);
        }
        flush();
    }
    out += svg::axes(f, s.axis, "|E|");
    return out + "</svg>\n";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError("cannot write " + path.string());
}

inline std::string sanitize(std::string s) {
    for (auto& ch : s)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    return s;
}

/// Writes effects.csv plus profiles/<model>_<stimulus>_p<k>.svg; returns
/// every path written.
inline std::vector<std::filesystem::path> render_report(const std::vector<EffectReport>& reports,
                                                        const std::filesystem::path& out_dir) {
    std::vector<std::filesystem::path> written{out_dir / "effects.csv"};
    write_text(written[0], to_csv(reports));
    for (const auto& r : reports)
        for (std::size_t k = 0; k < r.profiles.size(); ++k) {
            const auto path = out_dir / "profiles" /
                              (sanitize(r.model) + "_" + sanitize(r.profiles[k].stimulus) + "_p" +
                               std::to_string(k) + ".svg");
            write_text(path, profile_svg(r.profiles[k], r.stimulus.colored));
            written.push_back(path);
        }
    return written;
}

/// Sweep cells go through render_report; the |E| plot and a compact
/// series CSV (axis value, channel, |E|) are added next to them.
inline std::vector<std::filesystem::path> render_sweep(const SweepReport& s, const std::filesystem::path& out_dir) {
    auto written = render_report(s.cells, out_dir);
    const std::string stem = "sweep_" + s.axis + "_" + to_string(s.kind);
    std::string csv = s.axis + ",channel,abs_E\n";
    for (std::size_t c = 0; c < 4; ++c) {
        const auto series = abs_series(s, c);
        for (std::size_t i = 0; i < series.size(); ++i)
            csv += std::to_string(s.values[i]) + ',' + channel_names[c] + ',' +
                   (series[i] ? format_double(*series[i]) : std::string()) + '\n';
    }
    write_text(out_dir / (stem + ".csv"), csv);
    write_text(out_dir / (stem + ".svg"), sweep_svg(s));
    written.push_back(out_dir / (stem + ".csv"));
    written.push_back(out_dir / (stem + ".svg"));
    return written;
}

}  // namespace vicnn
