#include "chronoscope/plot.hpp"

#include "chronoscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace chronoscope {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

struct Frame {
    double left = 64, right = 16, top = 32, bottom = 44;
};

std::string header(const ChartOptions& o) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(o.width) + "\" height=\"" +
                    std::to_string(o.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!o.title.empty()) {
        s += "<text x=\"" + std::to_string(o.width / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" +
             escape(o.title) + "</text>\n";
    }
    return s;
}

std::string axis_labels(const ChartOptions& o, const Frame& f) {
    std::string s;
    s += "<text x=\"" + fmt("%.1f", f.left + (o.width - f.left - f.right) / 2) + "\" y=\"" +
         std::to_string(o.height - 6) + "\" text-anchor=\"middle\">" + escape(o.x_label) + "</text>\n";
    s += "<text transform=\"translate(14," + fmt("%.1f", f.top + (o.height - f.top - f.bottom) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(o.y_label) + "</text>\n";
    return s;
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& o) {
    const Frame f;
    const auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!o.log_y || y > 0.0); };
    const auto ty = [&](double y) { return o.log_y ? std::log10(y) : y; };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size()) {
            fail(ErrorKind::shape, "series '" + s.name + "' has mismatched x and y");
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    }
    if (!(x0 <= x1)) {
        x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    }
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pw = o.width - f.left - f.right;
    const double ph = o.height - f.top - f.bottom;
    const auto px = [&](double x) { return f.left + (x - x0) / (x1 - x0) * pw; };
    const auto py = [&](double y) { return f.top + ph - (ty(y) - y0) / (y1 - y0) * ph; };

    std::string svg = header(o);
    svg += "<rect x=\"" + fmt("%.1f", f.left) + "\" y=\"" + fmt("%.1f", f.top) + "\" width=\"" + fmt("%.1f", pw) +
           "\" height=\"" + fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4.0;
        const double yv = y0 + (y1 - y0) * t / 4.0;
        const double yl = f.top + ph - ph * t / 4.0;
        svg += "<text x=\"" + fmt("%.1f", px(xv)) + "\" y=\"" + fmt("%.1f", f.top + ph + 14) +
               "\" text-anchor=\"middle\">" + fmt("%.3g", xv) + "</text>\n";
        svg += "<text x=\"" + fmt("%.1f", f.left - 4) + "\" y=\"" + fmt("%.1f", yl + 4) + "\" text-anchor=\"end\">" +
               fmt("%.3g", o.log_y ? std::pow(10.0, yv) : yv) + "</text>\n";
        svg += "<line x1=\"" + fmt("%.1f", f.left) + "\" x2=\"" + fmt("%.1f", f.left + pw) + "\" y1=\"" +
               fmt("%.1f", yl) + "\" y2=\"" + fmt("%.1f", yl) + "\" stroke=\"#ddd\"/>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const Series& s = series[k];
        const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
        std::string pts;
        bool have_prev = false;
        double prev_y = 0.0;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            if (o.steps && have_prev) {
                pts += fmt("%.2f", px(s.x[i])) + "," + fmt("%.2f", prev_y) + " ";
            }
            prev_y = py(s.y[i]);
            pts += fmt("%.2f", px(s.x[i])) + "," + fmt("%.2f", prev_y) + " ";
            have_prev = true;
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
               "\"/>\n";
        svg += "<text x=\"" + fmt("%.1f", f.left + 8) + "\" y=\"" + fmt("%.1f", f.top + 14 + 14.0 * k) +
               "\" fill=\"" + color + "\">" + escape(s.name) + "</text>\n";
    }
    svg += axis_labels(o, f);
    svg += "</svg>\n";
    return svg;
}

std::string heatmap_svg(const std::vector<double>& values, std::size_t rows, std::size_t cols, const ChartOptions& o) {
    if (values.size() != rows * cols || rows == 0 || cols == 0) {
        fail(ErrorKind::shape, "heat map values do not match rows x cols");
    }
    const Frame f;
    const double pw = o.width - f.left - f.right;
    const double ph = o.height - f.top - f.bottom;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double span = *hi_it > lo ? *hi_it - lo : 1.0;
    const double cw = pw / static_cast<double>(cols);
    const double ch = ph / static_cast<double>(rows);
    std::string svg = header(o);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const int g = 255 - static_cast<int>(std::lround(255.0 * (values[r * cols + c] - lo) / span));
            char color[16];
            std::snprintf(color, sizeof(color), "#%02x%02x%02x", g, g, g);
            svg += "<rect x=\"" + fmt("%.2f", f.left + cw * c) + "\" y=\"" + fmt("%.2f", f.top + ph - ch * (r + 1)) +
                   "\" width=\"" + fmt("%.2f", cw + 0.05) + "\" height=\"" + fmt("%.2f", ch + 0.05) + "\" fill=\"" +
                   color + "\"/>\n";
        }
    }
    svg += axis_labels(o, f);
    svg += "</svg>\n";
    return svg;
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& columns) {
    if (header.size() != columns.size()) {
        fail(ErrorKind::shape, "csv header and column count differ");
    }
    const std::size_t n = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns) {
        if (c.size() != n) {
            fail(ErrorKind::shape, "csv columns differ in length");
        }
    }
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        out += (i ? "," : "") + header[i];
    }
    out += '\n';
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (c) out += ',';
            out += fmt("%.10g", columns[c][r]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace chronoscope
