#include "svg_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "carbonfl/errors.hpp"

namespace carbonfl::svg {

namespace {

constexpr int kWidth = 760;
constexpr int kHeight = 460;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 150;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(lo < hi)) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double margin = 0.05 * (hi - lo);
        lo -= margin;
        hi += margin;
    }
    double frac(double v) const { return (v - lo) / (hi - lo); }
};

std::string color_ramp(double t) {
    // Blue (low) through white to red (high).
    t = std::clamp(t, 0.0, 1.0);
    int r, g, b;
    if (t < 0.5) {
        const double u = t / 0.5;
        r = static_cast<int>(49 + u * (255 - 49));
        g = static_cast<int>(104 + u * (255 - 104));
        b = static_cast<int>(180 + u * (255 - 180));
    } else {
        const double u = (t - 0.5) / 0.5;
        r = 255;
        g = static_cast<int>(255 - u * (255 - 60));
        b = static_cast<int>(255 - u * (255 - 50));
    }
    char buf[10];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series) {
    Range xr, yr;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xr.add(s.x[i]);
            yr.add(s.y[i]);
        }
    if (series.empty() || !std::isfinite(xr.lo)) {
        xr = {0, 1};
        yr = {0, 1};
    }
    xr.pad();
    yr.pad();

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    const auto px = [&](double v) { return kMarginLeft + xr.frac(v) * plot_w; };
    const auto py = [&](double v) { return kMarginTop + (1.0 - yr.frac(v)) * plot_h; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
        << title << "</text>\n";
    out << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";

    for (int tick = 0; tick <= 4; ++tick) {
        const double fx = xr.lo + tick / 4.0 * (xr.hi - xr.lo);
        const double fy = yr.lo + tick / 4.0 * (yr.hi - yr.lo);
        out << "<text x=\"" << px(fx) << "\" y=\"" << kHeight - kMarginBottom + 18
            << "\" text-anchor=\"middle\">" << num(fx) << "</text>\n";
        out << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\">" << num(fy) << "</text>\n";
        out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << py(fy) << "\" x2=\""
            << kWidth - kMarginRight << "\" y2=\"" << py(fy)
            << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    }
    out << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"18\" y=\"" << kMarginTop + plot_h / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << kMarginTop + plot_h / 2
        << ")\">" << y_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % 10];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        out << "\"/>\n";
        const double ly = kMarginTop + 14.0 * si;
        out << "<line x1=\"" << kWidth - kMarginRight + 8 << "\" y1=\"" << ly + 4 << "\" x2=\""
            << kWidth - kMarginRight + 28 << "\" y2=\"" << ly + 4 << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << kWidth - kMarginRight + 32 << "\" y=\"" << ly + 8 << "\">"
            << s.label << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::string heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels,
                    const std::vector<std::vector<double>>& values) {
    const int rows = static_cast<int>(values.size());
    const int cols = rows > 0 ? static_cast<int>(values[0].size()) : 0;
    Range vr;
    for (const auto& row : values)
        for (const double v : row) vr.add(v);
    if (!(vr.lo < vr.hi)) vr.hi = vr.lo + 1.0;

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    const double cw = plot_w / std::max(1, cols);
    const double ch = plot_h / std::max(1, rows);

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
        << title << "</text>\n";
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out << "<rect x=\"" << kMarginLeft + c * cw << "\" y=\"" << kMarginTop + r * ch
                << "\" width=\"" << cw + 0.5 << "\" height=\"" << ch + 0.5 << "\" fill=\""
                << color_ramp(vr.frac(values[r][c])) << "\"/>\n";
        }
        out << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << kMarginTop + r * ch + ch / 2 + 4
            << "\" text-anchor=\"end\">" << (r < static_cast<int>(row_labels.size())
                                                 ? row_labels[r]
                                                 : std::to_string(r))
            << "</text>\n";
    }
    const int col_step = std::max(1, cols / 8);
    for (int c = 0; c < cols; c += col_step)
        out << "<text x=\"" << kMarginLeft + c * cw + cw / 2 << "\" y=\""
            << kHeight - kMarginBottom + 16 << "\" text-anchor=\"middle\">"
            << (c < static_cast<int>(col_labels.size()) ? col_labels[c] : std::to_string(c))
            << "</text>\n";
    // Color scale.
    for (int i = 0; i <= 40; ++i) {
        out << "<rect x=\"" << kWidth - kMarginRight + 20 << "\" y=\""
            << kMarginTop + plot_h - i * plot_h / 40.0 - plot_h / 40.0 << "\" width=\"16\" height=\""
            << plot_h / 40.0 + 0.5 << "\" fill=\"" << color_ramp(i / 40.0) << "\"/>\n";
    }
    out << "<text x=\"" << kWidth - kMarginRight + 40 << "\" y=\"" << kMarginTop + plot_h
        << "\">" << num(vr.lo) << "</text>\n";
    out << "<text x=\"" << kWidth - kMarginRight + 40 << "\" y=\"" << kMarginTop + 10 << "\">"
        << num(vr.hi) << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

void write_file(const std::string& path, const std::string& svg) {
    std::ofstream out(path);
    if (!out) raise(Errc::io, "cannot open " + path + " for writing");
    out << svg;
    if (!out) raise(Errc::io, "write failed: " + path);
}

}  // namespace carbonfl::svg
