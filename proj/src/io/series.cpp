#include "fas/io/series.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace fas::io {

namespace {
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void include(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
};

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

void write_svg(const std::string& path, const std::string& title,
               const std::string& x_label, const std::string& y_label,
               const std::vector<Series>& series, bool lines) {
    constexpr double W = 640, H = 420, ML = 70, MR = 140, MT = 40, MB = 50;
    Range rx, ry;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            rx.include(s.x[i]);
            ry.include(s.y[i]);
        }
    rx.pad();
    ry.pad();
    auto px = [&](double x) { return ML + (x - rx.lo) / (rx.hi - rx.lo) * (W - ML - MR); };
    auto py = [&](double y) { return H - MB - (y - ry.lo) / (ry.hi - ry.lo) * (H - MT - MB); };

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_svg: cannot open " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n"
      << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
      << H - MB << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = rx.lo + (rx.hi - rx.lo) * t / 4.0;
        const double yv = ry.lo + (ry.hi - ry.lo) * t / 4.0;
        f << "<text x=\"" << px(xv) << "\" y=\"" << H - MB + 18
          << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(xv) << "</text>\n";
        f << "<text x=\"" << ML - 8 << "\" y=\"" << py(yv) + 4
          << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv) << "</text>\n";
    }
    f << "<text x=\"" << (ML + W - MR) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
    f << "<text x=\"18\" y=\"" << (MT + H - MB) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << (MT + H - MB) / 2 << ")\">" << y_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        if (lines && s.x.size() > 1) {
            f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (size_t i = 0; i < s.x.size(); ++i)
                f << px(s.x[i]) << "," << py(s.y[i]) << " ";
            f << "\"/>\n";
        }
        for (size_t i = 0; i < s.x.size(); ++i)
            f << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
              << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
        const double ly = MT + 18.0 * static_cast<double>(si);
        f << "<rect x=\"" << W - MR + 10 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\""
          << color << "\"/>\n"
          << "<text x=\"" << W - MR + 28 << "\" y=\"" << ly + 10 << "\" font-size=\"12\">" << s.name
          << "</text>\n";
    }
    f << "</svg>\n";
}
} // namespace

void write_series_csv(const std::string& path, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_series_csv: cannot open " + path);
    f << "series," << x_label << "," << y_label << "\n";
    f.precision(12);
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i)
            f << s.name << "," << s.x[i] << "," << s.y[i] << "\n";
}

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series) {
    write_svg(path, title, x_label, y_label, series, true);
}

void write_svg_scatter(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
    write_svg(path, title, x_label, y_label, series, false);
}

} // namespace fas::io
