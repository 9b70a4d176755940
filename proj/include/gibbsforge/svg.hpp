#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace gibbsforge {

// Minimal SVG line plots: axes, nice ticks, polylines, optional log scales,
// vertical markers and a legend. No external plotting dependency.

struct PlotSeries {
    std::vector<double> x, y;
    std::string label;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct PlotSpec {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;
    std::vector<PlotSeries> series;
    std::vector<double> vlines;  // vertical markers (data coordinates)
    int width = 720, height = 480;
};

namespace svgdetail {

inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
    std::vector<double> ticks;
    if (!(hi > lo)) return {lo};
    const double raw = (hi - lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    const double first = std::ceil(lo / step) * step;
    for (double t = first; t <= hi + 1e-9 * step; t += step) ticks.push_back(t);
    return ticks;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    if (std::abs(v) >= 1e4 || (std::abs(v) < 1e-3 && v != 0.0))
        os << std::scientific << std::setprecision(1) << v;
    else
        os << std::setprecision(4) << v;
    return os.str();
}

}  // namespace svgdetail

inline void render_svg(const PlotSpec& spec, std::ostream& os) {
    const double ml = 70, mr = 20, mt = spec.title.empty() ? 20 : 44, mb = 56;
    const double pw = spec.width - ml - mr, ph = spec.height - mt - mb;

    auto tx = [&](double v) { return spec.logx ? std::log10(std::max(v, 1e-300)) : v; };
    auto ty = [&](double v) { return spec.logy ? std::log10(std::max(v, 1e-300)) : v; };

    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const PlotSeries& s : spec.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (spec.logy && s.y[i] <= 0.0) continue;
            if (spec.logx && s.x[i] <= 0.0) continue;
            xlo = std::min(xlo, tx(s.x[i]));
            xhi = std::max(xhi, tx(s.x[i]));
            ylo = std::min(ylo, ty(s.y[i]));
            yhi = std::max(yhi, ty(s.y[i]));
        }
    if (!std::isfinite(xlo)) {
        xlo = 0;
        xhi = 1;
        ylo = 0;
        yhi = 1;
    }
    if (xhi == xlo) xhi = xlo + 1;
    if (yhi == ylo) yhi = ylo + 1;
    const double ypad = 0.05 * (yhi - ylo);
    ylo -= ypad;
    yhi += ypad;

    auto px = [&](double v) { return ml + (tx(v) - xlo) / (xhi - xlo) * pw; };
    auto py = [&](double v) { return mt + ph - (ty(v) - ylo) / (yhi - ylo) * ph; };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
       << spec.height << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!spec.title.empty())
        os << "<text x=\"" << spec.width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
           << "font-family=\"sans-serif\" font-size=\"16\">" << spec.title << "</text>\n";

    // frame
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";

    // ticks: in log mode ticks live in exponent space
    for (double t : svgdetail::nice_ticks(xlo, xhi)) {
        const double x = ml + (t - xlo) / (xhi - xlo) * pw;
        os << "<line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x << "\" y2=\""
           << mt + ph + 5 << "\" stroke=\"#333\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << mt + ph + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
           << (spec.logx ? "1e" + svgdetail::fmt(t) : svgdetail::fmt(t)) << "</text>\n";
    }
    for (double t : svgdetail::nice_ticks(ylo, yhi)) {
        const double y = mt + ph - (t - ylo) / (yhi - ylo) * ph;
        os << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
           << "\" stroke=\"#333\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
           << (spec.logy ? "1e" + svgdetail::fmt(t) : svgdetail::fmt(t)) << "</text>\n";
    }
    if (!spec.xlabel.empty())
        os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << spec.height - 12
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
           << spec.xlabel << "</text>\n";
    if (!spec.ylabel.empty())
        os << "<text x=\"16\" y=\"" << mt + ph / 2
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << spec.ylabel << "</text>\n";

    for (double v : spec.vlines) {
        if (spec.logx && v <= 0.0) continue;
        const double x = px(v);
        if (x < ml - 1e-6 || x > ml + pw + 1e-6) continue;
        os << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\"" << mt + ph
           << "\" stroke=\"#d62728\" stroke-dasharray=\"4,3\"/>\n";
    }

    for (const PlotSeries& s : spec.series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\"";
        if (s.dashed) os << " stroke-dasharray=\"6,4\"";
        os << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (spec.logy && s.y[i] <= 0.0) continue;
            if (spec.logx && s.x[i] <= 0.0) continue;
            os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        }
        os << "\"/>\n";
    }

    // legend
    double ly = mt + 14;
    for (const PlotSeries& s : spec.series) {
        if (s.label.empty()) continue;
        os << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 120
           << "\" y2=\"" << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"2\""
           << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
        os << "<text x=\"" << ml + pw - 114 << "\" y=\"" << ly + 4
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
        ly += 16;
    }
    os << "</svg>\n";
}

}  // namespace gibbsforge
