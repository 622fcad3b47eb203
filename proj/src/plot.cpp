#include "geosep/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace geosep::plot {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

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

double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

}  // namespace

std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Layer>& layers) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& l : layers)
        for (const auto& p : l.paths)
            for (const auto& q : p) {
                if (!std::isfinite(q[0]) || !std::isfinite(q[1])) continue;
                x0 = std::min(x0, q[0]);
                x1 = std::max(x1, q[0]);
                y0 = std::min(y0, q[1]);
                y1 = std::max(y1, q[1]);
            }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double padx = 0.04 * (x1 - x0), pady = 0.04 * (y1 - y0);
    x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
    o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    const double xs = nice_step(x1 - x0), ys = nice_step(y1 - y0);
    for (double t = std::ceil(x0 / xs) * xs; t <= x1; t += xs) {
        const double v = std::abs(t) < 1e-9 * xs ? 0.0 : t;
        o << "<line x1=\"" << num(sx(v)) << "\" y1=\"" << kTop + ph << "\" x2=\"" << num(sx(v)) << "\" y2=\"" << kTop + ph + 5
          << "\" stroke=\"black\"/><text x=\"" << num(sx(v)) << "\" y=\"" << kTop + ph + 18
          << "\" text-anchor=\"middle\">" << num(v) << "</text>\n";
    }
    for (double t = std::ceil(y0 / ys) * ys; t <= y1; t += ys) {
        const double v = std::abs(t) < 1e-9 * ys ? 0.0 : t;
        o << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(sy(v)) << "\" x2=\"" << kLeft << "\" y2=\"" << num(sy(v))
          << "\" stroke=\"black\"/><text x=\"" << kLeft - 8 << "\" y=\"" << num(sy(v) + 4)
          << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
    }
    o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(xlabel)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kTop + ph / 2 << ")\">" << escape(ylabel) << "</text>\n";

    o << "<g>\n";
    for (const auto& l : layers) {
        for (const auto& p : l.paths) {
            if (l.lines && p.size() > 1) {
                o << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"1\" points=\"";
                for (std::size_t i = 0; i < p.size(); ++i) o << (i ? " " : "") << num(sx(p[i][0])) << "," << num(sy(p[i][1]));
                o << "\"/>\n";
            } else {
                for (const auto& q : p)
                    o << "<circle cx=\"" << num(sx(q[0])) << "\" cy=\"" << num(sy(q[1])) << "\" r=\"1.2\" fill=\"" << l.color
                      << "\"/>\n";
            }
        }
    }
    o << "</g>\n";
    double ly = kTop + 10;
    for (const auto& l : layers) {
        o << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << l.color
          << "\"/><text x=\"" << kWidth - kRight + 28 << "\" y=\"" << ly + 1 << "\">" << escape(l.name) << "</text>\n";
        ly += 18;
    }
    o << "</svg>\n";
    return o.str();
}

std::string layers_csv(const std::vector<Layer>& layers) {
    std::ostringstream o;
    o << "layer,path,x,y\n";
    for (const auto& l : layers)
        for (std::size_t p = 0; p < l.paths.size(); ++p)
            for (const auto& q : l.paths[p]) o << l.name << "," << p << "," << num(q[0]) << "," << num(q[1]) << "\n";
    return o.str();
}

}  // namespace geosep::plot
