#include "icl/plot.hpp"

#include "icl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace icl {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(int e) {
    if (e >= 0 && e <= 4) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%d", static_cast<int>(std::lround(std::pow(10.0, e))));
        return buf;
    }
    return "1e" + std::to_string(e);
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
};

}  // namespace

std::string render_loglog_svg(const PlotSpec& spec) {
    const double width = 720, height = 480;
    const double left = 80, right = 220, top = 40, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;

    Range rx, ry;
    for (const auto& s : spec.series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
            if (s.x[i] > 0 && s.y[i] > 0) {
                rx.add(std::log10(s.x[i]));
                ry.add(std::log10(s.y[i]));
            }
    if (!(rx.lo <= rx.hi)) rx = {0.0, 1.0};
    if (!(ry.lo <= ry.hi)) ry = {0.0, 1.0};
    if (rx.hi - rx.lo < 1e-9) { rx.lo -= 0.5; rx.hi += 0.5; }
    if (ry.hi - ry.lo < 1e-9) { ry.lo -= 0.5; ry.hi += 0.5; }
    const double padx = 0.05 * (rx.hi - rx.lo), pady = 0.08 * (ry.hi - ry.lo);
    rx.lo -= padx; rx.hi += padx;
    ry.lo -= pady; ry.hi += pady;

    auto sx = [&](double lx) { return left + (lx - rx.lo) / (rx.hi - rx.lo) * pw; };
    auto sy = [&](double ly) { return top + (ry.hi - ly) / (ry.hi - ry.lo) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(spec.title)
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (int e = static_cast<int>(std::ceil(rx.lo)); e <= static_cast<int>(std::floor(rx.hi)); ++e) {
        double x = sx(e);
        o << "<line x1=\"" << num(x) << "\" y1=\"" << top << "\" x2=\"" << num(x) << "\" y2=\"" << top + ph
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << num(x) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">" << tick_label(e)
          << "</text>\n";
    }
    for (int e = static_cast<int>(std::ceil(ry.lo)); e <= static_cast<int>(std::floor(ry.hi)); ++e) {
        double y = sy(e);
        o << "<line x1=\"" << left << "\" y1=\"" << num(y) << "\" x2=\"" << left + pw << "\" y2=\"" << num(y)
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << tick_label(e)
          << "</text>\n";
    }
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 15) << "\" text-anchor=\"middle\">"
      << escape(spec.xlabel) << "</text>\n";
    o << "<text transform=\"translate(18," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(spec.ylabel) << "</text>\n";

    double ly = top + 10;
    for (std::size_t k = 0; k < spec.series.size(); ++k) {
        const auto& s = spec.series[k];
        const char* color = kPalette[k % (sizeof kPalette / sizeof *kPalette)];
        const char* dash = s.dashed ? " stroke-dasharray=\"6,4\"" : "";
        std::ostringstream pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!(s.x[i] > 0 && s.y[i] > 0)) continue;
            double x = sx(std::log10(s.x[i])), y = sy(std::log10(s.y[i]));
            pts << num(x) << "," << num(y) << " ";
            o << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"" << dash << " points=\"" << pts.str()
          << "\"/>\n";
        double lx = left + pw + 12;
        o << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 24) << "\" y2=\"" << num(ly)
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << "/>\n";
        o << "<text x=\"" << num(lx + 30) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label) << "</text>\n";
        ly += 18;
    }
    ly += 8;
    for (const auto& note : spec.notes) {
        o << "<text x=\"" << num(left + pw + 12) << "\" y=\"" << num(ly) << "\" font-size=\"11\">" << escape(note)
          << "</text>\n";
        ly += 16;
    }
    o << "</svg>\n";
    return o.str();
}

void write_svg(const std::string& path, const PlotSpec& spec) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << render_loglog_svg(spec);
}

}  // namespace icl
