#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mscal::cli {

namespace {

constexpr double kSize = 480.0;
constexpr double kMargin = 56.0;
constexpr std::size_t kMaxScatter = 4000;
constexpr std::size_t kRugTicks = 200;

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

// Smallest multiple of 0.1 covering every value, at most 1.
double axis_limit(const CalibrationPlot& p)
{
    double hi = 0.0;
    auto take = [&](const std::vector<CalPoint>& pts) {
        for (const auto& q : pts)
            hi = std::max({hi, q.predicted, q.observed});
    };
    take(p.estimate);
    take(p.reference);
    for (double r : p.rug)
        hi = std::max(hi, r);
    return std::clamp(std::ceil(hi * 10.0 - 1e-9) / 10.0, 0.1, 1.0);
}

}  // namespace

std::string render_svg(const CalibrationPlot& plot)
{
    const double lim = axis_limit(plot);
    const double inner = kSize - 2.0 * kMargin;
    auto sx = [&](double v) { return kMargin + std::clamp(v, 0.0, lim) / lim * inner; };
    auto sy = [&](double v) { return kSize - kMargin - std::clamp(v, 0.0, lim) / lim * inner; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(kSize / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << escape(plot.title)
      << "</text>\n";

    o << "<g stroke=\"black\" fill=\"none\">\n";
    o << "<rect x=\"" << num(kMargin) << "\" y=\"" << num(kMargin) << "\" width=\"" << num(inner) << "\" height=\""
      << num(inner) << "\"/>\n";
    o << "</g>\n<g font-size=\"10\">\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = lim * i / 5.0;
        o << "<line x1=\"" << num(sx(v)) << "\" y1=\"" << num(kSize - kMargin) << "\" x2=\"" << num(sx(v))
          << "\" y2=\"" << num(kSize - kMargin + 4) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << num(sx(v)) << "\" y=\"" << num(kSize - kMargin + 16)
          << "\" text-anchor=\"middle\">" << num(v) << "</text>\n";
        o << "<line x1=\"" << num(kMargin - 4) << "\" y1=\"" << num(sy(v)) << "\" x2=\"" << num(kMargin)
          << "\" y2=\"" << num(sy(v)) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << num(kMargin - 7) << "\" y=\"" << num(sy(v) + 3)
          << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
    }
    o << "</g>\n";
    o << "<text x=\"" << num(kSize / 2) << "\" y=\"" << num(kSize - 12)
      << "\" text-anchor=\"middle\">predicted</text>\n";
    o << "<text x=\"14\" y=\"" << num(kSize / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << num(kSize / 2) << ")\">observed</text>\n";

    o << "<line x1=\"" << num(sx(0)) << "\" y1=\"" << num(sy(0)) << "\" x2=\"" << num(sx(lim)) << "\" y2=\""
      << num(sy(lim)) << "\" stroke=\"grey\" stroke-dasharray=\"4 3\"/>\n";

    if (!plot.rug.empty()) {
        std::vector<double> r = plot.rug;
        std::sort(r.begin(), r.end());
        o << "<g stroke=\"black\" stroke-width=\"0.5\">\n";
        const std::size_t ticks = std::min(kRugTicks, r.size());
        for (std::size_t i = 0; i < ticks; ++i) {
            const double v = r[ticks == 1 ? 0 : i * (r.size() - 1) / (ticks - 1)];
            o << "<line x1=\"" << num(sx(v)) << "\" y1=\"" << num(kSize - kMargin) << "\" x2=\"" << num(sx(v))
              << "\" y2=\"" << num(kSize - kMargin - 6) << "\"/>\n";
        }
        o << "</g>\n";
    }

    auto polyline = [&](const std::vector<CalPoint>& pts, const char* colour, const char* extra) {
        if (pts.empty())
            return;
        o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\"" << extra << " points=\"";
        const std::size_t stride = std::max<std::size_t>(1, pts.size() / 2000);
        for (std::size_t i = 0; i < pts.size(); i += stride)
            o << num(sx(pts[i].predicted)) << ',' << num(sy(pts[i].observed)) << ' ';
        o << num(sx(pts.back().predicted)) << ',' << num(sy(pts.back().observed)) << "\"/>\n";
    };

    polyline(plot.reference, "#d95f02", " stroke-dasharray=\"6 2\"");
    if (plot.scatter) {
        o << "<g fill=\"#1b9e77\" fill-opacity=\"0.4\">\n";
        const std::size_t stride = std::max<std::size_t>(1, (plot.estimate.size() + kMaxScatter - 1) / kMaxScatter);
        for (std::size_t i = 0; i < plot.estimate.size(); i += stride)
            o << "<circle cx=\"" << num(sx(plot.estimate[i].predicted)) << "\" cy=\""
              << num(sy(plot.estimate[i].observed)) << "\" r=\"1.5\"/>\n";
        o << "</g>\n";
    }
    else {
        polyline(plot.estimate, "#1b9e77", "");
        if (plot.estimate.size() <= 50) {
            o << "<g fill=\"#1b9e77\">\n";
            for (const auto& p : plot.estimate)
                o << "<circle cx=\"" << num(sx(p.predicted)) << "\" cy=\"" << num(sy(p.observed)) << "\" r=\"2.5\"/>\n";
            o << "</g>\n";
        }
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace mscal::cli
