#include "ftlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace ftlab {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_chart(const std::vector<ChartPanel>& panels, int width, int panel_height) {
    if (panels.empty()) throw std::runtime_error("render_chart: no panels");
    const int margin_left = 56, margin_right = 150, margin_top = 34, margin_bottom = 40;
    const int total_height = panel_height * static_cast<int>(panels.size());
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << total_height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << total_height << "\" fill=\"white\"/>\n";

    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const ChartPanel& panel = panels[pi];
        const double top = static_cast<double>(panel_height) * static_cast<double>(pi);
        const double plot_x = margin_left;
        const double plot_y = top + margin_top;
        const double plot_w = width - margin_left - margin_right;
        const double plot_h = panel_height - margin_top - margin_bottom;

        double x_min = 1e300, x_max = -1e300;
        for (const ChartSeries& s : panel.series)
            for (double x : s.x) {
                x_min = std::min(x_min, x);
                x_max = std::max(x_max, x);
            }
        if (!(x_min < x_max)) {
            x_min = x_min < 1e299 ? x_min - 0.5 : 0.0;
            x_max = x_min + 1.0;
        }
        auto tx = [&](double x) {
            double u;
            if (panel.log_x)
                u = (std::log10(std::max(x, 1e-12)) - std::log10(std::max(x_min, 1e-12))) /
                    (std::log10(std::max(x_max, 1e-12)) - std::log10(std::max(x_min, 1e-12)));
            else
                u = (x - x_min) / (x_max - x_min);
            return plot_x + u * plot_w;
        };
        auto ty = [&](double y) {
            const double u = (y - panel.y_min) / (panel.y_max - panel.y_min);
            return plot_y + (1.0 - u) * plot_h;
        };

        svg << "<text x=\"" << fmt(plot_x) << "\" y=\"" << fmt(top + 18)
            << "\" font-size=\"13\" font-weight=\"bold\">" << escape(panel.title) << "</text>\n";

        // Frame and y grid.
        svg << "<rect x=\"" << fmt(plot_x) << "\" y=\"" << fmt(plot_y) << "\" width=\""
            << fmt(plot_w) << "\" height=\"" << fmt(plot_h)
            << "\" fill=\"none\" stroke=\"#333\"/>\n";
        for (int i = 0; i <= 5; ++i) {
            const double y = panel.y_min + (panel.y_max - panel.y_min) * i / 5.0;
            svg << "<line x1=\"" << fmt(plot_x) << "\" y1=\"" << fmt(ty(y)) << "\" x2=\""
                << fmt(plot_x + plot_w) << "\" y2=\"" << fmt(ty(y))
                << "\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n";
            svg << "<text x=\"" << fmt(plot_x - 6) << "\" y=\"" << fmt(ty(y) + 4)
                << "\" text-anchor=\"end\">" << fmt_tick(y) << "</text>\n";
        }
        // X ticks at the first series' points.
        if (!panel.series.empty())
            for (double x : panel.series.front().x) {
                svg << "<line x1=\"" << fmt(tx(x)) << "\" y1=\"" << fmt(plot_y + plot_h)
                    << "\" x2=\"" << fmt(tx(x)) << "\" y2=\"" << fmt(plot_y + plot_h + 4)
                    << "\" stroke=\"#333\"/>\n";
                svg << "<text x=\"" << fmt(tx(x)) << "\" y=\"" << fmt(plot_y + plot_h + 16)
                    << "\" text-anchor=\"middle\">" << fmt_tick(x) << "</text>\n";
            }
        svg << "<text x=\"" << fmt(plot_x + plot_w / 2) << "\" y=\""
            << fmt(plot_y + plot_h + 32) << "\" text-anchor=\"middle\">" << escape(panel.x_label)
            << "</text>\n";
        svg << "<text x=\"" << fmt(plot_x - 40) << "\" y=\"" << fmt(plot_y + plot_h / 2)
            << "\" transform=\"rotate(-90 " << fmt(plot_x - 40) << " " << fmt(plot_y + plot_h / 2)
            << ")\" text-anchor=\"middle\">" << escape(panel.y_label) << "</text>\n";

        for (std::size_t si = 0; si < panel.series.size(); ++si) {
            const ChartSeries& s = panel.series[si];
            const char* color = kPalette[si % kPaletteSize];
            if (!s.lo.empty() && s.lo.size() == s.x.size() && s.hi.size() == s.x.size()) {
                svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
                for (std::size_t i = 0; i < s.x.size(); ++i)
                    svg << fmt(tx(s.x[i])) << ',' << fmt(ty(std::clamp(s.hi[i], panel.y_min, panel.y_max))) << ' ';
                for (std::size_t i = s.x.size(); i-- > 0;)
                    svg << fmt(tx(s.x[i])) << ',' << fmt(ty(std::clamp(s.lo[i], panel.y_min, panel.y_max))) << ' ';
                svg << "\"/>\n";
            }
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                svg << fmt(tx(s.x[i])) << ',' << fmt(ty(std::clamp(s.median[i], panel.y_min, panel.y_max))) << ' ';
            svg << "\"/>\n";
            // Legend entry.
            const double ly = plot_y + 14.0 * static_cast<double>(si);
            svg << "<line x1=\"" << fmt(plot_x + plot_w + 8) << "\" y1=\"" << fmt(ly) << "\" x2=\""
                << fmt(plot_x + plot_w + 28) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
                << "\" stroke-width=\"2\"/>\n";
            svg << "<text x=\"" << fmt(plot_x + plot_w + 32) << "\" y=\"" << fmt(ly + 4) << "\">"
                << escape(s.name) << "</text>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace ftlab
