#include "mytm/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mytm {

namespace {

struct Series {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points; // (age, value)
};

// Minimal SVG line chart: axes, ticks, one polyline per series.
void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<Series>& series, const std::string& meta_comment) {
    constexpr double W = 640, H = 420, ML = 60, MR = 20, MT = 40, MB = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) { xmin = 0; xmax = 1; }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    if (xmax == xmin) { xmax = xmin + 1; }
    if (ymax == ymin) { ymax = ymin + 0.5; ymin -= 0.5; }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto py = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write plot: " + path.string());
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    f << "<!-- " << meta_comment << " -->\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
    // axes
    f << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
    f << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 5.0;
        const double yv = ymin + (ymax - ymin) * i / 5.0;
        f << "<text x='" << px(xv) << "' y='" << H - MB + 18
          << "' text-anchor='middle' font-size='11'>" << xv << "</text>\n";
        char ybuf[32];
        std::snprintf(ybuf, sizeof(ybuf), "%.3g", yv);
        f << "<text x='" << ML - 6 << "' y='" << py(yv) + 4
          << "' text-anchor='end' font-size='11'>" << ybuf << "</text>\n";
        f << "<line x1='" << ML << "' y1='" << py(yv) << "' x2='" << W - MR << "' y2='" << py(yv)
          << "' stroke='#dddddd'/>\n";
    }
    int li = 0;
    for (const auto& s : series) {
        f << "<polyline fill='none' stroke='" << s.color << "' stroke-width='2' points='";
        for (const auto& [x, y] : s.points) f << px(x) << ',' << py(y) << ' ';
        f << "'/>\n";
        for (const auto& [x, y] : s.points) {
            f << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='3' fill='" << s.color
              << "'/>\n";
        }
        f << "<text x='" << W - MR - 8 << "' y='" << MT + 16 * li
          << "' text-anchor='end' font-size='12' fill='" << s.color << "'>" << s.label
          << "</text>\n";
        ++li;
    }
    f << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-size='12'>target age (years)</text>\n";
    f << "</svg>\n";
}

Series mae_series(const EvalReport& r, const std::string& label, const std::string& color) {
    Series s{label, color, {}};
    for (const auto& m : r.per_age) s.points.push_back({(double)m.target_age, m.age_mae});
    return s;
}

Series idsim_series(const EvalReport& r, const std::string& label, const std::string& color) {
    Series s{label, color, {}};
    for (const auto& m : r.per_age)
        if (m.id_sim) s.points.push_back({(double)m.target_age, *m.id_sim});
    return s;
}

std::string meta_of(const EvalReport& r) {
    return "config_hash=" + r.config_hash + " seed=" + std::to_string(r.seed) +
           " backend=" + r.backend_name;
}

} // namespace

void emit_plots(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_svg_chart(out_dir / "age_mae.svg", "Age MAE vs target age (" + report.task + ")",
                    {mae_series(report, "age_mae", "#c0392b")}, meta_of(report));
    write_svg_chart(out_dir / "id_sim.svg", "ID similarity vs target age (" + report.task + ")",
                    {idsim_series(report, "id_sim", "#2980b9")}, meta_of(report));
    write_report_csv(report, out_dir / "summary.csv");
}

void emit_comparison_plots(const EvalReport& a, const std::string& label_a,
                           const EvalReport& b, const std::string& label_b,
                           const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_svg_chart(out_dir / "age_mae_compare.svg", "Age MAE comparison",
                    {mae_series(a, label_a, "#c0392b"), mae_series(b, label_b, "#7f8c8d")},
                    meta_of(a));
    write_svg_chart(out_dir / "id_sim_compare.svg", "ID similarity comparison",
                    {idsim_series(a, label_a, "#2980b9"), idsim_series(b, label_b, "#7f8c8d")},
                    meta_of(a));
}

} // namespace mytm
