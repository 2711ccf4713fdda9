#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "air/backtest.hpp"

namespace air {

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

void emit_forecast_svg(const std::vector<double>& lookback_truth,
                       const std::vector<double>& horizon_truth,
                       const std::vector<std::pair<std::string, std::vector<double>>>& forecasts,
                       Date origin, const std::string& annotation,
                       const std::filesystem::path& out_path) {
    if (lookback_truth.empty() || horizon_truth.empty())
        throw ContractError("emit_forecast_svg: empty truth series");
    for (const auto& [name, series] : forecasts)
        if (series.size() != horizon_truth.size())
            throw ContractError("emit_forecast_svg: forecast '" + name + "' length " +
                                std::to_string(series.size()) + " differs from horizon " +
                                std::to_string(horizon_truth.size()));

    const int t_len = static_cast<int>(lookback_truth.size());
    const int h_len = static_cast<int>(horizon_truth.size());

    double lo = lookback_truth[0], hi = lookback_truth[0];
    auto widen = [&](const std::vector<double>& v) {
        for (double x : v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    };
    widen(lookback_truth);
    widen(horizon_truth);
    for (const auto& [name, series] : forecasts) widen(series);
    if (hi == lo) hi = lo + 1.0;

    const double width = 760, height = 420;
    const double px0 = 50, px1 = 540, py0 = 30, py1 = 380;
    const int total = t_len + h_len;
    auto sx = [&](int i) { return px0 + (px1 - px0) * static_cast<double>(i) / (total - 1); };
    auto sy = [&](double v) { return py1 - (py1 - py0) * (v - lo) / (hi - lo); };

    auto polyline = [&](const std::vector<double>& v, int x_offset, const std::string& color,
                        const std::string& dash) {
        std::ostringstream os;
        os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
        if (!dash.empty()) os << " stroke-dasharray=\"" << dash << "\"";
        os << " points=\"";
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) os << ' ';
            os << fmt2(sx(x_offset + static_cast<int>(i))) << ',' << fmt2(sy(v[i]));
        }
        os << "\"/>\n";
        return os.str();
    };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    svg << "  <text x=\"" << fmt2(px0) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
        << "Forecast origin " << origin.str() << "</text>\n";
    // origin marker between lookback and horizon
    const double x_origin = sx(t_len);
    svg << "  <line x1=\"" << fmt2(x_origin) << "\" y1=\"" << fmt2(py0) << "\" x2=\"" << fmt2(x_origin)
        << "\" y2=\"" << fmt2(py1) << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"2,3\"/>\n";
    svg << "  <line x1=\"" << fmt2(px0) << "\" y1=\"" << fmt2(py1) << "\" x2=\"" << fmt2(px1)
        << "\" y2=\"" << fmt2(py1) << "\" stroke=\"#333333\"/>\n";

    svg << polyline(lookback_truth, 0, "#444444", "");
    svg << polyline(horizon_truth, t_len, "#000000", "");

    // legend
    double ly = py0 + 10;
    svg << "  <text x=\"560\" y=\"" << fmt2(ly) << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << "truth</text>\n";
    svg << "  <line x1=\"620\" y1=\"" << fmt2(ly - 4) << "\" x2=\"650\" y2=\"" << fmt2(ly - 4)
        << "\" stroke=\"#000000\" stroke-width=\"1.5\"/>\n";
    int ci = 0;
    for (const auto& [name, series] : forecasts) {
        const std::string color = kPalette[ci % 8];
        svg << polyline(series, t_len, color, "4,2");
        ly += 18;
        svg << "  <text x=\"560\" y=\"" << fmt2(ly) << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << xml_escape(name) << "</text>\n";
        svg << "  <line x1=\"620\" y1=\"" << fmt2(ly - 4) << "\" x2=\"650\" y2=\"" << fmt2(ly - 4)
            << "\" stroke=\"" << color << "\" stroke-width=\"1.5\" stroke-dasharray=\"4,2\"/>\n";
        ++ci;
    }

    if (!annotation.empty()) {
        svg << "  <text x=\"" << fmt2(px0) << "\" y=\"" << fmt2(py1 + 22)
            << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">"
            << xml_escape(annotation) << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + out_path.string());
    out << svg.str();
    if (!out) throw IoError("write failed for " + out_path.string());
}

}  // namespace air
