#include "agritime/chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "agritime/csv.hpp"

namespace agritime::chart {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 60;
constexpr int kMarginRight = 30;
constexpr int kMarginTop = 56;
constexpr int kMarginBottom = 48;
constexpr int kDayMin = -30;
constexpr int kDayMax = 330;

double x_for_day(double day) {
    const double span = static_cast<double>(kDayMax - kDayMin);
    return kMarginLeft + (day - kDayMin) / span * (kWidth - kMarginLeft - kMarginRight);
}

std::string num(double v) {
    // Fixed short decimals keep the SVG byte-stable for equal inputs.
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
}

}  // namespace

std::string timeline_chart_svg(const dataset::NutrientTimeline& timeline,
                               const std::string& field_id) {
    const std::string nutrient(dataset::nutrient_name(timeline.nutrient));
    double qty_max = 10.0;
    for (const auto& e : timeline.entries) qty_max = std::max(qty_max, e.qty_kg_ha);
    qty_max *= 1.15;

    const double plot_bottom = kHeight - kMarginBottom;
    const double plot_height = plot_bottom - kMarginTop;
    auto y_for_qty = [&](double qty) { return plot_bottom - qty / qty_max * plot_height; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
           "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " + std::to_string(kWidth) +
           " " + std::to_string(kHeight) + "\">\n";
    svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "  <text x=\"" + std::to_string(kMarginLeft) +
           "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" font-weight=\"bold\">" +
           nutrient + " application timeline - field " + field_id + "</text>\n";

    // axes
    svg += "  <line x1=\"" + num(x_for_day(kDayMin)) + "\" y1=\"" + num(plot_bottom) + "\" x2=\"" +
           num(x_for_day(kDayMax)) + "\" y2=\"" + num(plot_bottom) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "  <line x1=\"" + num(x_for_day(kDayMin)) + "\" y1=\"" + num(kMarginTop) + "\" x2=\"" +
           num(x_for_day(kDayMin)) + "\" y2=\"" + num(plot_bottom) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int day = 0; day <= kDayMax; day += 50) {
        svg += "  <line x1=\"" + num(x_for_day(day)) + "\" y1=\"" + num(plot_bottom) + "\" x2=\"" +
               num(x_for_day(day)) + "\" y2=\"" + num(plot_bottom + 5) + "\" stroke=\"black\"/>\n";
        svg += "  <text x=\"" + num(x_for_day(day)) + "\" y=\"" + num(plot_bottom + 20) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
               std::to_string(day) + "</text>\n";
    }
    svg += "  <text x=\"" + num((x_for_day(kDayMin) + x_for_day(kDayMax)) / 2) + "\" y=\"" +
           num(kHeight - 10) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">days from "
           "seeding</text>\n";

    // one bar and one day marker per application
    for (std::size_t i = 0; i < timeline.entries.size(); ++i) {
        const auto& e = timeline.entries[i];
        const double cx = x_for_day(e.day);
        const double top = y_for_qty(e.qty_kg_ha);
        svg += "  <rect class=\"qty-bar\" data-day=\"" + std::to_string(e.day) + "\" data-qty=\"" +
               format_double(e.qty_kg_ha) + "\" x=\"" + num(cx - 6) + "\" y=\"" + num(top) +
               "\" width=\"12\" height=\"" + num(plot_bottom - top) +
               "\" fill=\"#2e8b57\" stroke=\"#145a32\"/>\n";
        svg += "  <path class=\"day-marker\" data-day=\"" + std::to_string(e.day) + "\" d=\"M " +
               num(cx) + " " + num(kMarginTop - 14) + " l 6 8 l -6 8 l -6 -8 z\" fill=\"#c0392b\"/>\n";
        svg += "  <text x=\"" + num(cx) + "\" y=\"" + num(top - 6) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
               num(e.qty_kg_ha) + "</text>\n";
    }

    std::string annotation = "total " + num(timeline.total_qty_kg_ha) + " kg/ha";
    if (timeline.expected_yield_t_ha)
        annotation += ", expected yield " + num(*timeline.expected_yield_t_ha) + " t/ha";
    svg += "  <text x=\"" + std::to_string(kWidth - kMarginRight) +
           "\" y=\"40\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" +
           annotation + "</text>\n";
    svg += "  <text x=\"16\" y=\"" + num(kMarginTop + plot_height / 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 "
           "16 " +
           num(kMarginTop + plot_height / 2) + ")\">kg/ha</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace agritime::chart
