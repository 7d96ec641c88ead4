#pragma once

#include <string>

#include "agritime/dataset.hpp"

namespace agritime::chart {

// Self-contained SVG for one nutrient's season schedule: a quantity bar plus a
// day marker per application on a day-from-seeding axis, with the season total
// and expected yield annotated. Bars carry data-day/data-qty attributes so
// tools (and tests) can read the values back without rasterizing.
std::string timeline_chart_svg(const dataset::NutrientTimeline& timeline,
                               const std::string& field_id);

}  // namespace agritime::chart
