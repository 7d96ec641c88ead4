#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "agritime/dataset.hpp"

namespace agritime::synth {

// The generative rule constants. They are configuration for the synthetic
// oracle, chosen so the flagship nitrogen pattern (40/60/80 kg/ha near days
// 115/185/220, season total 180 kg/ha, yield just under 10 t/ha) lands in the
// magnitude range a winter-wheat season actually shows. Quantities divide
// evenly by the product fractions below so CSV round-trips stay exact.
struct RuleTable {
    // Nitrogen: 3 applications when the spring window (days 121-180) is wet,
    // else the first 2 of the base pattern.
    double spring_rain_threshold_mm = 130.0;
    std::array<double, 3> n_base_qty{40.0, 60.0, 80.0};
    std::array<int, 3> n_base_day{115, 185, 220};

    // Application days shift with autumn temperature (days 0-60 mean).
    double autumn_temp_ref_c = 7.1;
    double day_shift_per_degc = 2.0;
    int max_day_offset = 10;

    // Potassium: sandy soils always, otherwise only small fields.
    double k_qty = 24.0;
    int k_base_day = 90;
    double k_small_field_ha = 20.0;

    // Sulphur on clay/loam, magnesium on loam/peat, single applications.
    double s_qty = 82.0;
    int s_base_day = 117;
    double mg_qty = 15.0;
    int mg_base_day = 130;

    // yield = base + per_kg * total_N - quad * (total_N - optimal)^2
    //         + area_coeff * (area - 32.5)
    double yield_base_t_ha = 8.46875;
    double yield_per_kg = 0.0078125;
    double yield_quad = 0.0001171875;
    double yield_optimal_total = 180.0;
    double yield_area_coeff = 0.004;
};

struct SynthConfig {
    int n_fields = 3000;
    std::uint64_t seed = 0;
    double noise_level = 0.0;  // in [0, 1]; scales qty/day/yield perturbations only
    std::vector<std::string> soil_vocabulary{"clay", "loam", "peat", "sandy"};
    RuleTable rules;
};

struct GroundTruth {
    std::string field_id;
    dataset::Nutrient nutrient;
    int count = 0;
    std::vector<int> days;
    std::vector<double> qtys;
};

struct SynthResult {
    std::vector<dataset::FieldSeasonRecord> records;
    std::vector<GroundTruth> truths;  // 8 rows per field, fixed nutrient order
};

// Pure function of the config; per-field streams are derived from the seed, so
// fields can be generated in any order. At noise 0 every quantity and day is
// an exact function of (soil, area, weather, seed).
SynthResult generate(const SynthConfig& config);

// Reapplies the nitrogen count rule to a record's emitted weather; the test
// oracle for label reconstruction.
int nitrogen_count_rule(const dataset::FieldSeasonRecord& record, const RuleTable& rules);

// Writes fields/weather/applications/products/ground_truth CSVs into `dir`.
// Returns the five file paths in that order.
std::array<std::string, 5> write_csvs(const SynthResult& result, const std::string& dir);

}  // namespace agritime::synth
