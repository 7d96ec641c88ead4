#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agritime/dates.hpp"
#include "agritime/matrix.hpp"

namespace agritime::dataset {

// The eight pure nutrients, in the fixed order used everywhere (iteration,
// feature columns, recommend-mode chaining).
enum class Nutrient : int { N = 0, P, K, S, Mg, B, Mn, Ca };

inline constexpr int kNutrientCount = 8;

constexpr std::array<Nutrient, kNutrientCount> all_nutrients() {
    return {Nutrient::N, Nutrient::P, Nutrient::K, Nutrient::S,
            Nutrient::Mg, Nutrient::B, Nutrient::Mn, Nutrient::Ca};
}

std::string_view nutrient_name(Nutrient n);
std::optional<Nutrient> nutrient_from_name(std::string_view name);

struct DailyWeather {
    Date date;
    // NaN marks a missing value before cleaning.
    double tmin_c = 0.0;
    double tmax_c = 0.0;
    double rain_mm = 0.0;
    double sun_hours = 0.0;
    double wind_kph = 0.0;
    double humidity_pct = 0.0;
};

inline constexpr int kWeatherVarCount = 6;
double weather_value(const DailyWeather& w, int var);
void set_weather_value(DailyWeather& w, int var, double value);

struct ApplicationEvent {
    Nutrient nutrient = Nutrient::N;
    int day = 0;  // days from seeding; negative allows base dressing down to -30
    double qty_kg_ha = 0.0;
};

// One field over one cropping season.
struct FieldSeasonRecord {
    std::string field_id;
    double area_ha = 0.0;
    std::string soil_type;  // empty = missing before cleaning
    std::optional<Date> seeding_date;
    std::vector<DailyWeather> weather;  // strictly increasing dates
    std::vector<ApplicationEvent> applications;
    std::optional<double> yield_t_ha;  // absent for fields awaiting harvest
    bool cleaned = false;

    bool operator==(const FieldSeasonRecord&) const = default;
};

inline bool operator==(const DailyWeather& a, const DailyWeather& b) {
    return a.date == b.date && a.tmin_c == b.tmin_c && a.tmax_c == b.tmax_c &&
           a.rain_mm == b.rain_mm && a.sun_hours == b.sun_hours && a.wind_kph == b.wind_kph &&
           a.humidity_pct == b.humidity_pct;
}

inline bool operator==(const ApplicationEvent& a, const ApplicationEvent& b) {
    return a.nutrient == b.nutrient && a.day == b.day && a.qty_kg_ha == b.qty_kg_ha;
}

struct TimelineEntry {
    int day = 0;
    double qty_kg_ha = 0.0;
    bool operator==(const TimelineEntry&) const = default;
};

// One nutrient's full-season application schedule. total_qty_kg_ha is carried
// separately from the entries: stage-2 models predict it as its own target, so
// it is not forced to equal the entry sum.
struct NutrientTimeline {
    Nutrient nutrient = Nutrient::N;
    std::vector<TimelineEntry> entries;  // sorted by day, strictly increasing
    double total_qty_kg_ha = 0.0;
    std::optional<double> expected_yield_t_ha;
};

// Fractional nutrient contents per product; keys are case-folded and trimmed.
class ProductCompositionTable {
public:
    using Fractions = std::array<double, kNutrientCount>;

    void add(std::string_view product, const Fractions& fractions);
    const Fractions* find(std::string_view product) const;
    std::size_t size() const { return table_.size(); }

    static std::string normalize_key(std::string_view product);
    static ProductCompositionTable from_csv(const std::string& path);

private:
    std::unordered_map<std::string, Fractions> table_;
};

enum class ColumnKind { numeric, one_hot };

struct FeatureMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> column_names;
    std::vector<ColumnKind> column_kinds;
    Matrix values;
};

struct CleanPolicy {
    double iqr_multiplier = 1.5;
    int smoothing_window = 7;  // centered rolling mean, shrinking symmetrically at edges
    int app_day_min = -30;
    int app_day_max = 330;
};

struct CleanLog {
    std::size_t dropped_events = 0;
    std::vector<std::string> dropped_records;  // "<field_id>: <reason>"
};

// Reads the four CSV inputs and assembles one record per field row.
// Application rows are normalized into per-nutrient events through the
// composition table (qty = rate * fraction; zero fractions emit nothing) with
// days taken relative to the seeding date.
std::vector<FieldSeasonRecord> load_records(const std::string& fields_path,
                                            const std::string& weather_path,
                                            const std::string& applications_path,
                                            const std::string& products_path);

// Imputation (per-field linear interpolation, then per-field median), global
// soil mode, pooled IQR clipping of the weather columns, centered rolling-mean
// smoothing, and the application-day window. Records missing their seeding
// date or all weather are dropped into `log`. Already-cleaned records pass
// through untouched, which makes clean idempotent.
std::vector<FieldSeasonRecord> clean(std::vector<FieldSeasonRecord> records,
                                     const CleanPolicy& policy, CleanLog* log = nullptr);

// Events of one nutrient sorted by day; same-day events merge by summing.
NutrientTimeline build_timeline(const FieldSeasonRecord& record, Nutrient nutrient);

// Which columns encode_features emits. The soil vocabulary is fixed at
// training time; unseen labels at predict time encode as all zeros.
struct FeatureSpec {
    std::vector<std::string> soil_vocabulary;  // sorted, unique
    bool co_nutrient_totals = false;           // reproduction mode
    Nutrient target = Nutrient::N;             // excluded from co-nutrient columns

    static FeatureSpec for_records(std::span<const FieldSeasonRecord> records,
                                   bool co_nutrient_totals, Nutrient target);
    std::vector<std::string> column_names() const;
};

// Aggregation windows in days from seeding, inclusive.
inline constexpr std::array<std::pair<int, int>, 4> kWeatherWindows{
    {{0, 60}, {61, 120}, {121, 180}, {181, 240}}};

// Columns, in order: area_ha, seeding day-of-year, soil one-hots (sorted
// labels), then per window mean daily-mean temperature / total rain / total
// sun, then (reproduction mode) each other nutrient's observed season total.
FeatureMatrix encode_features(std::span<const FieldSeasonRecord> records, const FeatureSpec& spec);

// Records whose merged timeline for `nutrient` has exactly k entries, in
// their original order.
std::vector<FieldSeasonRecord> stage2_subset(std::span<const FieldSeasonRecord> records,
                                             Nutrient nutrient, int k);
std::vector<std::size_t> stage2_subset_indices(std::span<const FieldSeasonRecord> records,
                                               Nutrient nutrient, int k);

}  // namespace agritime::dataset
