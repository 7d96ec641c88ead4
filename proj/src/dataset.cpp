#include "agritime/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "agritime/csv.hpp"

namespace agritime::dataset {

namespace {

constexpr std::array<std::string_view, kNutrientCount> kNutrientNames{"N", "P", "K", "S",
                                                                      "Mg", "B", "Mn", "Ca"};

}  // namespace

std::string_view nutrient_name(Nutrient n) {
    return kNutrientNames[static_cast<std::size_t>(n)];
}

std::optional<Nutrient> nutrient_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNutrientNames.size(); ++i)
        if (kNutrientNames[i] == name) return static_cast<Nutrient>(i);
    return std::nullopt;
}

double weather_value(const DailyWeather& w, int var) {
    switch (var) {
        case 0: return w.tmin_c;
        case 1: return w.tmax_c;
        case 2: return w.rain_mm;
        case 3: return w.sun_hours;
        case 4: return w.wind_kph;
        case 5: return w.humidity_pct;
    }
    throw std::out_of_range("weather variable index");
}

void set_weather_value(DailyWeather& w, int var, double value) {
    switch (var) {
        case 0: w.tmin_c = value; return;
        case 1: w.tmax_c = value; return;
        case 2: w.rain_mm = value; return;
        case 3: w.sun_hours = value; return;
        case 4: w.wind_kph = value; return;
        case 5: w.humidity_pct = value; return;
    }
    throw std::out_of_range("weather variable index");
}

std::string ProductCompositionTable::normalize_key(std::string_view product) {
    std::string key;
    std::size_t begin = 0, end = product.size();
    while (begin < end && (product[begin] == ' ' || product[begin] == '\t')) ++begin;
    while (end > begin && (product[end - 1] == ' ' || product[end - 1] == '\t')) --end;
    for (std::size_t i = begin; i < end; ++i) {
        char c = product[i];
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        key += c;
    }
    return key;
}

void ProductCompositionTable::add(std::string_view product, const Fractions& fractions) {
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0) || !(f <= 1.0))
            throw std::invalid_argument("product '" + std::string(product) +
                                        "': fractions must lie in [0, 1]");
        sum += f;
    }
    if (sum > 1.0 + 1e-9)
        throw std::invalid_argument("product '" + std::string(product) +
                                    "': fractions sum above 1");
    table_[normalize_key(product)] = fractions;
}

const ProductCompositionTable::Fractions* ProductCompositionTable::find(std::string_view product) const {
    const auto it = table_.find(normalize_key(product));
    return it == table_.end() ? nullptr : &it->second;
}

ProductCompositionTable ProductCompositionTable::from_csv(const std::string& path) {
    const CsvTable csv = read_csv(path);
    const std::size_t product_col = csv.column("product");
    std::array<std::size_t, kNutrientCount> frac_col{};
    static constexpr std::array<std::string_view, kNutrientCount> frac_names{
        "n_frac", "p_frac", "k_frac", "s_frac", "mg_frac", "b_frac", "mn_frac", "ca_frac"};
    for (int i = 0; i < kNutrientCount; ++i)
        frac_col[static_cast<std::size_t>(i)] = csv.column(frac_names[static_cast<std::size_t>(i)]);

    ProductCompositionTable table;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        Fractions fractions{};
        for (int i = 0; i < kNutrientCount; ++i)
            fractions[static_cast<std::size_t>(i)] = csv.number(r, frac_col[static_cast<std::size_t>(i)]);
        try {
            table.add(csv.cell(r, product_col), fractions);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ", line " + std::to_string(csv.file_line(r)) + ": " + e.what());
        }
    }
    return table;
}

std::vector<FieldSeasonRecord> load_records(const std::string& fields_path,
                                            const std::string& weather_path,
                                            const std::string& applications_path,
                                            const std::string& products_path) {
    const ProductCompositionTable products = ProductCompositionTable::from_csv(products_path);

    const CsvTable fields = read_csv(fields_path);
    const std::size_t f_id = fields.column("field_id");
    const std::size_t f_area = fields.column("area_ha");
    const std::size_t f_soil = fields.column("soil_type");
    const std::size_t f_seed = fields.column("seeding_date");
    const std::size_t f_yield = fields.column("yield_t_ha");

    std::vector<FieldSeasonRecord> records;
    std::unordered_map<std::string, std::size_t> index_by_id;
    for (std::size_t r = 0; r < fields.rows.size(); ++r) {
        FieldSeasonRecord record;
        record.field_id = fields.cell(r, f_id);
        if (record.field_id.empty())
            throw std::runtime_error(fields_path + ", line " + std::to_string(fields.file_line(r)) +
                                     ", column 'field_id': empty identifier");
        if (index_by_id.count(record.field_id))
            throw std::runtime_error(fields_path + ", line " + std::to_string(fields.file_line(r)) +
                                     ": duplicate field_id '" + record.field_id + "'");
        record.area_ha = fields.number(r, f_area);
        if (!(record.area_ha > 0.0))
            throw std::runtime_error(fields_path + ", line " + std::to_string(fields.file_line(r)) +
                                     ", column 'area_ha': must be > 0");
        record.soil_type = fields.cell(r, f_soil);
        const std::string& seed_cell = fields.cell(r, f_seed);
        if (!seed_cell.empty()) {
            try {
                record.seeding_date = parse_date(seed_cell);
            } catch (const std::exception& e) {
                throw std::runtime_error(fields_path + ", line " + std::to_string(fields.file_line(r)) +
                                         ", column 'seeding_date': " + e.what());
            }
        }
        record.yield_t_ha = fields.optional_number(r, f_yield);
        if (record.yield_t_ha && *record.yield_t_ha < 0.0)
            throw std::runtime_error(fields_path + ", line " + std::to_string(fields.file_line(r)) +
                                     ", column 'yield_t_ha': must be >= 0");
        index_by_id[record.field_id] = records.size();
        records.push_back(std::move(record));
    }

    const CsvTable weather = read_csv(weather_path);
    const std::size_t w_id = weather.column("field_id");
    const std::size_t w_date = weather.column("date");
    const std::array<std::size_t, kWeatherVarCount> w_vars{
        weather.column("tmin_c"),   weather.column("tmax_c"),   weather.column("rain_mm"),
        weather.column("sun_hours"), weather.column("wind_kph"), weather.column("humidity_pct")};
    for (std::size_t r = 0; r < weather.rows.size(); ++r) {
        const auto it = index_by_id.find(weather.cell(r, w_id));
        if (it == index_by_id.end()) continue;  // weather for fields outside this extract
        DailyWeather day;
        try {
            day.date = parse_date(weather.cell(r, w_date));
        } catch (const std::exception& e) {
            throw std::runtime_error(weather_path + ", line " + std::to_string(weather.file_line(r)) +
                                     ", column 'date': " + e.what());
        }
        for (int v = 0; v < kWeatherVarCount; ++v) {
            const auto value = weather.optional_number(r, w_vars[static_cast<std::size_t>(v)]);
            set_weather_value(day, v, value ? *value : std::nan(""));
        }
        records[it->second].weather.push_back(day);
    }
    for (auto& record : records) {
        std::sort(record.weather.begin(), record.weather.end(),
                  [](const DailyWeather& a, const DailyWeather& b) { return a.date < b.date; });
        for (std::size_t i = 1; i < record.weather.size(); ++i)
            if (record.weather[i].date == record.weather[i - 1].date)
                throw std::runtime_error(weather_path + ": duplicate weather date " +
                                         format_date(record.weather[i].date) + " for field '" +
                                         record.field_id + "'");
    }

    const CsvTable apps = read_csv(applications_path);
    const std::size_t a_id = apps.column("field_id");
    const std::size_t a_date = apps.column("date");
    const std::size_t a_product = apps.column("product");
    const std::size_t a_rate = apps.column("rate_kg_ha");
    for (std::size_t r = 0; r < apps.rows.size(); ++r) {
        const auto it = index_by_id.find(apps.cell(r, a_id));
        if (it == index_by_id.end())
            throw std::runtime_error(applications_path + ", line " + std::to_string(apps.file_line(r)) +
                                     ": application for unknown field_id '" + apps.cell(r, a_id) + "'");
        FieldSeasonRecord& record = records[it->second];
        Date date;
        try {
            date = parse_date(apps.cell(r, a_date));
        } catch (const std::exception& e) {
            throw std::runtime_error(applications_path + ", line " + std::to_string(apps.file_line(r)) +
                                     ", column 'date': " + e.what());
        }
        const double rate = apps.number(r, a_rate);
        if (!(rate >= 0.0))
            throw std::runtime_error(applications_path + ", line " + std::to_string(apps.file_line(r)) +
                                     ", column 'rate_kg_ha': must be >= 0");
        const auto* fractions = products.find(apps.cell(r, a_product));
        if (!fractions)
            throw std::runtime_error(applications_path + ", line " + std::to_string(apps.file_line(r)) +
                                     ": unknown product '" + apps.cell(r, a_product) + "'");
        // Day offsets only exist relative to a seeding date; undated records
        // are dropped by clean() anyway.
        const int day = record.seeding_date ? days_between(*record.seeding_date, date) : 0;
        for (int i = 0; i < kNutrientCount; ++i) {
            const double fraction = (*fractions)[static_cast<std::size_t>(i)];
            if (fraction == 0.0) continue;
            record.applications.push_back(
                ApplicationEvent{static_cast<Nutrient>(i), day, rate * fraction});
        }
    }
    return records;
}

namespace {

// Linear interpolation over the day axis for interior gaps; per-field median
// of the column for anything the interpolation cannot reach.
bool impute_column(FieldSeasonRecord& record, int var) {
    const std::size_t n = record.weather.size();
    std::vector<double> known_values;
    for (const auto& w : record.weather) {
        const double v = weather_value(w, var);
        if (!std::isnan(v)) known_values.push_back(v);
    }
    if (known_values.empty()) return false;  // nothing to impute from

    // interior gaps
    std::int64_t prev_known = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(weather_value(record.weather[i], var))) continue;
        if (prev_known >= 0 && static_cast<std::size_t>(prev_known + 1) < i) {
            const double x0 = static_cast<double>(days_from_civil(record.weather[static_cast<std::size_t>(prev_known)].date));
            const double x1 = static_cast<double>(days_from_civil(record.weather[i].date));
            const double y0 = weather_value(record.weather[static_cast<std::size_t>(prev_known)], var);
            const double y1 = weather_value(record.weather[i], var);
            for (std::size_t j = static_cast<std::size_t>(prev_known) + 1; j < i; ++j) {
                const double xj = static_cast<double>(days_from_civil(record.weather[j].date));
                set_weather_value(record.weather[j], var, y0 + (y1 - y0) * (xj - x0) / (x1 - x0));
            }
        }
        prev_known = static_cast<std::int64_t>(i);
    }

    // leading/trailing gaps fall back to the median
    std::sort(known_values.begin(), known_values.end());
    const std::size_t k = known_values.size();
    const double median = k % 2 ? known_values[k / 2]
                                : (known_values[k / 2 - 1] + known_values[k / 2]) / 2.0;
    for (auto& w : record.weather)
        if (std::isnan(weather_value(w, var))) set_weather_value(w, var, median);
    return true;
}

struct Quartiles {
    double q1 = 0.0;
    double q3 = 0.0;
};

// Type-7 linear interpolation, the common spreadsheet/NumPy default.
Quartiles quartiles(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    auto at = [&](double p) {
        const double idx = p * static_cast<double>(values.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = idx - static_cast<double>(lo);
        return values[lo] + (values[hi] - values[lo]) * frac;
    };
    return {at(0.25), at(0.75)};
}

void smooth_column(FieldSeasonRecord& record, int var, int window) {
    if (window <= 1 || record.weather.size() < 2) return;
    const int half = window / 2;
    const int n = static_cast<int>(record.weather.size());
    std::vector<double> smoothed(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        // Symmetric shrink near the edges keeps the window centered.
        const int reach = std::min({half, i, n - 1 - i});
        double sum = 0.0;
        for (int j = i - reach; j <= i + reach; ++j)
            sum += weather_value(record.weather[static_cast<std::size_t>(j)], var);
        smoothed[static_cast<std::size_t>(i)] = sum / static_cast<double>(2 * reach + 1);
    }
    for (int i = 0; i < n; ++i)
        set_weather_value(record.weather[static_cast<std::size_t>(i)], var, smoothed[static_cast<std::size_t>(i)]);
}

}  // namespace

std::vector<FieldSeasonRecord> clean(std::vector<FieldSeasonRecord> records,
                                     const CleanPolicy& policy, CleanLog* log) {
    CleanLog local;
    CleanLog& out = log ? *log : local;

    // Global soil mode over the incoming batch; alphabetical tie-break.
    std::map<std::string, std::size_t> soil_counts;
    for (const auto& r : records)
        if (!r.soil_type.empty()) ++soil_counts[r.soil_type];
    std::string soil_mode = "unknown";
    std::size_t best_count = 0;
    for (const auto& [label, count] : soil_counts) {
        if (count > best_count) {
            soil_mode = label;
            best_count = count;
        }
    }

    std::vector<FieldSeasonRecord> result;
    std::vector<std::size_t> dirty;  // indices into result that still need cleaning
    result.reserve(records.size());
    for (auto& record : records) {
        if (record.cleaned) {
            result.push_back(std::move(record));
            continue;
        }
        if (!record.seeding_date) {
            out.dropped_records.push_back(record.field_id + ": missing seeding_date");
            continue;
        }
        if (record.weather.empty()) {
            out.dropped_records.push_back(record.field_id + ": no weather data");
            continue;
        }
        bool imputable = true;
        for (int var = 0; var < kWeatherVarCount && imputable; ++var)
            imputable = impute_column(record, var);
        if (!imputable) {
            out.dropped_records.push_back(record.field_id + ": weather column entirely missing");
            continue;
        }
        if (record.soil_type.empty()) record.soil_type = soil_mode;
        dirty.push_back(result.size());
        result.push_back(std::move(record));
    }

    // Outlier clip per weather column, pooled over every record being cleaned.
    for (int var = 0; var < kWeatherVarCount; ++var) {
        std::vector<double> pooled;
        for (std::size_t idx : dirty)
            for (const auto& w : result[idx].weather) pooled.push_back(weather_value(w, var));
        if (pooled.size() < 2) continue;
        const Quartiles q = quartiles(pooled);
        const double iqr = q.q3 - q.q1;
        const double lo = q.q1 - policy.iqr_multiplier * iqr;
        const double hi = q.q3 + policy.iqr_multiplier * iqr;
        for (std::size_t idx : dirty)
            for (auto& w : result[idx].weather)
                set_weather_value(w, var, std::clamp(weather_value(w, var), lo, hi));
    }

    for (std::size_t idx : dirty) {
        FieldSeasonRecord& record = result[idx];
        for (int var = 0; var < kWeatherVarCount; ++var)
            smooth_column(record, var, policy.smoothing_window);

        std::vector<ApplicationEvent> kept;
        kept.reserve(record.applications.size());
        for (const auto& app : record.applications) {
            if (app.day >= policy.app_day_min && app.day <= policy.app_day_max)
                kept.push_back(app);
            else
                ++out.dropped_events;
        }
        record.applications = std::move(kept);
        record.cleaned = true;
    }
    return result;
}

NutrientTimeline build_timeline(const FieldSeasonRecord& record, Nutrient nutrient) {
    NutrientTimeline timeline;
    timeline.nutrient = nutrient;
    timeline.expected_yield_t_ha = record.yield_t_ha;

    std::map<int, double> by_day;
    for (const auto& app : record.applications)
        if (app.nutrient == nutrient) by_day[app.day] += app.qty_kg_ha;

    double total = 0.0;
    for (const auto& [day, qty] : by_day) {
        timeline.entries.push_back(TimelineEntry{day, qty});
        total += qty;
    }
    timeline.total_qty_kg_ha = total;
    return timeline;
}

FeatureSpec FeatureSpec::for_records(std::span<const FieldSeasonRecord> records,
                                     bool co_nutrient_totals, Nutrient target) {
    FeatureSpec spec;
    spec.co_nutrient_totals = co_nutrient_totals;
    spec.target = target;
    for (const auto& r : records)
        if (!r.soil_type.empty()) spec.soil_vocabulary.push_back(r.soil_type);
    std::sort(spec.soil_vocabulary.begin(), spec.soil_vocabulary.end());
    spec.soil_vocabulary.erase(std::unique(spec.soil_vocabulary.begin(), spec.soil_vocabulary.end()),
                               spec.soil_vocabulary.end());
    return spec;
}

std::vector<std::string> FeatureSpec::column_names() const {
    std::vector<std::string> names{"area_ha", "seeding_doy"};
    for (const auto& label : soil_vocabulary) names.push_back("soil=" + label);
    for (const auto& [lo, hi] : kWeatherWindows) {
        const std::string suffix = "_d" + std::to_string(lo) + "_" + std::to_string(hi);
        names.push_back("tmean" + suffix);
        names.push_back("rain" + suffix);
        names.push_back("sun" + suffix);
    }
    if (co_nutrient_totals) {
        for (Nutrient n : all_nutrients())
            if (n != target) names.push_back("total_" + std::string(nutrient_name(n)));
    }
    return names;
}

FeatureMatrix encode_features(std::span<const FieldSeasonRecord> records, const FeatureSpec& spec) {
    FeatureMatrix fm;
    fm.column_names = spec.column_names();
    fm.column_kinds.assign(fm.column_names.size(), ColumnKind::numeric);
    for (std::size_t j = 0; j < spec.soil_vocabulary.size(); ++j)
        fm.column_kinds[2 + j] = ColumnKind::one_hot;
    fm.values = Matrix(records.size(), fm.column_names.size());

    for (std::size_t i = 0; i < records.size(); ++i) {
        const FieldSeasonRecord& r = records[i];
        if (!r.seeding_date)
            throw std::invalid_argument("encode_features: record '" + r.field_id +
                                        "' lacks a seeding date (clean first)");
        fm.row_ids.push_back(r.field_id);
        std::size_t col = 0;
        fm.values(i, col++) = r.area_ha;
        fm.values(i, col++) = static_cast<double>(day_of_year(*r.seeding_date));
        for (const auto& label : spec.soil_vocabulary)
            fm.values(i, col++) = r.soil_type == label ? 1.0 : 0.0;

        // Window aggregates. An empty window reports zero rain/sun and falls
        // back to the record's mean temperature over the whole aggregate span.
        double span_temp_sum = 0.0;
        std::size_t span_temp_count = 0;
        const int span_lo = kWeatherWindows.front().first;
        const int span_hi = kWeatherWindows.back().second;
        for (const auto& w : r.weather) {
            const int day = days_between(*r.seeding_date, w.date);
            if (day < span_lo || day > span_hi) continue;
            span_temp_sum += (w.tmin_c + w.tmax_c) / 2.0;
            ++span_temp_count;
        }
        const double fallback_temp = span_temp_count ? span_temp_sum / static_cast<double>(span_temp_count) : 0.0;

        for (const auto& [lo, hi] : kWeatherWindows) {
            double temp_sum = 0.0, rain = 0.0, sun = 0.0;
            std::size_t days = 0;
            for (const auto& w : r.weather) {
                const int day = days_between(*r.seeding_date, w.date);
                if (day < lo || day > hi) continue;
                temp_sum += (w.tmin_c + w.tmax_c) / 2.0;
                rain += w.rain_mm;
                sun += w.sun_hours;
                ++days;
            }
            fm.values(i, col++) = days ? temp_sum / static_cast<double>(days) : fallback_temp;
            fm.values(i, col++) = rain;
            fm.values(i, col++) = sun;
        }

        if (spec.co_nutrient_totals) {
            for (Nutrient n : all_nutrients()) {
                if (n == spec.target) continue;
                fm.values(i, col++) = build_timeline(r, n).total_qty_kg_ha;
            }
        }
    }
    if (!fm.values.all_finite())
        throw std::runtime_error("encode_features: non-finite value produced; input not cleaned?");
    return fm;
}

std::vector<std::size_t> stage2_subset_indices(std::span<const FieldSeasonRecord> records,
                                               Nutrient nutrient, int k) {
    if (k < 0) throw std::invalid_argument("stage2_subset: k must be >= 0");
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (build_timeline(records[i], nutrient).entries.size() == static_cast<std::size_t>(k))
            indices.push_back(i);
    return indices;
}

std::vector<FieldSeasonRecord> stage2_subset(std::span<const FieldSeasonRecord> records,
                                             Nutrient nutrient, int k) {
    std::vector<FieldSeasonRecord> subset;
    for (std::size_t i : stage2_subset_indices(records, nutrient, k)) subset.push_back(records[i]);
    return subset;
}

}  // namespace agritime::dataset
