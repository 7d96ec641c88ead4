#include "agritime/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "agritime/csv.hpp"
#include "agritime/rng.hpp"

namespace agritime::synth {

using dataset::ApplicationEvent;
using dataset::FieldSeasonRecord;
using dataset::Nutrient;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr int kSeasonDays = 365;
constexpr int kSeedingYear = 2021;

// Single-nutrient carrier products. Power-of-two fractions make
// qty -> rate -> qty round-trips through the CSVs bitwise exact.
struct CarrierProduct {
    Nutrient nutrient;
    const char* name;
    double fraction;
};

constexpr std::array<CarrierProduct, 4> kCarriers{{
    {Nutrient::N, "an_50", 0.5},
    {Nutrient::K, "mop_50", 0.5},
    {Nutrient::S, "sulphur_50", 0.5},
    {Nutrient::Mg, "kieserite_25", 0.25},
}};

const CarrierProduct& carrier_for(Nutrient n) {
    for (const auto& c : kCarriers)
        if (c.nutrient == n) return c;
    throw std::logic_error("no carrier product for nutrient");
}

double daily_tmean(int doy) { return 10.0 + 6.0 * std::sin(kTwoPi * (doy - 105) / 365.0); }
// Flat-ish rain seasonality: the per-field wet/dry factor, not the calendar,
// should dominate the spring total.
double daily_rain_base(int doy) { return 2.1 + 0.25 * std::sin(kTwoPi * (doy - 300) / 365.0); }
double daily_sun_base(int doy) { return 3.8 + 3.2 * std::sin(kTwoPi * (doy - 105) / 365.0); }

struct FieldDraw {
    FieldSeasonRecord record;
    double autumn_temp_mean = 0.0;  // days 0-60 daily-mean temperature
    double spring_rain_total = 0.0;  // days 121-180 rain
};

FieldDraw draw_field(const SynthConfig& config, int index) {
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(index)));
    FieldDraw draw;
    FieldSeasonRecord& r = draw.record;

    r.field_id = "F" + std::to_string(index + 1);
    r.soil_type = config.soil_vocabulary[rng.below(config.soil_vocabulary.size())];
    r.area_ha = rng.uniform(5.0, 60.0);
    r.seeding_date = Date{kSeedingYear, 10, 1 + static_cast<int>(rng.below(31))};

    const double temp_offset = rng.normal(0.0, 1.2);
    // A deliberate gap around 1.0 keeps spring rain totals away from the
    // nitrogen threshold, so the count labels have a usable margin.
    const double rain_factor =
        rng.uniform() < 0.5 ? rng.uniform(0.50, 0.85) : rng.uniform(1.15, 1.50);

    double autumn_temp_sum = 0.0;
    int autumn_days = 0;
    r.weather.reserve(kSeasonDays);
    for (int d = 0; d < kSeasonDays; ++d) {
        dataset::DailyWeather w;
        w.date = add_days(*r.seeding_date, d);
        const int doy = day_of_year(w.date);

        const double tmean = daily_tmean(doy) + temp_offset + rng.normal(0.0, 1.2);
        const double spread = 7.0 + 2.0 * rng.uniform();
        w.tmin_c = tmean - spread / 2.0;
        w.tmax_c = tmean + spread / 2.0;
        w.rain_mm = std::max(0.0, rain_factor * daily_rain_base(doy) + rng.normal(0.0, 0.6));
        w.sun_hours = std::max(0.0, daily_sun_base(doy) + rng.normal(0.0, 0.9));
        w.wind_kph = std::max(0.0, 15.0 + rng.normal(0.0, 4.0));
        w.humidity_pct = std::clamp(82.0 - 8.0 * std::sin(kTwoPi * (doy - 105) / 365.0) + rng.normal(0.0, 3.0),
                                    30.0, 100.0);
        r.weather.push_back(w);

        if (d <= 60) {
            autumn_temp_sum += (w.tmin_c + w.tmax_c) / 2.0;
            ++autumn_days;
        }
        if (d >= 121 && d <= 180) draw.spring_rain_total += w.rain_mm;
    }
    draw.autumn_temp_mean = autumn_temp_sum / static_cast<double>(autumn_days);
    return draw;
}

int day_offset_for(const FieldDraw& draw, const RuleTable& rules) {
    const double shift = rules.day_shift_per_degc * (draw.autumn_temp_mean - rules.autumn_temp_ref_c);
    const long rounded = std::lround(shift);
    return static_cast<int>(std::clamp<long>(rounded, -rules.max_day_offset, rules.max_day_offset));
}

}  // namespace

int nitrogen_count_rule(const FieldSeasonRecord& record, const RuleTable& rules) {
    if (!record.seeding_date) throw std::invalid_argument("nitrogen_count_rule: no seeding date");
    double spring_rain = 0.0;
    for (const auto& w : record.weather) {
        const int day = days_between(*record.seeding_date, w.date);
        if (day >= 121 && day <= 180) spring_rain += w.rain_mm;
    }
    return spring_rain > rules.spring_rain_threshold_mm ? 3 : 2;
}

SynthResult generate(const SynthConfig& config) {
    if (config.n_fields < 0) throw std::invalid_argument("n_fields must be >= 0");
    if (!(config.noise_level >= 0.0) || !(config.noise_level <= 1.0))
        throw std::invalid_argument("noise_level must lie in [0, 1]");
    if (config.soil_vocabulary.empty())
        throw std::invalid_argument("soil vocabulary must not be empty");

    const RuleTable& rules = config.rules;
    SynthResult result;
    result.records.reserve(static_cast<std::size_t>(config.n_fields));

    for (int index = 0; index < config.n_fields; ++index) {
        FieldDraw draw = draw_field(config, index);
        FieldSeasonRecord& r = draw.record;
        // Perturbations ride a separate stream so the weather stays identical
        // across noise levels.
        Rng noise_rng(mix_seed(mix_seed(config.seed, 0x4015e), static_cast<std::uint64_t>(index)));
        const double noise = config.noise_level;
        const int offset = day_offset_for(draw, rules);

        struct PlannedApp {
            Nutrient nutrient;
            int day;
            double qty;
        };
        std::vector<PlannedApp> plan;

        const int n_count = draw.spring_rain_total > rules.spring_rain_threshold_mm ? 3 : 2;
        for (int i = 0; i < n_count; ++i)
            plan.push_back({Nutrient::N, rules.n_base_day[static_cast<std::size_t>(i)] + offset,
                            rules.n_base_qty[static_cast<std::size_t>(i)]});

        const bool k_applied = r.soil_type == "sandy" || r.area_ha < rules.k_small_field_ha;
        if (k_applied) plan.push_back({Nutrient::K, rules.k_base_day + offset, rules.k_qty});
        if (r.soil_type == "clay" || r.soil_type == "loam")
            plan.push_back({Nutrient::S, rules.s_base_day + offset, rules.s_qty});
        if (r.soil_type == "loam" || r.soil_type == "peat")
            plan.push_back({Nutrient::Mg, rules.mg_base_day + offset, rules.mg_qty});

        for (auto& app : plan) {
            if (noise > 0.0) {
                app.qty = std::max(0.0, app.qty + noise_rng.normal(0.0, 5.0 * noise));
                app.day += static_cast<int>(std::lround(noise_rng.normal(0.0, 7.0 * noise)));
            }
            app.day = std::clamp(app.day, -30, 330);
            r.applications.push_back(ApplicationEvent{app.nutrient, app.day, app.qty});
        }

        double total_n = 0.0;
        for (const auto& app : r.applications)
            if (app.nutrient == Nutrient::N) total_n += app.qty_kg_ha;
        const double deviation = total_n - rules.yield_optimal_total;
        double yield = rules.yield_base_t_ha + rules.yield_per_kg * total_n -
                       rules.yield_quad * deviation * deviation +
                       rules.yield_area_coeff * (r.area_ha - 32.5);
        if (noise > 0.0) yield += noise_rng.normal(0.0, 0.4 * noise);
        r.yield_t_ha = std::max(0.0, yield);

        // Synthetic seasons are complete and in-range by construction.
        r.cleaned = true;

        for (Nutrient nutrient : dataset::all_nutrients()) {
            GroundTruth truth;
            truth.field_id = r.field_id;
            truth.nutrient = nutrient;
            const auto timeline = dataset::build_timeline(r, nutrient);
            truth.count = static_cast<int>(timeline.entries.size());
            for (const auto& e : timeline.entries) {
                truth.days.push_back(e.day);
                truth.qtys.push_back(e.qty_kg_ha);
            }
            result.truths.push_back(std::move(truth));
        }
        result.records.push_back(std::move(r));
    }
    return result;
}

std::array<std::string, 5> write_csvs(const SynthResult& result, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::array<std::string, 5> paths{
        (fs::path(dir) / "fields.csv").string(),       (fs::path(dir) / "weather.csv").string(),
        (fs::path(dir) / "applications.csv").string(), (fs::path(dir) / "products.csv").string(),
        (fs::path(dir) / "ground_truth.csv").string()};

    CsvWriter fields({"field_id", "area_ha", "soil_type", "seeding_date", "yield_t_ha"});
    for (const auto& r : result.records) {
        fields.add_row({r.field_id, format_double(r.area_ha), r.soil_type,
                        format_date(*r.seeding_date),
                        r.yield_t_ha ? format_double(*r.yield_t_ha) : ""});
    }
    fields.write_file(paths[0]);

    CsvWriter weather(
        {"field_id", "date", "tmin_c", "tmax_c", "rain_mm", "sun_hours", "wind_kph", "humidity_pct"});
    for (const auto& r : result.records) {
        for (const auto& w : r.weather) {
            weather.add_row({r.field_id, format_date(w.date), format_double(w.tmin_c),
                             format_double(w.tmax_c), format_double(w.rain_mm),
                             format_double(w.sun_hours), format_double(w.wind_kph),
                             format_double(w.humidity_pct)});
        }
    }
    weather.write_file(paths[1]);

    CsvWriter apps({"field_id", "date", "product", "rate_kg_ha"});
    for (const auto& r : result.records) {
        for (const auto& app : r.applications) {
            const CarrierProduct& carrier = carrier_for(app.nutrient);
            apps.add_row({r.field_id, format_date(add_days(*r.seeding_date, app.day)), carrier.name,
                          format_double(app.qty_kg_ha / carrier.fraction)});
        }
    }
    apps.write_file(paths[2]);

    CsvWriter products(
        {"product", "n_frac", "p_frac", "k_frac", "s_frac", "mg_frac", "b_frac", "mn_frac", "ca_frac"});
    for (const auto& carrier : kCarriers) {
        std::vector<std::string> row{carrier.name};
        for (Nutrient n : dataset::all_nutrients())
            row.push_back(n == carrier.nutrient ? format_double(carrier.fraction) : "0");
        products.add_row(std::move(row));
    }
    products.write_file(paths[3]);

    CsvWriter truth({"field_id", "nutrient", "count", "days", "qtys"});
    for (const auto& t : result.truths) {
        std::string days, qtys;
        for (std::size_t i = 0; i < t.days.size(); ++i) {
            if (i) {
                days += ';';
                qtys += ';';
            }
            days += std::to_string(t.days[i]);
            qtys += format_double(t.qtys[i]);
        }
        truth.add_row({t.field_id, std::string(dataset::nutrient_name(t.nutrient)),
                       std::to_string(t.count), days, qtys});
    }
    truth.write_file(paths[4]);
    return paths;
}

}  // namespace agritime::synth
