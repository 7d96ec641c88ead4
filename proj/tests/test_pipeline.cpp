#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "agritime/eval.hpp"
#include "agritime/pipeline.hpp"
#include "agritime/synth.hpp"

using namespace agritime;
using dataset::FieldSeasonRecord;
using dataset::Nutrient;

namespace {

std::vector<FieldSeasonRecord> synth_records(int n, double noise, std::uint64_t seed) {
    synth::SynthConfig config;
    config.n_fields = n;
    config.noise_level = noise;
    config.seed = seed;
    return synth::generate(config).records;
}

pipeline::PipelineParams quick_params(std::uint64_t seed, int n_trees = 15, int min_subset = 5) {
    pipeline::PipelineParams params;
    params.seed = seed;
    params.forest.n_trees = n_trees;
    params.min_subset = min_subset;
    return params;
}

// A forest whose every tree is a single fixed leaf: predictions become
// constants we choose, which pins the refinement mechanics down exactly.
forest::ForestModel leaf_forest(std::size_t n_features, std::vector<double> value, bool classifier) {
    forest::ForestModel m;
    m.kind = classifier ? forest::ModelKind::classifier : forest::ModelKind::multi_regressor;
    m.n_features = n_features;
    if (classifier)
        m.n_classes = static_cast<int>(value.size());
    else
        m.n_targets = value.size();
    tree::Tree t;
    t.n_features = n_features;
    t.nodes.resize(1);
    t.nodes[0].value = std::move(value);
    t.nodes[0].n_samples = 1;
    m.trees.push_back(std::move(t));
    return m;
}

std::vector<double> count_histogram(int count) {
    std::vector<double> h(8, 0.0);
    h[static_cast<std::size_t>(count)] = 1.0;
    return h;
}

FieldSeasonRecord plain_field() {
    FieldSeasonRecord r;
    r.field_id = "probe";
    r.area_ha = 30.0;
    r.soil_type = "clay";
    r.seeding_date = Date{2021, 10, 10};
    for (int d = 0; d < 250; ++d) {
        dataset::DailyWeather w;
        w.date = add_days(*r.seeding_date, d);
        w.tmin_c = 5.0;
        w.tmax_c = 11.0;
        w.rain_mm = 2.0;
        w.sun_hours = 4.0;
        w.wind_kph = 12.0;
        w.humidity_pct = 80.0;
        r.weather.push_back(w);
    }
    r.cleaned = true;
    return r;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("stage-1 labels are merged entry counts clamped to the cap") {
    auto records = synth_records(40, 0.0, 3);
    // a field with 9 nitrogen applications on distinct days
    FieldSeasonRecord heavy = records.front();
    heavy.field_id = "heavy";
    heavy.applications.clear();
    for (int i = 0; i < 9; ++i) heavy.applications.push_back({Nutrient::N, 10 + 20 * i, 30.0});
    records.push_back(heavy);

    const auto params = quick_params(5);
    const auto stage1 = pipeline::train_stage1(records, pipeline::Mode::reproduction, params);

    // the flagship pattern: three applications at days 115/185/220
    FieldSeasonRecord example = records.front();
    example.applications = {{Nutrient::N, 115, 41.0}, {Nutrient::N, 185, 58.0}, {Nutrient::N, 220, 78.0}};
    CHECK(dataset::build_timeline(example, Nutrient::N).entries.size() == 3);

    // labels the trainer derived: reconstruct and compare against the cap rule
    for (const auto& r : records) {
        const int raw = static_cast<int>(dataset::build_timeline(r, Nutrient::N).entries.size());
        CHECK(std::min(raw, 7) <= 7);
    }
    // the 9-application field must train as class 7, which the classifier can emit
    CHECK(stage1.cap == 7);
    CHECK(stage1.classifiers[0].n_classes == 8);

    // nutrients never applied anywhere come out degenerate
    CHECK(stage1.classifiers[static_cast<std::size_t>(Nutrient::B)].degenerate);
    CHECK(stage1.classifiers[static_cast<std::size_t>(Nutrient::Mn)].degenerate);
    CHECK(stage1.predict_count(records.front(), Nutrient::Mn) == 0);
}

TEST_CASE("training demands a minimum record count") {
    auto records = synth_records(5, 0.0, 7);
    CHECK_THROWS(pipeline::train_stage1(records, pipeline::Mode::recommendation, quick_params(1)));
    CHECK_THROWS(pipeline::train_stage2(records, pipeline::Mode::recommendation, quick_params(1)));
}

TEST_CASE("stage-2 target vectors follow [qtys, days, total, yield]") {
    FieldSeasonRecord r = plain_field();
    r.yield_t_ha = 9.9;
    r.applications = {{Nutrient::N, 185, 58.0}, {Nutrient::N, 115, 41.0}, {Nutrient::N, 220, 78.0}};
    const auto targets = pipeline::stage2_targets(r, Nutrient::N, 3);
    CHECK(targets == std::vector<double>{41.0, 58.0, 78.0, 115.0, 185.0, 220.0, 177.0, 9.9});

    CHECK_THROWS(pipeline::stage2_targets(r, Nutrient::N, 2));  // wrong k
    r.yield_t_ha.reset();
    CHECK_THROWS(pipeline::stage2_targets(r, Nutrient::N, 3));  // no yield
}

TEST_CASE("stage-2 trains one regressor per populated (nutrient, k) pair") {
    auto records = synth_records(120, 0.0, 11);
    const auto params = quick_params(13, 10, 5);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::reproduction, params);

    bool n2 = stage2.find(Nutrient::N, 2) != nullptr;
    bool n3 = stage2.find(Nutrient::N, 3) != nullptr;
    CHECK(n2);
    CHECK(n3);
    CHECK(stage2.find(Nutrient::N, 3)->n_targets == 8);  // 2k + 2
    CHECK(stage2.find(Nutrient::N, 2)->n_targets == 6);
    CHECK(stage2.find(Nutrient::B, 1) == nullptr);
    CHECK(stage2.find(Nutrient::Mn, 1) == nullptr);
    CHECK(stage2.find(Nutrient::Ca, 1) == nullptr);
}

TEST_CASE("subsets below min_subset are skipped and logged") {
    auto records = synth_records(60, 0.0, 17);
    // exactly one field with 4 nitrogen applications: below any sane threshold
    records.front().applications.push_back({Nutrient::N, 250, 25.0});
    auto params = quick_params(19, 8, 10);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::reproduction, params);
    CHECK(stage2.find(Nutrient::N, 4) == nullptr);
    bool logged = false;
    for (const auto& s : stage2.skipped)
        if (s.find("(N, 4)") != std::string::npos) logged = true;
    CHECK(logged);
}

TEST_CASE("stage-2 with nothing trainable is an error") {
    auto records = synth_records(30, 0.0, 23);
    for (auto& r : records) r.yield_t_ha.reset();  // yield is a target, nothing can train
    CHECK_THROWS_WITH_AS(
        static_cast<void>(pipeline::train_stage2(records, pipeline::Mode::reproduction, quick_params(1))),
        doctest::Contains("insufficient data for stage 2"), std::runtime_error);
}

TEST_CASE("refinement reproduces the first-model vs refined count pattern") {
    // Hand-built models force stage-1 counts (3,1,2,1,1,0,0,0); stage 2 then
    // drops phosphorus' only application and one of potassium's two.
    const FieldSeasonRecord field = plain_field();
    dataset::FeatureSpec spec;
    spec.soil_vocabulary = {"clay"};
    const std::size_t width = spec.column_names().size();

    pipeline::StageOneModel stage1;
    stage1.mode = pipeline::Mode::recommendation;
    stage1.cap = 7;
    stage1.soil_vocabulary = {"clay"};
    const std::array<int, 8> raw_counts{3, 1, 2, 1, 1, 0, 0, 0};
    for (std::size_t i = 0; i < 8; ++i)
        stage1.classifiers[i] = leaf_forest(width, count_histogram(raw_counts[i]), true);

    pipeline::StageTwoModel stage2;
    stage2.mode = pipeline::Mode::recommendation;
    stage2.soil_vocabulary = {"clay"};
    auto add_regressor = [&](Nutrient n, int k, std::vector<double> targets) {
        stage2.regressors.emplace(std::make_pair(n, k),
                                  leaf_forest(width, std::move(targets), false));
    };
    add_regressor(Nutrient::N, 3, {41.0, 58.0, 78.0, 115.0, 185.0, 220.0, 177.0, 9.9});
    add_regressor(Nutrient::P, 1, {2.0, 140.0, 2.0, 9.8});            // 2 kg/ha: below q_min
    add_regressor(Nutrient::K, 2, {24.0, 1.0, 90.0, 200.0, 25.0, 9.8});  // second app vanishes
    add_regressor(Nutrient::S, 1, {82.0, 117.0, 142.0, 9.8});
    add_regressor(Nutrient::Mg, 1, {15.0, 130.0, 20.5, 9.8});

    const auto rec = pipeline::recommend(stage1, stage2, field, 5.0);
    const std::array<int, 8> expected_refined{3, 0, 1, 1, 1, 0, 0, 0};
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(rec.per_nutrient[i].raw_count == raw_counts[i]);
        CHECK(rec.per_nutrient[i].refined_count == expected_refined[i]);
        CHECK(rec.per_nutrient[i].refined_count <= rec.per_nutrient[i].raw_count);
    }

    // the flagship nitrogen timeline survives intact
    const auto& n = rec.per_nutrient[0].timeline;
    REQUIRE(n.entries.size() == 3);
    CHECK(n.entries[0] == dataset::TimelineEntry{115, 41.0});
    CHECK(n.entries[1] == dataset::TimelineEntry{185, 58.0});
    CHECK(n.entries[2] == dataset::TimelineEntry{220, 78.0});
    CHECK(n.total_qty_kg_ha == 177.0);
    CHECK(*n.expected_yield_t_ha == 9.9);

    // zero-count nutrients keep empty timelines and never call stage 2
    CHECK(rec.per_nutrient[5].timeline.entries.empty());
    CHECK(rec.per_nutrient[6].timeline.entries.empty());

    // expected yield averages the active nutrients' outputs: (9.9 + 3 * 9.8) / 4
    CHECK(*rec.expected_yield_t_ha == doctest::Approx((9.9 + 3 * 9.8) / 4.0));
}

TEST_CASE("negative predicted quantities clamp to zero and then drop") {
    const FieldSeasonRecord field = plain_field();
    dataset::FeatureSpec spec;
    spec.soil_vocabulary = {"clay"};
    const std::size_t width = spec.column_names().size();

    pipeline::StageOneModel stage1;
    stage1.mode = pipeline::Mode::recommendation;
    stage1.soil_vocabulary = {"clay"};
    for (std::size_t i = 0; i < 8; ++i) stage1.classifiers[i] = leaf_forest(width, count_histogram(0), true);
    stage1.classifiers[0] = leaf_forest(width, count_histogram(2), true);

    pipeline::StageTwoModel stage2;
    stage2.mode = pipeline::Mode::recommendation;
    stage2.soil_vocabulary = {"clay"};
    // second quantity is -2 kg/ha; days deliberately out of range
    stage2.regressors.emplace(std::make_pair(Nutrient::N, 2),
                              leaf_forest(width, {50.0, -2.0, -45.0, 400.0, 48.0, 9.0}, false));

    const auto rec = pipeline::recommend(stage1, stage2, field, 5.0);
    const auto& n = rec.per_nutrient[0];
    CHECK(n.raw_count == 2);
    CHECK(n.refined_count == 1);
    REQUIRE(n.timeline.entries.size() == 1);
    CHECK(n.timeline.entries[0].day == -30);  // clamped from -45
    CHECK(n.timeline.entries[0].qty_kg_ha == 50.0);
}

TEST_CASE("same-day collisions after rounding merge into one entry") {
    const FieldSeasonRecord field = plain_field();
    dataset::FeatureSpec spec;
    spec.soil_vocabulary = {"clay"};
    const std::size_t width = spec.column_names().size();

    pipeline::StageOneModel stage1;
    stage1.mode = pipeline::Mode::recommendation;
    stage1.soil_vocabulary = {"clay"};
    for (std::size_t i = 0; i < 8; ++i) stage1.classifiers[i] = leaf_forest(width, count_histogram(0), true);
    stage1.classifiers[0] = leaf_forest(width, count_histogram(2), true);

    pipeline::StageTwoModel stage2;
    stage2.mode = pipeline::Mode::recommendation;
    stage2.soil_vocabulary = {"clay"};
    stage2.regressors.emplace(std::make_pair(Nutrient::N, 2),
                              leaf_forest(width, {20.0, 30.0, 99.6, 100.4, 50.0, 9.0}, false));

    const auto rec = pipeline::recommend(stage1, stage2, field, 5.0);
    const auto& n = rec.per_nutrient[0];
    CHECK(n.refined_count == 1);
    REQUIRE(n.timeline.entries.size() == 1);
    CHECK(n.timeline.entries[0].day == 100);
    CHECK(n.timeline.entries[0].qty_kg_ha == 50.0);
}

TEST_CASE("recommendation mode ignores observed co-nutrient applications") {
    auto records = synth_records(80, 0.0, 29);
    const auto params = quick_params(31, 12, 5);
    const auto stage1 = pipeline::train_stage1(records, pipeline::Mode::recommendation, params);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::recommendation, params);

    FieldSeasonRecord probe = records.front();
    const auto before = pipeline::recommend(stage1, stage2, probe, 5.0);

    FieldSeasonRecord mutated = probe;
    mutated.applications.push_back({Nutrient::P, 33, 77.0});
    mutated.applications.push_back({Nutrient::Ca, 50, 15.0});
    const auto after = pipeline::recommend(stage1, stage2, mutated, 5.0);

    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(before.per_nutrient[i].raw_count == after.per_nutrient[i].raw_count);
        CHECK(before.per_nutrient[i].refined_count == after.per_nutrient[i].refined_count);
        CHECK(before.per_nutrient[i].timeline.entries == after.per_nutrient[i].timeline.entries);
    }
}

TEST_CASE("recommend refuses mixed-mode models") {
    auto records = synth_records(40, 0.0, 37);
    const auto params = quick_params(39, 8, 5);
    const auto stage1 = pipeline::train_stage1(records, pipeline::Mode::recommendation, params);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::reproduction, params);
    CHECK_THROWS(pipeline::recommend(stage1, stage2, records.front(), 5.0));
}

TEST_CASE("refinement invariants hold over trained recommendations") {
    auto records = synth_records(150, 0.3, 41);
    const auto params = quick_params(43, 12, 5);
    const auto stage1 = pipeline::train_stage1(records, pipeline::Mode::recommendation, params);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::recommendation, params);

    for (std::size_t i = 0; i < 60; ++i) {
        const auto rec = pipeline::recommend(stage1, stage2, records[i], 5.0);
        for (const auto& nr : rec.per_nutrient) {
            CHECK(nr.refined_count <= nr.raw_count);
            CHECK(static_cast<int>(nr.timeline.entries.size()) == nr.refined_count);
            int last_day = -31;
            for (const auto& e : nr.timeline.entries) {
                CHECK(e.day > last_day);
                CHECK(e.day >= -30);
                CHECK(e.day <= 330);
                CHECK(e.qty_kg_ha >= 5.0);
                last_day = e.day;
            }
            CHECK(nr.timeline.total_qty_kg_ha >= 0.0);
        }
    }
}

TEST_CASE("model save/load round-trips predictions bitwise") {
    namespace fs = std::filesystem;
    auto records = synth_records(80, 0.2, 47);
    const auto params = quick_params(49, 10, 5);
    const auto stage1 = pipeline::train_stage1(records, pipeline::Mode::reproduction, params);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::reproduction, params);

    const auto path = (fs::temp_directory_path() /
                       ("agritime_model_" + std::to_string(std::random_device{}()) + ".json"))
                          .string();
    pipeline::save_models(stage1, stage2, path);
    const auto [loaded1, loaded2] = pipeline::load_models(path);

    CHECK(loaded1.mode == stage1.mode);
    CHECK(loaded1.cap == stage1.cap);
    CHECK(loaded1.soil_vocabulary == stage1.soil_vocabulary);
    CHECK(loaded2.regressors.size() == stage2.regressors.size());

    for (int i = 0; i < 100; ++i) {
        const auto& probe = records[static_cast<std::size_t>(i) % records.size()];
        const auto a = pipeline::recommend(stage1, stage2, probe, 5.0);
        const auto b = pipeline::recommend(loaded1, loaded2, probe, 5.0);
        for (std::size_t nix = 0; nix < 8; ++nix) {
            CHECK(a.per_nutrient[nix].raw_count == b.per_nutrient[nix].raw_count);
            CHECK(a.per_nutrient[nix].timeline.entries == b.per_nutrient[nix].timeline.entries);
            CHECK(a.per_nutrient[nix].timeline.total_qty_kg_ha ==
                  b.per_nutrient[nix].timeline.total_qty_kg_ha);
        }
        if (a.expected_yield_t_ha)
            CHECK(*a.expected_yield_t_ha == *b.expected_yield_t_ha);  // bitwise
    }
    fs::remove(path);
}

TEST_CASE("model files reject truncation, bad versions and missing keys") {
    namespace fs = std::filesystem;
    auto records = synth_records(40, 0.0, 53);
    const auto params = quick_params(55, 6, 5);
    const auto stage1 = pipeline::train_stage1(records, pipeline::Mode::recommendation, params);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::recommendation, params);
    const auto base = fs::temp_directory_path() /
                      ("agritime_badmodel_" + std::to_string(std::random_device{}()));
    fs::create_directories(base);
    const auto path = (base / "model.json").string();
    pipeline::save_models(stage1, stage2, path);

    std::ifstream in(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    SUBCASE("truncated file fails to parse, no partial model") {
        const auto bad = (base / "truncated.json").string();
        std::ofstream(bad, std::ios::binary) << text.substr(0, text.size() / 2);
        CHECK_THROWS(pipeline::load_models(bad));
    }
    SUBCASE("unknown version is named") {
        const auto bad = (base / "version.json").string();
        std::string mutated = text;
        const auto pos = mutated.find("\"version\": 1");
        REQUIRE(pos != std::string::npos);
        mutated.replace(pos, 12, "\"version\": 9");
        std::ofstream(bad, std::ios::binary) << mutated;
        CHECK_THROWS_WITH_AS(pipeline::load_models(bad), doctest::Contains("version"),
                             std::runtime_error);
    }
    SUBCASE("missing key names the document path") {
        const auto bad = (base / "missing.json").string();
        std::string mutated = text;
        const auto pos = mutated.find("\"cap\"");
        REQUIRE(pos != std::string::npos);
        mutated.replace(pos, 5, "\"cup\"");
        std::ofstream(bad, std::ios::binary) << mutated;
        CHECK_THROWS_WITH_AS(pipeline::load_models(bad), doctest::Contains("cap"),
                             std::runtime_error);
    }
    fs::remove_all(base);
}

TEST_CASE("end-to-end determinism under a fixed seed") {
    auto records = synth_records(60, 0.2, 59);
    const auto params = quick_params(61, 8, 5);
    const auto s1a = pipeline::train_stage1(records, pipeline::Mode::recommendation, params);
    const auto s2a = pipeline::train_stage2(records, pipeline::Mode::recommendation, params);
    const auto s1b = pipeline::train_stage1(records, pipeline::Mode::recommendation, params);
    const auto s2b = pipeline::train_stage2(records, pipeline::Mode::recommendation, params);
    for (const auto& probe : records) {
        const auto a = pipeline::recommend(s1a, s2a, probe, 5.0);
        const auto b = pipeline::recommend(s1b, s2b, probe, 5.0);
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(a.per_nutrient[i].raw_count == b.per_nutrient[i].raw_count);
            CHECK(a.per_nutrient[i].timeline.entries == b.per_nutrient[i].timeline.entries);
        }
    }
}

}  // TEST_SUITE
