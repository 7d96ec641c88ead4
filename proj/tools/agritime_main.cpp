// agritime: season-long fertiliser application scheduling from field, weather
// and application history data. Subcommands: synth, train, evaluate, recommend.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "agritime/chart.hpp"
#include "agritime/csv.hpp"
#include "agritime/dataset.hpp"
#include "agritime/eval.hpp"
#include "agritime/pipeline.hpp"
#include "agritime/synth.hpp"

namespace fs = std::filesystem;
using namespace agritime;
using json = nlohmann::ordered_json;

namespace {

struct CommonOptions {
    std::string data_dir;
    std::string out_dir = ".";
    std::string model_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string mode = "recommendation";
    bool mode_given = false;
    int n_trees = 200;
    int threads = 1;
    double q_min = 5.0;
    int cv_folds = 10;
    double test_fraction = 0.2;
    double noise = 0.0;
    int n_fields = 3000;
    std::string field_id;
    bool svg = false;
};

std::uint64_t resolve_seed(const CommonOptions& opt) {
    if (opt.seed_given) return opt.seed;
    if (const char* env = std::getenv("AGRITIME_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw std::runtime_error("AGRITIME_SEED is not a number: '" + std::string(env) + "'");
        }
    }
    return 42;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

// Every run leaves its resolved configuration next to its outputs.
void write_run_config(const CommonOptions& opt, const std::string& subcommand,
                      std::uint64_t seed) {
    json config{{"subcommand", subcommand},
                {"data_dir", opt.data_dir},
                {"out", opt.out_dir},
                {"model", opt.model_path},
                {"seed", seed},
                {"mode", opt.mode},
                {"n_trees", opt.n_trees},
                {"threads", opt.threads},
                {"q_min", opt.q_min},
                {"cv_folds", opt.cv_folds},
                {"test_fraction", opt.test_fraction},
                {"noise", opt.noise},
                {"n_fields", opt.n_fields},
                {"field_id", opt.field_id},
                {"svg", opt.svg}};
    write_text((fs::path(opt.out_dir) / "run_config.json").string(), config.dump(2) + "\n");
}

std::vector<dataset::FieldSeasonRecord> load_and_clean(const CommonOptions& opt,
                                                       dataset::CleanLog* log = nullptr) {
    if (opt.data_dir.empty()) throw std::runtime_error("--data-dir is required");
    const fs::path dir(opt.data_dir);
    auto records = dataset::load_records((dir / "fields.csv").string(), (dir / "weather.csv").string(),
                                         (dir / "applications.csv").string(),
                                         (dir / "products.csv").string());
    return dataset::clean(std::move(records), dataset::CleanPolicy{}, log);
}

pipeline::PipelineParams pipeline_params(const CommonOptions& opt, std::uint64_t seed) {
    pipeline::PipelineParams params;
    params.seed = seed;
    params.forest.n_trees = opt.n_trees;
    params.forest.n_threads = opt.threads;
    return params;
}

int cmd_synth(const CommonOptions& opt) {
    const std::uint64_t seed = resolve_seed(opt);
    synth::SynthConfig config;
    config.n_fields = opt.n_fields;
    config.seed = seed;
    config.noise_level = opt.noise;
    const auto result = synth::generate(config);
    fs::create_directories(opt.out_dir);
    write_run_config(opt, "synth", seed);
    const auto paths = synth::write_csvs(result, opt.out_dir);
    std::size_t weather_rows = 0, app_rows = 0;
    for (const auto& r : result.records) {
        weather_rows += r.weather.size();
        app_rows += r.applications.size();
    }
    std::cout << paths[0] << ": " << result.records.size() << " rows\n"
              << paths[1] << ": " << weather_rows << " rows\n"
              << paths[2] << ": " << app_rows << " rows\n"
              << paths[3] << ": 4 rows\n"
              << paths[4] << ": " << result.truths.size() << " rows\n";
    return 0;
}

int cmd_train(const CommonOptions& opt) {
    const std::uint64_t seed = resolve_seed(opt);
    const auto mode = pipeline::mode_from_name(opt.mode);
    if (!mode) throw std::runtime_error("unknown mode '" + opt.mode + "'");

    dataset::CleanLog log;
    const auto records = load_and_clean(opt, &log);
    if (!log.dropped_records.empty())
        std::cout << "dropped " << log.dropped_records.size() << " records during cleaning\n";
    if (log.dropped_events > 0)
        std::cout << "dropped " << log.dropped_events << " out-of-window application events\n";

    fs::create_directories(opt.out_dir);
    write_run_config(opt, "train", seed);

    const auto params = pipeline_params(opt, seed);
    const auto stage1 = pipeline::train_stage1(records, *mode, params);
    const auto stage2 = pipeline::train_stage2(records, *mode, params);

    for (dataset::Nutrient n : dataset::all_nutrients()) {
        const auto& classifier = stage1.classifiers[static_cast<std::size_t>(n)];
        std::cout << dataset::nutrient_name(n) << ": stage-1 classifier over " << records.size()
                  << " records" << (classifier.degenerate ? " (degenerate: single count class)" : "");
        std::string ks;
        for (int k = 1; k <= stage1.cap; ++k)
            if (stage2.find(n, k)) ks += (ks.empty() ? "" : ",") + std::to_string(k);
        std::cout << "; stage-2 models for k in {" << ks << "}\n";
    }
    for (const auto& skipped : stage2.skipped) std::cout << "skipped " << skipped << "\n";

    const std::string model_path =
        opt.model_path.empty() ? (fs::path(opt.out_dir) / "model.json").string() : opt.model_path;
    pipeline::save_models(stage1, stage2, model_path);
    std::cout << "model written to " << model_path << "\n";
    return 0;
}

const dataset::FieldSeasonRecord& pick_field(const std::vector<dataset::FieldSeasonRecord>& records,
                                             const std::string& field_id) {
    if (field_id.empty()) return records.front();
    for (const auto& r : records)
        if (r.field_id == field_id) return r;
    throw std::runtime_error("field_id '" + field_id + "' not found in the data");
}

int cmd_evaluate(const CommonOptions& opt) {
    const std::uint64_t seed = resolve_seed(opt);
    const auto records = load_and_clean(opt);
    fs::create_directories(opt.out_dir);
    write_run_config(opt, "evaluate", seed);

    eval::EvalParams params;
    params.test_fraction = opt.test_fraction;
    params.cv_folds = opt.cv_folds;
    params.pipeline = pipeline_params(opt, seed);
    params.seed = seed;
    const auto report = eval::build_report(records, params);

    const std::string table1 = eval::render_table_csv(report.stage1);
    const std::string table2 = eval::render_table_csv(report.stage2);
    write_text((fs::path(opt.out_dir) / "table1.csv").string(), table1);
    write_text((fs::path(opt.out_dir) / "table2.csv").string(), table2);

    // Count comparison for one probe field: stage-1 raw counts next to the
    // counts that survive stage-2 refinement.
    const auto params2 = pipeline_params(opt, seed);
    const auto stage1 = pipeline::train_stage1(records, pipeline::Mode::reproduction, params2);
    const auto stage2 = pipeline::train_stage2(records, pipeline::Mode::reproduction, params2);
    const auto& probe = pick_field(records, opt.field_id);
    const auto rec = pipeline::recommend(stage1, stage2, probe, opt.q_min);
    CsvWriter table3({"nutrient", "first_model_count", "refined_count"});
    for (dataset::Nutrient n : dataset::all_nutrients()) {
        const auto& nr = rec.per_nutrient[static_cast<std::size_t>(n)];
        table3.add_row({std::string(dataset::nutrient_name(n)), std::to_string(nr.raw_count),
                        std::to_string(nr.refined_count)});
    }
    table3.write_file((fs::path(opt.out_dir) / "table3.csv").string());

    std::string text;
    text += eval::render_table_text(report.stage1, "Stage 1: application count accuracy");
    text += "\n";
    text += eval::render_table_text(
        report.stage2, "Stage 2: application timeline accuracy (uniformly averaged R^2)");
    text += "\nTable 3: probe field " + probe.field_id + " first-model vs refined counts\n";
    for (dataset::Nutrient n : dataset::all_nutrients()) {
        const auto& nr = rec.per_nutrient[static_cast<std::size_t>(n)];
        text += std::string(dataset::nutrient_name(n)) + ": " + std::to_string(nr.raw_count) +
                " -> " + std::to_string(nr.refined_count) + "\n";
    }
    for (const auto& warning : report.warnings) text += "warning: " + warning + "\n";
    write_text((fs::path(opt.out_dir) / "report.txt").string(), text);
    std::cout << text;
    return 0;
}

int cmd_recommend(const CommonOptions& opt) {
    const std::uint64_t seed = resolve_seed(opt);
    if (opt.model_path.empty()) throw std::runtime_error("--model is required");
    auto [stage1, stage2] = pipeline::load_models(opt.model_path);
    if (opt.mode_given && opt.mode != pipeline::mode_name(stage1.mode))
        throw std::runtime_error("model was trained in " + std::string(pipeline::mode_name(stage1.mode)) +
                                 " mode but --mode requests " + opt.mode);

    const auto records = load_and_clean(opt);
    const auto& field = pick_field(records, opt.field_id);
    const auto rec = pipeline::recommend(stage1, stage2, field, opt.q_min);

    fs::create_directories(opt.out_dir);
    write_run_config(opt, "recommend", seed);

    json doc;
    doc["field_id"] = field.field_id;
    doc["mode"] = std::string(pipeline::mode_name(stage1.mode));
    doc["q_min_kg_ha"] = opt.q_min;
    if (rec.expected_yield_t_ha) doc["expected_yield_t_ha"] = *rec.expected_yield_t_ha;
    json nutrients = json::object();
    for (dataset::Nutrient n : dataset::all_nutrients()) {
        const auto& nr = rec.per_nutrient[static_cast<std::size_t>(n)];
        json entries = json::array();
        for (const auto& e : nr.timeline.entries)
            entries.push_back(json{{"day", e.day}, {"qty_kg_ha", e.qty_kg_ha}});
        json item{{"raw_count", nr.raw_count},
                  {"refined_count", nr.refined_count},
                  {"entries", std::move(entries)},
                  {"total_qty_kg_ha", nr.timeline.total_qty_kg_ha}};
        if (nr.timeline.expected_yield_t_ha)
            item["expected_yield_t_ha"] = *nr.timeline.expected_yield_t_ha;
        nutrients[std::string(dataset::nutrient_name(n))] = std::move(item);
    }
    doc["nutrients"] = std::move(nutrients);
    write_text((fs::path(opt.out_dir) / "schedule.json").string(), doc.dump(2) + "\n");

    CsvWriter csv({"nutrient", "app_index", "day", "qty_kg_ha", "total_qty_kg_ha",
                   "expected_yield_t_ha"});
    for (dataset::Nutrient n : dataset::all_nutrients()) {
        const auto& nr = rec.per_nutrient[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < nr.timeline.entries.size(); ++i) {
            const auto& e = nr.timeline.entries[i];
            csv.add_row({std::string(dataset::nutrient_name(n)), std::to_string(i + 1),
                         std::to_string(e.day), format_double(e.qty_kg_ha),
                         format_double(nr.timeline.total_qty_kg_ha),
                         nr.timeline.expected_yield_t_ha ? format_double(*nr.timeline.expected_yield_t_ha)
                                                         : ""});
        }
    }
    csv.write_file((fs::path(opt.out_dir) / "schedule.csv").string());

    if (opt.svg) {
        for (dataset::Nutrient n : dataset::all_nutrients()) {
            const auto& nr = rec.per_nutrient[static_cast<std::size_t>(n)];
            if (nr.refined_count == 0) continue;
            const std::string path =
                (fs::path(opt.out_dir) / ("schedule_" + std::string(dataset::nutrient_name(n)) + ".svg"))
                    .string();
            write_text(path, chart::timeline_chart_svg(nr.timeline, field.field_id));
        }
    }

    std::cout << "schedule for field " << field.field_id;
    if (rec.expected_yield_t_ha) std::cout << " (expected yield " << *rec.expected_yield_t_ha << " t/ha)";
    std::cout << "\n";
    for (dataset::Nutrient n : dataset::all_nutrients()) {
        const auto& nr = rec.per_nutrient[static_cast<std::size_t>(n)];
        std::cout << dataset::nutrient_name(n) << ": " << nr.refined_count << " applications";
        for (const auto& e : nr.timeline.entries)
            std::cout << " [day " << e.day << ": " << e.qty_kg_ha << " kg/ha]";
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agritime: nutrient application timeline recommendation"};
    app.require_subcommand(1);
    CommonOptions opt;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", opt.out_dir, "output directory");
        cmd->add_option("--seed", opt.seed, "random seed (fallback: AGRITIME_SEED, then 42)")
            ->each([&opt](const std::string&) { opt.seed_given = true; });
    };

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic winter-wheat dataset");
    add_common(synth_cmd);
    synth_cmd->add_option("--n-fields", opt.n_fields, "number of fields")->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--noise", opt.noise, "noise level in [0, 1]")
        ->check(CLI::Range(0.0, 1.0));

    CLI::App* train_cmd = app.add_subcommand("train", "train the two-stage model");
    add_common(train_cmd);
    train_cmd->add_option("--data-dir", opt.data_dir, "directory with the four input CSVs")->required();
    train_cmd->add_option("--model", opt.model_path, "model output path (default <out>/model.json)");
    train_cmd->add_option("--mode", opt.mode, "recommendation | reproduction")
        ->check(CLI::IsMember({"recommendation", "reproduction"}));
    train_cmd->add_option("--n-trees", opt.n_trees, "trees per forest")->check(CLI::PositiveNumber);
    train_cmd->add_option("--threads", opt.threads, "training threads (results identical)");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "accuracy tables for both stages");
    add_common(eval_cmd);
    eval_cmd->add_option("--data-dir", opt.data_dir, "directory with the four input CSVs")->required();
    eval_cmd->add_option("--n-trees", opt.n_trees, "trees per forest")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--cv-folds", opt.cv_folds, "cross-validation folds")->check(CLI::Range(2, 1000));
    eval_cmd->add_option("--test-fraction", opt.test_fraction, "held-out fraction");
    eval_cmd->add_option("--q-min", opt.q_min, "refinement threshold kg/ha");
    eval_cmd->add_option("--field-id", opt.field_id, "probe field for table3");
    eval_cmd->add_option("--threads", opt.threads, "training threads (results identical)");

    CLI::App* rec_cmd = app.add_subcommand("recommend", "produce a per-nutrient schedule for one field");
    add_common(rec_cmd);
    rec_cmd->add_option("--data-dir", opt.data_dir, "directory with the four input CSVs")->required();
    rec_cmd->add_option("--model", opt.model_path, "trained model file")->required();
    rec_cmd->add_option("--mode", opt.mode, "expected model mode (checked against the file)")
        ->check(CLI::IsMember({"recommendation", "reproduction"}))
        ->each([&opt](const std::string&) { opt.mode_given = true; });
    rec_cmd->add_option("--field-id", opt.field_id, "field to schedule (default: first)");
    rec_cmd->add_option("--q-min", opt.q_min, "refinement threshold kg/ha");
    rec_cmd->add_flag("--svg", opt.svg, "emit one SVG chart per active nutrient");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(opt);
        if (train_cmd->parsed()) return cmd_train(opt);
        if (eval_cmd->parsed()) return cmd_evaluate(opt);
        if (rec_cmd->parsed()) return cmd_recommend(opt);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
