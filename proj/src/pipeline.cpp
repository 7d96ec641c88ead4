#include "agritime/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "agritime/rng.hpp"

namespace agritime::pipeline {

using dataset::FieldSeasonRecord;
using dataset::Nutrient;
using json = nlohmann::ordered_json;

std::string_view mode_name(Mode mode) {
    return mode == Mode::recommendation ? "recommendation" : "reproduction";
}

std::optional<Mode> mode_from_name(std::string_view name) {
    if (name == "recommendation") return Mode::recommendation;
    if (name == "reproduction") return Mode::reproduction;
    return std::nullopt;
}

dataset::FeatureSpec StageOneModel::spec_for(Nutrient nutrient) const {
    dataset::FeatureSpec spec;
    spec.soil_vocabulary = soil_vocabulary;
    spec.co_nutrient_totals = mode == Mode::reproduction;
    spec.target = nutrient;
    return spec;
}

int StageOneModel::predict_count(const FieldSeasonRecord& record, Nutrient nutrient) const {
    const auto features = dataset::encode_features({&record, 1}, spec_for(nutrient));
    const int k = classifiers[static_cast<std::size_t>(nutrient)].predict_class(features.values.row(0));
    return std::clamp(k, 0, cap);
}

const forest::ForestModel* StageTwoModel::find(Nutrient nutrient, int k) const {
    const auto it = regressors.find({nutrient, k});
    return it == regressors.end() ? nullptr : &it->second;
}

namespace {

std::uint64_t stage1_seed(std::uint64_t seed, Nutrient nutrient) {
    return mix_seed(mix_seed(seed, 0x51a6e1), static_cast<std::uint64_t>(nutrient));
}

std::uint64_t stage2_seed(std::uint64_t seed, Nutrient nutrient, int k) {
    return mix_seed(mix_seed(seed, 0x51a6e2),
                    static_cast<std::uint64_t>(static_cast<int>(nutrient) * 16 + k));
}

void check_training_input(std::span<const FieldSeasonRecord> records, const PipelineParams& params) {
    if (records.size() < static_cast<std::size_t>(params.min_records))
        throw std::invalid_argument("need at least " + std::to_string(params.min_records) +
                                    " records, got " + std::to_string(records.size()));
    for (const auto& r : records)
        if (!r.cleaned)
            throw std::invalid_argument("record '" + r.field_id + "' is not cleaned");
}

}  // namespace

std::vector<double> stage2_targets(const FieldSeasonRecord& record, Nutrient nutrient, int k) {
    const auto timeline = dataset::build_timeline(record, nutrient);
    if (timeline.entries.size() != static_cast<std::size_t>(k))
        throw std::invalid_argument("stage2_targets: record has " +
                                    std::to_string(timeline.entries.size()) + " entries, expected " +
                                    std::to_string(k));
    if (!record.yield_t_ha)
        throw std::invalid_argument("stage2_targets: record '" + record.field_id + "' lacks yield");
    std::vector<double> targets;
    targets.reserve(static_cast<std::size_t>(2 * k + 2));
    for (const auto& e : timeline.entries) targets.push_back(e.qty_kg_ha);
    for (const auto& e : timeline.entries) targets.push_back(static_cast<double>(e.day));
    targets.push_back(timeline.total_qty_kg_ha);
    targets.push_back(*record.yield_t_ha);
    return targets;
}

StageOneModel train_stage1(std::span<const FieldSeasonRecord> records, Mode mode,
                           const PipelineParams& params) {
    check_training_input(records, params);

    StageOneModel model;
    model.mode = mode;
    model.cap = params.count_cap;
    model.soil_vocabulary =
        dataset::FeatureSpec::for_records(records, false, Nutrient::N).soil_vocabulary;

    for (Nutrient nutrient : dataset::all_nutrients()) {
        const auto features = dataset::encode_features(records, model.spec_for(nutrient));
        std::vector<int> labels;
        labels.reserve(records.size());
        for (const auto& r : records) {
            const int count = static_cast<int>(dataset::build_timeline(r, nutrient).entries.size());
            labels.push_back(std::clamp(count, 0, params.count_cap));
        }
        auto targets = tree::Targets::classification(labels, params.count_cap + 1);
        forest::ForestParams fp = params.forest;
        fp.seed = stage1_seed(params.seed, nutrient);
        auto& classifier = model.classifiers[static_cast<std::size_t>(nutrient)];
        classifier = forest::fit(features.values, targets, fp);
        classifier.feature_names = features.column_names;
        classifier.target_names = {"count"};
    }
    return model;
}

StageTwoModel train_stage2(std::span<const FieldSeasonRecord> records, Mode mode,
                           const PipelineParams& params) {
    check_training_input(records, params);

    StageTwoModel model;
    model.mode = mode;
    model.min_subset = params.min_subset;
    model.soil_vocabulary =
        dataset::FeatureSpec::for_records(records, false, Nutrient::N).soil_vocabulary;

    for (Nutrient nutrient : dataset::all_nutrients()) {
        dataset::FeatureSpec spec;
        spec.soil_vocabulary = model.soil_vocabulary;
        spec.co_nutrient_totals = mode == Mode::reproduction;
        spec.target = nutrient;

        for (int k = 1; k <= params.count_cap; ++k) {
            auto indices = dataset::stage2_subset_indices(records, nutrient, k);
            // Yield is a target, so unharvested fields cannot train here.
            std::erase_if(indices, [&](std::size_t i) { return !records[i].yield_t_ha.has_value(); });
            if (indices.size() < static_cast<std::size_t>(params.min_subset)) {
                if (!indices.empty())
                    model.skipped.push_back("(" + std::string(dataset::nutrient_name(nutrient)) + ", " +
                                            std::to_string(k) + "): " + std::to_string(indices.size()) +
                                            " rows below min_subset " + std::to_string(params.min_subset));
                continue;
            }
            std::vector<FieldSeasonRecord> subset;
            subset.reserve(indices.size());
            for (std::size_t i : indices) subset.push_back(records[i]);

            const auto features = dataset::encode_features(subset, spec);
            Matrix targets(subset.size(), static_cast<std::size_t>(2 * k + 2));
            for (std::size_t i = 0; i < subset.size(); ++i) {
                const auto row = stage2_targets(subset[i], nutrient, k);
                for (std::size_t j = 0; j < row.size(); ++j) targets(i, j) = row[j];
            }

            forest::ForestParams fp = params.forest;
            fp.seed = stage2_seed(params.seed, nutrient, k);
            if (fp.tree.min_samples_leaf < 5) fp.tree.min_samples_leaf = 5;
            auto regressor = forest::fit(features.values, tree::Targets::regression(targets), fp);
            regressor.feature_names = features.column_names;
            for (int i = 1; i <= k; ++i) regressor.target_names.push_back("qty_" + std::to_string(i));
            for (int i = 1; i <= k; ++i) regressor.target_names.push_back("day_" + std::to_string(i));
            regressor.target_names.push_back("total_qty");
            regressor.target_names.push_back("total_yield");
            model.regressors.emplace(std::make_pair(nutrient, k), std::move(regressor));
        }
    }
    if (model.regressors.empty()) throw std::runtime_error("insufficient data for stage 2");
    return model;
}

Recommendation recommend(const StageOneModel& stage1, const StageTwoModel& stage2,
                         const FieldSeasonRecord& record, double q_min) {
    if (stage1.mode != stage2.mode)
        throw std::invalid_argument("recommend: stage-1 and stage-2 models were trained in different modes");

    Recommendation rec;
    double yield_sum = 0.0;
    int yield_count = 0;

    for (Nutrient nutrient : dataset::all_nutrients()) {
        auto& out = rec.per_nutrient[static_cast<std::size_t>(nutrient)];
        out.timeline.nutrient = nutrient;
        out.raw_count = stage1.predict_count(record, nutrient);

        const forest::ForestModel* regressor = stage2.find(nutrient, out.raw_count);
        if (out.raw_count == 0 || !regressor) {
            out.refined_count = 0;
            continue;
        }

        const auto features = dataset::encode_features({&record, 1}, [&] {
            dataset::FeatureSpec spec;
            spec.soil_vocabulary = stage2.soil_vocabulary;
            spec.co_nutrient_totals = stage2.mode == Mode::reproduction;
            spec.target = nutrient;
            return spec;
        }());
        const auto y = regressor->predict_targets(features.values.row(0));
        const int k = out.raw_count;

        std::vector<dataset::TimelineEntry> entries;
        for (int i = 0; i < k; ++i) {
            const double qty = std::max(0.0, y[static_cast<std::size_t>(i)]);
            if (qty < q_min) continue;  // refinement: negligible applications vanish
            const int day = static_cast<int>(
                std::clamp<long>(std::lround(y[static_cast<std::size_t>(k + i)]), -30, 330));
            entries.push_back({day, qty});
        }
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.day < b.day; });
        std::vector<dataset::TimelineEntry> merged;
        for (const auto& e : entries) {
            if (!merged.empty() && merged.back().day == e.day)
                merged.back().qty_kg_ha += e.qty_kg_ha;
            else
                merged.push_back(e);
        }

        out.timeline.entries = std::move(merged);
        out.refined_count = static_cast<int>(out.timeline.entries.size());
        out.timeline.total_qty_kg_ha = std::max(0.0, y[static_cast<std::size_t>(2 * k)]);
        const double yield = std::max(0.0, y[static_cast<std::size_t>(2 * k + 1)]);
        out.timeline.expected_yield_t_ha = yield;
        if (out.refined_count > 0) {
            yield_sum += yield;
            ++yield_count;
        }
    }
    if (yield_count > 0) rec.expected_yield_t_ha = yield_sum / static_cast<double>(yield_count);
    return rec;
}

// --- serialization ---------------------------------------------------------

namespace {

constexpr const char* kFormatTag = "agritime-model";
constexpr int kFormatVersion = 1;

json tree_to_json(const tree::Tree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
        // [is_leaf, feature, threshold, left, right, n_samples, value...]
        json entry = json::array({n.is_leaf ? 1 : 0, n.feature, n.threshold, n.left, n.right, n.n_samples});
        for (double v : n.value) entry.push_back(v);
        nodes.push_back(std::move(entry));
    }
    return json{{"n_features", t.n_features}, {"nodes", std::move(nodes)}};
}

const json& require(const json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) throw std::runtime_error("model file: missing '" + path + "/" + key + "'");
    return *it;
}

tree::Tree tree_from_json(const json& j, const std::string& path) {
    tree::Tree t;
    t.n_features = require(j, "n_features", path).get<std::size_t>();
    const json& nodes = require(j, "nodes", path);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const json& entry = nodes[i];
        if (!entry.is_array() || entry.size() < 6)
            throw std::runtime_error("model file: malformed node at '" + path + "/nodes/" +
                                     std::to_string(i) + "'");
        tree::TreeNode node;
        node.is_leaf = entry[0].get<int>() != 0;
        node.feature = entry[1].get<std::size_t>();
        node.threshold = entry[2].get<double>();
        node.left = entry[3].get<int>();
        node.right = entry[4].get<int>();
        node.n_samples = entry[5].get<int>();
        for (std::size_t v = 6; v < entry.size(); ++v) node.value.push_back(entry[v].get<double>());
        t.nodes.push_back(std::move(node));
    }
    if (t.nodes.empty())
        throw std::runtime_error("model file: empty tree at '" + path + "'");
    return t;
}

json forest_to_json(const forest::ForestModel& m) {
    json trees = json::array();
    for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
    return json{
        {"kind", m.kind == forest::ModelKind::classifier ? "classifier" : "multi_regressor"},
        {"n_classes", m.n_classes},
        {"n_features", m.n_features},
        {"n_targets", m.n_targets},
        {"feature_names", m.feature_names},
        {"target_names", m.target_names},
        {"degenerate", m.degenerate},
        {"params",
         {{"n_trees", m.params.n_trees},
          {"seed", m.params.seed},
          {"bootstrap", m.params.bootstrap},
          {"max_depth", m.params.tree.max_depth},
          {"min_samples_split", m.params.tree.min_samples_split},
          {"min_samples_leaf", m.params.tree.min_samples_leaf},
          {"mtry", m.params.tree.mtry}}},
        {"trees", std::move(trees)},
    };
}

forest::ForestModel forest_from_json(const json& j, const std::string& path) {
    forest::ForestModel m;
    const std::string kind = require(j, "kind", path).get<std::string>();
    if (kind == "classifier")
        m.kind = forest::ModelKind::classifier;
    else if (kind == "multi_regressor")
        m.kind = forest::ModelKind::multi_regressor;
    else
        throw std::runtime_error("model file: unknown forest kind at '" + path + "/kind'");
    m.n_classes = require(j, "n_classes", path).get<int>();
    m.n_features = require(j, "n_features", path).get<std::size_t>();
    m.n_targets = require(j, "n_targets", path).get<std::size_t>();
    m.feature_names = require(j, "feature_names", path).get<std::vector<std::string>>();
    m.target_names = require(j, "target_names", path).get<std::vector<std::string>>();
    m.degenerate = require(j, "degenerate", path).get<bool>();
    const json& params = require(j, "params", path);
    m.params.n_trees = require(params, "n_trees", path + "/params").get<int>();
    m.params.seed = require(params, "seed", path + "/params").get<std::uint64_t>();
    m.params.bootstrap = require(params, "bootstrap", path + "/params").get<bool>();
    m.params.tree.max_depth = require(params, "max_depth", path + "/params").get<int>();
    m.params.tree.min_samples_split = require(params, "min_samples_split", path + "/params").get<int>();
    m.params.tree.min_samples_leaf = require(params, "min_samples_leaf", path + "/params").get<int>();
    m.params.tree.mtry = require(params, "mtry", path + "/params").get<int>();
    const json& trees = require(j, "trees", path);
    for (std::size_t i = 0; i < trees.size(); ++i)
        m.trees.push_back(tree_from_json(trees[i], path + "/trees/" + std::to_string(i)));
    return m;
}

}  // namespace

void save_models(const StageOneModel& stage1, const StageTwoModel& stage2, const std::string& path) {
    if (stage1.mode != stage2.mode)
        throw std::invalid_argument("save_models: stage modes disagree");
    json doc;
    doc["format"] = kFormatTag;
    doc["version"] = kFormatVersion;
    doc["mode"] = std::string(mode_name(stage1.mode));
    doc["cap"] = stage1.cap;
    doc["min_subset"] = stage2.min_subset;
    doc["soil_vocabulary"] = stage1.soil_vocabulary;

    json s1 = json::object();
    for (Nutrient n : dataset::all_nutrients())
        s1[std::string(dataset::nutrient_name(n))] =
            forest_to_json(stage1.classifiers[static_cast<std::size_t>(n)]);
    doc["stage1"] = std::move(s1);

    json s2 = json::array();
    for (const auto& [key, model] : stage2.regressors) {
        s2.push_back(json{{"nutrient", std::string(dataset::nutrient_name(key.first))},
                          {"k", key.second},
                          {"forest", forest_to_json(model)}});
    }
    doc["stage2"] = std::move(s2);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << doc.dump(1, '\t') << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::pair<StageOneModel, StageTwoModel> load_models(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("model file " + path + ": " + e.what());
    }

    if (require(doc, "format", "").get<std::string>() != kFormatTag)
        throw std::runtime_error("model file " + path + ": unrecognized format tag at '/format'");
    if (require(doc, "version", "").get<int>() != kFormatVersion)
        throw std::runtime_error("model file " + path + ": unsupported version " +
                                 doc["version"].dump() + " at '/version', expected " +
                                 std::to_string(kFormatVersion));

    const auto mode = mode_from_name(require(doc, "mode", "").get<std::string>());
    if (!mode) throw std::runtime_error("model file " + path + ": unknown mode at '/mode'");

    StageOneModel stage1;
    stage1.mode = *mode;
    stage1.cap = require(doc, "cap", "").get<int>();
    stage1.soil_vocabulary = require(doc, "soil_vocabulary", "").get<std::vector<std::string>>();

    const json& s1 = require(doc, "stage1", "");
    for (Nutrient n : dataset::all_nutrients()) {
        const std::string name(dataset::nutrient_name(n));
        stage1.classifiers[static_cast<std::size_t>(n)] =
            forest_from_json(require(s1, name.c_str(), "/stage1"), "/stage1/" + name);
    }

    StageTwoModel stage2;
    stage2.mode = *mode;
    stage2.min_subset = require(doc, "min_subset", "").get<int>();
    stage2.soil_vocabulary = stage1.soil_vocabulary;
    const json& s2 = require(doc, "stage2", "");
    for (std::size_t i = 0; i < s2.size(); ++i) {
        const std::string path_i = "/stage2/" + std::to_string(i);
        const auto nutrient =
            dataset::nutrient_from_name(require(s2[i], "nutrient", path_i).get<std::string>());
        if (!nutrient)
            throw std::runtime_error("model file: unknown nutrient at '" + path_i + "/nutrient'");
        const int k = require(s2[i], "k", path_i).get<int>();
        stage2.regressors.emplace(std::make_pair(*nutrient, k),
                                  forest_from_json(require(s2[i], "forest", path_i), path_i + "/forest"));
    }
    return {std::move(stage1), std::move(stage2)};
}

}  // namespace agritime::pipeline
