#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agritime/dataset.hpp"
#include "agritime/forest.hpp"

namespace agritime::pipeline {

// Reproduction mode mirrors the evaluation setup, feeding each model the other
// nutrients' observed season totals; recommendation mode drops those columns
// so a schedule can be produced for a field with no recorded applications.
enum class Mode { recommendation, reproduction };

std::string_view mode_name(Mode mode);
std::optional<Mode> mode_from_name(std::string_view name);

struct PipelineParams {
    forest::ForestParams forest;  // per-model seeds are derived from `seed`
    std::uint64_t seed = 0;
    int count_cap = 7;     // stage-1 labels clamp to [0, cap]
    int min_subset = 20;   // smallest (nutrient, k) subset worth a regressor
    int min_records = 10;
};

// Per-nutrient classifiers over application-count classes {0..cap}.
struct StageOneModel {
    Mode mode = Mode::recommendation;
    int cap = 7;
    std::vector<std::string> soil_vocabulary;
    std::array<forest::ForestModel, dataset::kNutrientCount> classifiers;

    dataset::FeatureSpec spec_for(dataset::Nutrient nutrient) const;
    int predict_count(const dataset::FieldSeasonRecord& record, dataset::Nutrient nutrient) const;
};

// One multi-output regressor per (nutrient, count) pair with enough training
// rows; targets are [qty_1..qty_k, day_1..day_k, total_qty, total_yield].
struct StageTwoModel {
    Mode mode = Mode::recommendation;
    int min_subset = 20;
    std::vector<std::string> soil_vocabulary;
    std::map<std::pair<dataset::Nutrient, int>, forest::ForestModel> regressors;
    std::vector<std::string> skipped;  // "(nutrient, k): n rows below threshold"

    const forest::ForestModel* find(dataset::Nutrient nutrient, int k) const;
};

struct NutrientRecommendation {
    int raw_count = 0;      // stage-1 output
    int refined_count = 0;  // entries surviving refinement; always <= raw_count
    dataset::NutrientTimeline timeline;
};

struct Recommendation {
    std::array<NutrientRecommendation, dataset::kNutrientCount> per_nutrient;
    // Mean of the active nutrients' stage-2 yield outputs.
    std::optional<double> expected_yield_t_ha;
};

// Builds the stage-2 target vector [qtys..., days..., total, yield] for a
// record whose timeline for `nutrient` has exactly k entries.
std::vector<double> stage2_targets(const dataset::FieldSeasonRecord& record,
                                   dataset::Nutrient nutrient, int k);

StageOneModel train_stage1(std::span<const dataset::FieldSeasonRecord> records, Mode mode,
                           const PipelineParams& params);
StageTwoModel train_stage2(std::span<const dataset::FieldSeasonRecord> records, Mode mode,
                           const PipelineParams& params);

// Chains the stages for one field in the fixed nutrient order, then refines:
// quantities clamp to >= 0, days round and clamp to [-30, 330], entries below
// q_min are dropped, survivors sort by day and merge same-day collisions.
Recommendation recommend(const StageOneModel& stage1, const StageTwoModel& stage2,
                         const dataset::FieldSeasonRecord& record, double q_min = 5.0);

// Single JSON document with a version tag; load(save(m)) predicts bitwise
// identically. Schema violations name the offending path in the document.
void save_models(const StageOneModel& stage1, const StageTwoModel& stage2, const std::string& path);
std::pair<StageOneModel, StageTwoModel> load_models(const std::string& path);

}  // namespace agritime::pipeline
