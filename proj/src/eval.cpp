#include "agritime/eval.hpp"

#include <algorithm>
#include <cstdio>

#include "agritime/csv.hpp"

namespace agritime::eval {

using dataset::FieldSeasonRecord;
using dataset::Nutrient;

double cv_std(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("cv_std: no scores");
    long double mean = 0.0L;
    for (double s : scores) mean += static_cast<long double>(s);
    mean /= static_cast<long double>(scores.size());
    long double var = 0.0L;
    for (double s : scores) {
        const long double d = static_cast<long double>(s) - mean;
        var += d * d;
    }
    var /= static_cast<long double>(scores.size());
    return static_cast<double>(std::sqrt(var));
}

double score_classification(std::span<const int> pred, std::span<const int> truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw std::invalid_argument("score_classification: empty or mismatched inputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double score_regression(const Matrix& pred, const Matrix& truth) {
    if (truth.empty() || pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw std::invalid_argument("score_regression: empty or mismatched inputs");
    const std::size_t n = truth.rows();
    double sum = 0.0;
    for (std::size_t j = 0; j < truth.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += truth(i, j);
        mean /= static_cast<double>(n);
        double ss_tot = 0.0, ss_res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ss_tot += (truth(i, j) - mean) * (truth(i, j) - mean);
            ss_res += (truth(i, j) - pred(i, j)) * (truth(i, j) - pred(i, j));
        }
        if (ss_tot == 0.0)
            sum += ss_res == 0.0 ? 1.0 : 0.0;  // constant target: exact or nothing
        else
            sum += 1.0 - ss_res / ss_tot;
    }
    return sum / static_cast<double>(truth.cols());
}

namespace {

double stage1_accuracy(const pipeline::StageOneModel& model, std::span<const FieldSeasonRecord> records,
                       Nutrient nutrient) {
    std::vector<int> pred, truth;
    for (const auto& r : records) {
        pred.push_back(model.predict_count(r, nutrient));
        truth.push_back(std::clamp(
            static_cast<int>(dataset::build_timeline(r, nutrient).entries.size()), 0, model.cap));
    }
    return score_classification(pred, truth);
}

// Weighted-average R^2 over the (nutrient, k) groups present in `records`,
// weights proportional to group size. Groups with no trained model or fewer
// than two rows are skipped; nothing scoreable yields 0.
double stage2_accuracy(const pipeline::StageTwoModel& model, std::span<const FieldSeasonRecord> records,
                       Nutrient nutrient, int cap) {
    double weighted = 0.0;
    std::size_t total = 0;
    for (int k = 1; k <= cap; ++k) {
        const forest::ForestModel* regressor = model.find(nutrient, k);
        if (!regressor) continue;
        auto indices = dataset::stage2_subset_indices(records, nutrient, k);
        std::erase_if(indices, [&](std::size_t i) { return !records[i].yield_t_ha.has_value(); });
        if (indices.size() < 2) continue;

        std::vector<FieldSeasonRecord> subset;
        for (std::size_t i : indices) subset.push_back(records[i]);
        dataset::FeatureSpec spec;
        spec.soil_vocabulary = model.soil_vocabulary;
        spec.co_nutrient_totals = model.mode == pipeline::Mode::reproduction;
        spec.target = nutrient;
        const auto features = dataset::encode_features(subset, spec);

        Matrix pred(subset.size(), static_cast<std::size_t>(2 * k + 2));
        Matrix truth(subset.size(), static_cast<std::size_t>(2 * k + 2));
        for (std::size_t i = 0; i < subset.size(); ++i) {
            const auto p = regressor->predict_targets(features.values.row(i));
            const auto t = pipeline::stage2_targets(subset[i], nutrient, k);
            for (std::size_t j = 0; j < p.size(); ++j) {
                pred(i, j) = p[j];
                truth(i, j) = t[j];
            }
        }
        weighted += score_regression(pred, truth) * static_cast<double>(subset.size());
        total += subset.size();
    }
    return total ? weighted / static_cast<double>(total) : 0.0;
}

int max_predicted_count(const pipeline::StageOneModel& model,
                        std::span<const FieldSeasonRecord> records, Nutrient nutrient) {
    int max_count = 0;
    for (const auto& r : records) max_count = std::max(max_count, model.predict_count(r, nutrient));
    return max_count;
}

}  // namespace

EvalReport build_report(std::span<const FieldSeasonRecord> records, const EvalParams& params) {
    EvalReport report;
    auto [train, test] = split(records, params.test_fraction, params.seed);

    // Accuracy tables use reproduction mode: co-nutrient totals are part of
    // the feature set being evaluated.
    const auto mode = pipeline::Mode::reproduction;
    pipeline::PipelineParams pp = params.pipeline;
    pp.seed = mix_seed(params.seed, 0xe7a1);
    const auto stage1 = pipeline::train_stage1(train, mode, pp);
    const auto stage2 = pipeline::train_stage2(train, mode, pp);

    for (Nutrient nutrient : dataset::all_nutrients()) {
        const std::size_t idx = static_cast<std::size_t>(nutrient);

        StageRow& row1 = report.stage1[idx];
        row1.predicted_max_application = max_predicted_count(stage1, test, nutrient);
        row1.train_accuracy = stage1_accuracy(stage1, train, nutrient);
        row1.test_accuracy = stage1_accuracy(stage1, test, nutrient);
        row1.cv_folds = params.cv_folds;
        {
            auto scores = kfold_cv(
                records, params.cv_folds,
                [&](const std::vector<FieldSeasonRecord>& fold_train) {
                    pipeline::PipelineParams fold_params = pp;
                    fold_params.seed = mix_seed(pp.seed, idx + 101);
                    return pipeline::train_stage1(fold_train, mode, fold_params);
                },
                [&](const pipeline::StageOneModel& m, const std::vector<FieldSeasonRecord>& fold) {
                    return stage1_accuracy(m, fold, nutrient);
                },
                mix_seed(params.seed, idx + 1), &report.warnings);
            double mean = 0.0;
            for (double s : scores) mean += s;
            row1.cv_mean = mean / static_cast<double>(scores.size());
            row1.cv_std = cv_std(scores);
        }

        StageRow& row2 = report.stage2[idx];
        int max_k = 0;
        for (int k = 1; k <= pp.count_cap; ++k)
            if (stage2.find(nutrient, k)) max_k = k;
        row2.predicted_max_application = max_k;
        if (max_k == 0) continue;  // zero row, nothing trainable for this nutrient

        row2.train_accuracy = stage2_accuracy(stage2, train, nutrient, pp.count_cap);
        row2.test_accuracy = stage2_accuracy(stage2, test, nutrient, pp.count_cap);
        const int folds = [&] {
            const auto it = params.stage2_cv_folds.find(nutrient);
            return it == params.stage2_cv_folds.end() ? params.cv_folds : it->second;
        }();
        row2.cv_folds = folds;
        {
            auto scores = kfold_cv(
                records, folds,
                [&](const std::vector<FieldSeasonRecord>& fold_train) {
                    pipeline::PipelineParams fold_params = pp;
                    fold_params.seed = mix_seed(pp.seed, idx + 201);
                    return pipeline::train_stage2(fold_train, mode, fold_params);
                },
                [&](const pipeline::StageTwoModel& m, const std::vector<FieldSeasonRecord>& fold) {
                    return stage2_accuracy(m, fold, nutrient, pp.count_cap);
                },
                mix_seed(params.seed, idx + 2), &report.warnings);
            double mean = 0.0;
            for (double s : scores) mean += s;
            row2.cv_mean = mean / static_cast<double>(scores.size());
            row2.cv_std = cv_std(scores);
        }
    }
    return report;
}

namespace {

constexpr std::array<std::string_view, dataset::kNutrientCount> kFullNames{
    "Nitrogen", "Phosphorus", "Potassium", "Sulphur", "Magnesium", "Boron", "Manganese", "Calcium"};

}  // namespace

std::string render_table_csv(const std::array<StageRow, dataset::kNutrientCount>& rows) {
    CsvWriter w({"nutrient", "predicted_max_application", "train_accuracy", "test_accuracy",
                 "cv_folds", "cv_mean", "cv_std"});
    for (Nutrient n : dataset::all_nutrients()) {
        const StageRow& r = rows[static_cast<std::size_t>(n)];
        w.add_row({std::string(kFullNames[static_cast<std::size_t>(n)]),
                   std::to_string(r.predicted_max_application), format_double(r.train_accuracy),
                   format_double(r.test_accuracy), std::to_string(r.cv_folds),
                   format_double(r.cv_mean), format_double(r.cv_std)});
    }
    return w.str();
}

std::string render_table_text(const std::array<StageRow, dataset::kNutrientCount>& rows,
                              const std::string& title) {
    std::string out = title + "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %5s %8s %8s %6s %8s %8s\n", "nutrient", "max",
                  "train", "test", "folds", "cv_mean", "cv_std");
    out += line;
    for (Nutrient n : dataset::all_nutrients()) {
        const StageRow& r = rows[static_cast<std::size_t>(n)];
        std::snprintf(line, sizeof(line), "%-12s %5d %8.3f %8.3f %6d %8.3f %8.3f\n",
                      std::string(kFullNames[static_cast<std::size_t>(n)]).c_str(),
                      r.predicted_max_application, r.train_accuracy, r.test_accuracy, r.cv_folds,
                      r.cv_mean, r.cv_std);
        out += line;
    }
    return out;
}

}  // namespace agritime::eval
