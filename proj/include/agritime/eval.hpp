#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "agritime/dataset.hpp"
#include "agritime/matrix.hpp"
#include "agritime/pipeline.hpp"
#include "agritime/rng.hpp"

namespace agritime::eval {

// Seeded shuffle, then the first ceil((1 - test_fraction) * n) records train.
template <class R>
std::pair<std::vector<R>, std::vector<R>> split(std::span<const R> records, double test_fraction,
                                                std::uint64_t seed) {
    if (records.size() < 2) throw std::invalid_argument("split needs at least 2 records");
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw std::invalid_argument("test_fraction must be in (0, 1)");
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x5117));
    rng.shuffle(order);
    const std::size_t n_train = static_cast<std::size_t>(
        std::ceil((1.0 - test_fraction) * static_cast<double>(records.size())));
    std::pair<std::vector<R>, std::vector<R>> out;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? out.first : out.second).push_back(records[order[i]]);
    return out;
}

// Population standard deviation (denominator k). Accumulates in long double so
// exact hand-derivable cases land on the nearest double.
double cv_std(std::span<const double> scores);

// Exact-match fraction.
double score_classification(std::span<const int> pred, std::span<const int> truth);

// Coefficient of determination averaged uniformly over targets. A target with
// constant truth contributes 1 when predicted exactly everywhere, else 0.
double score_regression(const Matrix& pred, const Matrix& truth);

// Seeded shuffle into k contiguous folds whose sizes differ by at most one
// (the first n % k folds take the extra row). Trainer exceptions score the
// fold 0 and append a warning instead of aborting the run.
//
// Trainer: (const std::vector<R>& train) -> Model
// Scorer:  (const Model&, const std::vector<R>& fold) -> double
template <class R, class Trainer, class Scorer>
std::vector<double> kfold_cv(std::span<const R> records, int k, Trainer&& trainer, Scorer&& scorer,
                             std::uint64_t seed, std::vector<std::string>* warnings = nullptr) {
    if (k < 2) throw std::invalid_argument("kfold_cv: k must be >= 2");
    if (records.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("kfold_cv: need at least k records");
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0xf01d5));
    rng.shuffle(order);

    const std::size_t base = records.size() / static_cast<std::size_t>(k);
    const std::size_t extra = records.size() % static_cast<std::size_t>(k);
    std::vector<double> scores;
    std::size_t start = 0;
    for (int fold = 0; fold < k; ++fold) {
        const std::size_t len = base + (static_cast<std::size_t>(fold) < extra ? 1 : 0);
        std::vector<R> test_set, train_set;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const bool in_fold = i >= start && i < start + len;
            (in_fold ? test_set : train_set).push_back(records[order[i]]);
        }
        start += len;
        try {
            auto model = trainer(train_set);
            scores.push_back(scorer(model, test_set));
        } catch (const std::exception& e) {
            if (warnings)
                warnings->push_back("fold " + std::to_string(fold + 1) + " failed: " + e.what());
            scores.push_back(0.0);
        }
    }
    return scores;
}

struct StageRow {
    int predicted_max_application = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    int cv_folds = 0;
    double cv_mean = 0.0;
    double cv_std = 0.0;
};

// Per-nutrient accuracy tables for both stages, shaped like the count and
// timeline accuracy tables the report prints. Stage-2 scores are uniformly
// averaged R^2 (declared in the rendered output).
struct EvalReport {
    std::array<StageRow, dataset::kNutrientCount> stage1{};
    std::array<StageRow, dataset::kNutrientCount> stage2{};
    std::vector<std::string> warnings;
};

struct EvalParams {
    double test_fraction = 0.2;
    int cv_folds = 10;
    std::map<dataset::Nutrient, int> stage2_cv_folds;  // per-nutrient override
    pipeline::PipelineParams pipeline;
    std::uint64_t seed = 0;
};

// Splits, trains both stages in reproduction mode, and fills both tables.
// Nutrients with nothing to train render as zero rows.
EvalReport build_report(std::span<const dataset::FieldSeasonRecord> records, const EvalParams& params);

std::string render_table_csv(const std::array<StageRow, dataset::kNutrientCount>& rows);
std::string render_table_text(const std::array<StageRow, dataset::kNutrientCount>& rows,
                              const std::string& title);

}  // namespace agritime::eval
