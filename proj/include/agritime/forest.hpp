#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agritime/matrix.hpp"
#include "agritime/tree.hpp"

namespace agritime::forest {

enum class ModelKind { classifier, multi_regressor };

struct ForestParams {
    int n_trees = 200;
    tree::TreeParams tree;   // mtry <= 0: ceil(sqrt(p)) for classifiers, max(1, p/3) for regressors
    bool bootstrap = true;   // false: every tree sees the identity sample (test hook)
    std::uint64_t seed = 0;
    int n_threads = 1;       // <= 0: hardware concurrency; results never depend on it
};

// A bagged ensemble. Trees are immutable after fit; prediction is safe from
// any number of threads.
struct ForestModel {
    ModelKind kind = ModelKind::classifier;
    int n_classes = 0;  // classifiers only
    std::size_t n_features = 0;
    std::size_t n_targets = 0;  // regressors only
    std::vector<std::string> feature_names;
    std::vector<std::string> target_names;
    ForestParams params;
    bool degenerate = false;  // classifier trained on a single class
    std::vector<tree::Tree> trees;
    std::vector<std::vector<std::size_t>> bootstrap_indices;  // per tree, size n

    // Majority vote over per-tree leaf distributions; exact ties go to the
    // smallest class label.
    int predict_class(std::span<const double> x) const;
    // Mean of the per-tree normalized leaf histograms.
    std::vector<double> class_distribution(std::span<const double> x) const;
    // Componentwise mean of per-tree target vectors.
    std::vector<double> predict_targets(std::span<const double> x) const;
};

// Bagging with per-tree seeded generators: tree t draws its bootstrap sample
// and all node feature subsets from a stream seeded by (params.seed, t), so
// the model is a pure function of (data, params) whatever the thread count.
ForestModel fit(const Matrix& x, const tree::Targets& y, ForestParams params);

struct OobResult {
    double score = 0.0;
    std::size_t covered = 0;
    std::size_t skipped = 0;
};

using ClassificationMetric =
    std::function<double(std::span<const int> pred, std::span<const int> truth)>;
using RegressionMetric = std::function<double(const Matrix& pred, const Matrix& truth)>;

// Each row scored only by trees whose bootstrap never drew it. Rows covered by
// zero trees are skipped and counted; throws if nothing is covered.
OobResult oob_score(const ForestModel& model, const Matrix& x, const tree::Targets& y,
                    const ClassificationMetric& metric);
OobResult oob_score(const ForestModel& model, const Matrix& x, const tree::Targets& y,
                    const RegressionMetric& metric);

// Mean drop of the OOB metric when feature f is permuted among covered rows,
// over n_permutations seeded shuffles.
std::vector<double> variable_importance(const ForestModel& model, const Matrix& x,
                                        const tree::Targets& y, const ClassificationMetric& metric,
                                        int n_permutations, std::uint64_t seed);
std::vector<double> variable_importance(const ForestModel& model, const Matrix& x,
                                        const tree::Targets& y, const RegressionMetric& metric,
                                        int n_permutations, std::uint64_t seed);

}  // namespace agritime::forest
