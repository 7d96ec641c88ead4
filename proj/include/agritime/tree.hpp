#pragma once

#include <optional>
#include <span>
#include <vector>

#include "agritime/matrix.hpp"
#include "agritime/rng.hpp"

namespace agritime::tree {

struct TreeParams {
    int max_depth = -1;         // < 0: unlimited
    int min_samples_split = 2;
    int min_samples_leaf = 1;   // regression growers usually want >= 5
    int mtry = 0;               // candidate features per node; <= 0: all features
};

// Training targets: integer class labels or an n x m matrix of regression
// targets. The split criterion follows the kind: Gini impurity for labels,
// multi-target sum of squared errors for target matrices.
class Targets {
public:
    static Targets classification(std::vector<int> labels, int n_classes);
    static Targets regression(Matrix y);

    bool is_classification() const { return classification_; }
    std::size_t size() const { return classification_ ? labels_.size() : y_.rows(); }
    // Prediction width: class count for classifiers, target count for regressors.
    std::size_t value_dim() const { return classification_ ? static_cast<std::size_t>(n_classes_) : y_.cols(); }

    const std::vector<int>& labels() const { return labels_; }
    int n_classes() const { return n_classes_; }
    const Matrix& y() const { return y_; }

private:
    bool classification_ = false;
    std::vector<int> labels_;
    int n_classes_ = 0;
    Matrix y_;
};

struct SplitCandidate {
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity_decrease = 0.0;
};

struct TreeNode {
    bool is_leaf = true;
    std::size_t feature = 0;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int n_samples = 0;
    std::vector<double> value;  // class counts (classification) or target means (regression)
};

// Nodes stored in a flat vector, root at index 0. Routing rule is
// x[feature] <= threshold -> left.
class Tree {
public:
    std::vector<TreeNode> nodes;
    std::size_t n_features = 0;

    // Leaf value for x; throws on feature-count mismatch.
    std::span<const double> predict(std::span<const double> x) const;
    const TreeNode& leaf_for(std::span<const double> x) const;
};

// 1 - sum of squared class frequencies; in [0, 1 - 1/C]. Throws on empty input.
double gini_impurity(std::span<const int> labels);

// Sum over targets of within-column squared deviations from the column mean.
// For one column this is the ordinary node SSE. Throws on empty input.
double mt_sse(const Matrix& targets);

// Node impurity of a row subset under the targets' criterion.
double node_impurity(const Targets& y, std::span<const std::size_t> rows);

// Exhaustive best split over every midpoint threshold of every feature in
// `features`: maximizes I(node) - (nL/n) I(left) - (nR/n) I(right) subject to
// both children holding >= min_samples_leaf rows. Ties break toward the lowest
// feature index, then the lowest threshold. Returns nullopt when no candidate
// has a strictly positive decrease.
std::optional<SplitCandidate> best_split(const Matrix& x, const Targets& y,
                                         std::span<const std::size_t> rows,
                                         std::span<const std::size_t> features,
                                         int min_samples_leaf);

// Convenience overload over all rows.
std::optional<SplitCandidate> best_split(const Matrix& x, const Targets& y,
                                         std::span<const std::size_t> features,
                                         int min_samples_leaf);

// Recursive CART growth. Each node draws its own random feature subset of size
// params.mtry (without replacement) from rng. A node becomes a leaf at
// max_depth, below min_samples_split, at zero impurity, or when no split
// improves.
Tree grow_tree(const Matrix& x, const Targets& y, std::span<const std::size_t> rows,
               const TreeParams& params, Rng& rng);
Tree grow_tree(const Matrix& x, const Targets& y, const TreeParams& params, Rng& rng);

}  // namespace agritime::tree
