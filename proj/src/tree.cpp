#include "agritime/tree.hpp"

#include <algorithm>
#include <stdexcept>

namespace agritime::tree {

Targets Targets::classification(std::vector<int> labels, int n_classes) {
    if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
    for (int c : labels)
        if (c < 0 || c >= n_classes) throw std::invalid_argument("class label out of range");
    Targets t;
    t.classification_ = true;
    t.labels_ = std::move(labels);
    t.n_classes_ = n_classes;
    return t;
}

Targets Targets::regression(Matrix y) {
    if (!y.all_finite()) throw std::invalid_argument("regression targets must be finite");
    Targets t;
    t.classification_ = false;
    t.y_ = std::move(y);
    return t;
}

double gini_impurity(std::span<const int> labels) {
    if (labels.empty()) throw std::invalid_argument("gini_impurity: empty label set");
    int max_label = 0;
    for (int c : labels) max_label = std::max(max_label, c);
    std::vector<double> counts(static_cast<std::size_t>(max_label) + 1, 0.0);
    for (int c : labels) counts[static_cast<std::size_t>(c)] += 1.0;
    const double n = static_cast<double>(labels.size());
    double sum_sq = 0.0;
    for (double c : counts) {
        const double p = c / n;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

double mt_sse(const Matrix& targets) {
    if (targets.empty()) throw std::invalid_argument("mt_sse: empty target matrix");
    double total = 0.0;
    for (std::size_t j = 0; j < targets.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < targets.rows(); ++i) mean += targets(i, j);
        mean /= static_cast<double>(targets.rows());
        double sse = 0.0;
        for (std::size_t i = 0; i < targets.rows(); ++i) {
            const double d = targets(i, j) - mean;
            sse += d * d;
        }
        total += sse;
    }
    return total;
}

namespace {

double gini_from_counts(std::span<const double> counts, double n) {
    double sum_sq = 0.0;
    for (double c : counts) {
        const double p = c / n;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

// SSE from running per-target sums and sums of squares.
double sse_from_moments(std::span<const double> sum, std::span<const double> sum_sq, double n) {
    double total = 0.0;
    for (std::size_t j = 0; j < sum.size(); ++j) {
        const double sse = sum_sq[j] - sum[j] * sum[j] / n;
        total += std::max(0.0, sse);
    }
    return total;
}

struct ValueRow {
    double value;
    std::size_t row;
};

}  // namespace

double node_impurity(const Targets& y, std::span<const std::size_t> rows) {
    if (rows.empty()) throw std::invalid_argument("node_impurity: empty node");
    if (y.is_classification()) {
        std::vector<int> labels(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = y.labels()[rows[i]];
        return gini_impurity(labels);
    }
    const Matrix& full = y.y();
    Matrix sub(rows.size(), full.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < full.cols(); ++j) sub(i, j) = full(rows[i], j);
    return mt_sse(sub);
}

namespace {

// Two-pass SSE over a row subset, iterated in the subset's order. Candidates
// that induce the same partition produce bitwise-identical values here, which
// the moment-based scan cannot guarantee (its accumulation order follows each
// feature's sort), so exact ties stay ties.
double canonical_sse(const Matrix& y, const std::vector<std::size_t>& rows) {
    double total = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t r : rows) mean += y(r, j);
        mean /= static_cast<double>(rows.size());
        for (std::size_t r : rows) total += (y(r, j) - mean) * (y(r, j) - mean);
    }
    return total;
}

}  // namespace

std::optional<SplitCandidate> best_split(const Matrix& x, const Targets& y,
                                         std::span<const std::size_t> rows,
                                         std::span<const std::size_t> features,
                                         int min_samples_leaf) {
    if (rows.size() < 2) throw std::invalid_argument("best_split: node needs >= 2 rows");
    if (features.empty()) throw std::invalid_argument("best_split: empty feature subset");
    if (min_samples_leaf < 1) min_samples_leaf = 1;

    const std::size_t n = rows.size();
    const double n_d = static_cast<double>(n);
    const double parent = node_impurity(y, rows);
    const std::size_t min_leaf = static_cast<std::size_t>(min_samples_leaf);

    // Features in ascending order so the tie rule is scan order.
    std::vector<std::size_t> feats(features.begin(), features.end());
    std::sort(feats.begin(), feats.end());
    feats.erase(std::unique(feats.begin(), feats.end()), feats.end());

    std::optional<SplitCandidate> best;
    double best_approx = 0.0;  // regression pass 1: largest moment-based decrease
    std::vector<ValueRow> order(n);

    const bool cls = y.is_classification();
    const std::size_t m = cls ? static_cast<std::size_t>(y.n_classes()) : y.y().cols();
    std::vector<double> left(m), total(m), right(m);
    std::vector<double> left_sq, total_sq, right_sq;
    if (!cls) {
        left_sq.resize(m);
        total_sq.resize(m);
        right_sq.resize(m);
    }

    for (std::size_t f : feats) {
        for (std::size_t i = 0; i < n; ++i) order[i] = {x(rows[i], f), rows[i]};
        std::stable_sort(order.begin(), order.end(),
                         [](const ValueRow& a, const ValueRow& b) { return a.value < b.value; });
        if (order.front().value == order.back().value) continue;  // constant feature

        std::fill(left.begin(), left.end(), 0.0);
        std::fill(total.begin(), total.end(), 0.0);
        if (!cls) {
            std::fill(left_sq.begin(), left_sq.end(), 0.0);
            std::fill(total_sq.begin(), total_sq.end(), 0.0);
        }
        for (const ValueRow& vr : order) {
            if (cls) {
                total[static_cast<std::size_t>(y.labels()[vr.row])] += 1.0;
            } else {
                for (std::size_t j = 0; j < m; ++j) {
                    const double v = y.y()(vr.row, j);
                    total[j] += v;
                    total_sq[j] += v * v;
                }
            }
        }

        for (std::size_t i = 0; i + 1 < n; ++i) {
            const std::size_t r = order[i].row;
            if (cls) {
                left[static_cast<std::size_t>(y.labels()[r])] += 1.0;
            } else {
                for (std::size_t j = 0; j < m; ++j) {
                    const double v = y.y()(r, j);
                    left[j] += v;
                    left_sq[j] += v * v;
                }
            }
            const double lo = order[i].value;
            const double hi = order[i + 1].value;
            if (lo == hi) continue;

            const std::size_t n_left = i + 1;
            const std::size_t n_right = n - n_left;
            if (n_left < min_leaf || n_right < min_leaf) continue;

            // Midpoint of the adjacent distinct values; if rounding pushes it
            // up to hi, fall back to lo so that "<= threshold" still separates
            // exactly the prefix counted as the left child.
            double threshold = (lo + hi) / 2.0;
            if (!(threshold < hi)) threshold = lo;

            const double nl = static_cast<double>(n_left);
            const double nr = static_cast<double>(n_right);
            double left_imp, right_imp;
            if (cls) {
                left_imp = gini_from_counts(left, nl);
                for (std::size_t j = 0; j < m; ++j) right[j] = total[j] - left[j];
                right_imp = gini_from_counts(right, nr);
            } else {
                left_imp = sse_from_moments(left, left_sq, nl);
                for (std::size_t j = 0; j < m; ++j) {
                    right[j] = total[j] - left[j];
                    right_sq[j] = total_sq[j] - left_sq[j];
                }
                right_imp = sse_from_moments(right, right_sq, nr);
            }
            const double decrease = parent - (nl / n_d) * left_imp - (nr / n_d) * right_imp;
            if (cls) {
                // Class counts are integers, so equal partitions give bitwise
                // equal decreases; first-wins already breaks ties by (feature,
                // threshold).
                if (decrease > 0.0 && (!best || decrease > best->impurity_decrease))
                    best = SplitCandidate{f, threshold, decrease};
            } else {
                best_approx = std::max(best_approx, decrease);
            }
        }
    }
    if (cls) return best;
    if (!(best_approx > 0.0)) return std::nullopt;

    // Regression pass 2: the moment-based decreases above can split exact ties
    // by an ulp depending on accumulation order. Re-evaluate every candidate
    // within a hair of the maximum with the order-canonical two-pass SSE and
    // break remaining ties by (feature, threshold).
    const double tol = 1e-9 * std::max(1.0, std::abs(best_approx));
    const Matrix& ym = y.y();
    const std::vector<std::size_t> row_order(rows.begin(), rows.end());
    const double canonical_parent = canonical_sse(ym, row_order);
    std::vector<std::size_t> left_rows, right_rows;

    for (std::size_t f : feats) {
        for (std::size_t i = 0; i < n; ++i) order[i] = {x(rows[i], f), rows[i]};
        std::stable_sort(order.begin(), order.end(),
                         [](const ValueRow& a, const ValueRow& b) { return a.value < b.value; });
        if (order.front().value == order.back().value) continue;

        std::fill(left.begin(), left.end(), 0.0);
        std::fill(left_sq.begin(), left_sq.end(), 0.0);
        std::fill(total.begin(), total.end(), 0.0);
        std::fill(total_sq.begin(), total_sq.end(), 0.0);
        for (const ValueRow& vr : order)
            for (std::size_t j = 0; j < m; ++j) {
                const double v = ym(vr.row, j);
                total[j] += v;
                total_sq[j] += v * v;
            }

        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double v = ym(order[i].row, j);
                left[j] += v;
                left_sq[j] += v * v;
            }
            const double lo = order[i].value;
            const double hi = order[i + 1].value;
            if (lo == hi) continue;
            const std::size_t n_left = i + 1;
            const std::size_t n_right = n - n_left;
            if (n_left < min_leaf || n_right < min_leaf) continue;
            double threshold = (lo + hi) / 2.0;
            if (!(threshold < hi)) threshold = lo;

            const double nl = static_cast<double>(n_left);
            const double nr = static_cast<double>(n_right);
            for (std::size_t j = 0; j < m; ++j) {
                right[j] = total[j] - left[j];
                right_sq[j] = total_sq[j] - left_sq[j];
            }
            const double approx = parent - (nl / n_d) * sse_from_moments(left, left_sq, nl) -
                                  (nr / n_d) * sse_from_moments(right, right_sq, nr);
            if (approx < best_approx - tol) continue;

            left_rows.clear();
            right_rows.clear();
            for (std::size_t r : row_order)
                (x(r, f) <= threshold ? left_rows : right_rows).push_back(r);
            const double decrease = canonical_parent -
                                    (nl / n_d) * canonical_sse(ym, left_rows) -
                                    (nr / n_d) * canonical_sse(ym, right_rows);
            if (decrease > 0.0 && (!best || decrease > best->impurity_decrease))
                best = SplitCandidate{f, threshold, decrease};
        }
    }
    return best;
}

std::optional<SplitCandidate> best_split(const Matrix& x, const Targets& y,
                                         std::span<const std::size_t> features,
                                         int min_samples_leaf) {
    std::vector<std::size_t> rows(x.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return best_split(x, y, rows, features, min_samples_leaf);
}

namespace {

std::vector<double> leaf_value(const Targets& y, std::span<const std::size_t> rows) {
    if (y.is_classification()) {
        std::vector<double> counts(static_cast<std::size_t>(y.n_classes()), 0.0);
        for (std::size_t r : rows) counts[static_cast<std::size_t>(y.labels()[r])] += 1.0;
        return counts;
    }
    const Matrix& full = y.y();
    std::vector<double> means(full.cols(), 0.0);
    for (std::size_t r : rows)
        for (std::size_t j = 0; j < full.cols(); ++j) means[j] += full(r, j);
    for (double& v : means) v /= static_cast<double>(rows.size());
    return means;
}

struct Grower {
    const Matrix& x;
    const Targets& y;
    const TreeParams& params;
    Rng& rng;
    Tree tree;

    int build(std::vector<std::size_t>& rows, int depth) {
        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[index].n_samples = static_cast<int>(rows.size());

        std::optional<SplitCandidate> split;
        const bool depth_capped = params.max_depth >= 0 && depth >= params.max_depth;
        if (!depth_capped && rows.size() >= static_cast<std::size_t>(std::max(2, params.min_samples_split)) &&
            node_impurity(y, rows) > 0.0) {
            const std::size_t p = x.cols();
            std::size_t mtry = params.mtry <= 0 ? p : std::min<std::size_t>(static_cast<std::size_t>(params.mtry), p);
            const std::vector<std::size_t> feats = rng.sample_without_replacement(p, mtry);
            split = best_split(x, y, rows, feats, params.min_samples_leaf);
        }

        if (!split) {
            tree.nodes[index].is_leaf = true;
            tree.nodes[index].value = leaf_value(y, rows);
            return index;
        }

        std::vector<std::size_t> left_rows, right_rows;
        left_rows.reserve(rows.size());
        right_rows.reserve(rows.size());
        for (std::size_t r : rows) {
            if (x(r, split->feature) <= split->threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        const int left = build(left_rows, depth + 1);
        const int right = build(right_rows, depth + 1);
        TreeNode& node = tree.nodes[index];
        node.is_leaf = false;
        node.feature = split->feature;
        node.threshold = split->threshold;
        node.left = left;
        node.right = right;
        return index;
    }
};

}  // namespace

Tree grow_tree(const Matrix& x, const Targets& y, std::span<const std::size_t> rows,
               const TreeParams& params, Rng& rng) {
    if (rows.empty()) throw std::invalid_argument("grow_tree: empty training set");
    if (y.size() != x.rows()) throw std::invalid_argument("grow_tree: row count mismatch");
    Grower g{x, y, params, rng, {}};
    g.tree.n_features = x.cols();
    std::vector<std::size_t> work(rows.begin(), rows.end());
    g.build(work, 0);
    return std::move(g.tree);
}

Tree grow_tree(const Matrix& x, const Targets& y, const TreeParams& params, Rng& rng) {
    std::vector<std::size_t> rows(x.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return grow_tree(x, y, rows, params, rng);
}

const TreeNode& Tree::leaf_for(std::span<const double> x) const {
    if (x.size() != n_features)
        throw std::invalid_argument("predict: expected " + std::to_string(n_features) + " features, got " +
                                    std::to_string(x.size()));
    const TreeNode* node = &nodes.front();
    while (!node->is_leaf) {
        node = x[node->feature] <= node->threshold ? &nodes[static_cast<std::size_t>(node->left)]
                                                   : &nodes[static_cast<std::size_t>(node->right)];
    }
    return *node;
}

std::span<const double> Tree::predict(std::span<const double> x) const {
    return leaf_for(x).value;
}

}  // namespace agritime::tree
