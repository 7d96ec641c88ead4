#pragma once

// Independent brute-force split search used as the test oracle. It recomputes
// both child impurities from scratch with two-pass formulas for every
// (feature, threshold) pair, sharing no code with the library's scan.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "agritime/matrix.hpp"

namespace oracle {

inline double gini(const std::vector<int>& labels) {
    int max_label = 0;
    for (int c : labels) max_label = std::max(max_label, c);
    std::vector<double> counts(static_cast<std::size_t>(max_label) + 1, 0.0);
    for (int c : labels) counts[static_cast<std::size_t>(c)] += 1.0;
    double sum_sq = 0.0;
    for (double c : counts) {
        const double p = c / static_cast<double>(labels.size());
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

inline double sse(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return 0.0;
    const std::size_t m = rows.front().size();
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r[j];
        mean /= static_cast<double>(rows.size());
        for (const auto& r : rows) total += (r[j] - mean) * (r[j] - mean);
    }
    return total;
}

struct Split {
    std::size_t feature;
    double threshold;
    double decrease;
};

// Either `labels` (classification) or `targets` (regression) is used.
inline std::optional<Split> best_split(const agritime::Matrix& x,
                                       const std::vector<int>* labels,
                                       const agritime::Matrix* targets,
                                       std::span<const std::size_t> rows,
                                       std::span<const std::size_t> features,
                                       int min_samples_leaf) {
    const std::size_t n = rows.size();
    auto impurity = [&](const std::vector<std::size_t>& subset) {
        if (labels) {
            std::vector<int> l;
            for (std::size_t r : subset) l.push_back((*labels)[r]);
            return gini(l);
        }
        std::vector<std::vector<double>> ys;
        for (std::size_t r : subset) {
            std::vector<double> row;
            for (std::size_t j = 0; j < targets->cols(); ++j) row.push_back((*targets)(r, j));
            ys.push_back(row);
        }
        return sse(ys);
    };

    std::vector<std::size_t> all(rows.begin(), rows.end());
    const double parent = impurity(all);

    std::vector<std::size_t> feats(features.begin(), features.end());
    std::sort(feats.begin(), feats.end());
    feats.erase(std::unique(feats.begin(), feats.end()), feats.end());

    std::optional<Split> best;
    for (std::size_t f : feats) {
        std::vector<double> values;
        for (std::size_t r : rows) values.push_back(x(r, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t i = 0; i + 1 < values.size(); ++i) {
            // Midpoint of adjacent distinct values; kept strictly below the
            // upper value so "<= threshold" separates them.
            double t = (values[i] + values[i + 1]) / 2.0;
            if (!(t < values[i + 1])) t = values[i];
            std::vector<std::size_t> left, right;
            for (std::size_t r : rows) {
                if (x(r, f) <= t)
                    left.push_back(r);
                else
                    right.push_back(r);
            }
            if (left.size() < static_cast<std::size_t>(min_samples_leaf) ||
                right.size() < static_cast<std::size_t>(min_samples_leaf))
                continue;
            const double nl = static_cast<double>(left.size());
            const double nr = static_cast<double>(right.size());
            const double decrease =
                parent - (nl / static_cast<double>(n)) * impurity(left) - (nr / static_cast<double>(n)) * impurity(right);
            if (decrease > 0.0 && (!best || decrease > best->decrease)) {
                best = Split{f, t, decrease};
            }
        }
    }
    return best;
}

}  // namespace oracle
