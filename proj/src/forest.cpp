#include "agritime/forest.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <stdexcept>
#include <thread>

#include "agritime/rng.hpp"

namespace agritime::forest {

namespace {

std::size_t auto_mtry(ModelKind kind, std::size_t p) {
    if (kind == ModelKind::classifier)
        return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
    return std::max<std::size_t>(1, p / 3);
}

int argmax_smallest(std::span<const double> votes) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(votes.size()); ++c)
        if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
    return best;
}

void accumulate_distribution(const tree::Tree& t, std::span<const double> x, std::vector<double>& acc) {
    const auto leaf = t.predict(x);
    double total = 0.0;
    for (double v : leaf) total += v;
    for (std::size_t c = 0; c < leaf.size(); ++c) acc[c] += leaf[c] / total;
}

}  // namespace

ForestModel fit(const Matrix& x, const tree::Targets& y, ForestParams params) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (n < 2) throw std::invalid_argument("forest::fit needs at least 2 rows");
    if (y.size() != n) throw std::invalid_argument("forest::fit: target size mismatch");
    if (params.n_trees < 1) throw std::invalid_argument("forest::fit: n_trees must be >= 1");

    ForestModel model;
    model.kind = y.is_classification() ? ModelKind::classifier : ModelKind::multi_regressor;
    model.n_features = p;
    if (y.is_classification()) {
        model.n_classes = y.n_classes();
        std::set<int> distinct(y.labels().begin(), y.labels().end());
        model.degenerate = distinct.size() < 2;
    } else {
        model.n_targets = y.y().cols();
    }
    if (params.tree.mtry <= 0)
        params.tree.mtry = static_cast<int>(std::min(p, auto_mtry(model.kind, p)));
    params.tree.mtry = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(params.tree.mtry), p));
    model.params = params;

    const int n_trees = params.n_trees;
    model.trees.resize(static_cast<std::size_t>(n_trees));
    model.bootstrap_indices.resize(static_cast<std::size_t>(n_trees));

    auto build_tree = [&](int t) {
        Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t>& sample = model.bootstrap_indices[static_cast<std::size_t>(t)];
        sample.resize(n);
        if (params.bootstrap) {
            for (std::size_t i = 0; i < n; ++i) sample[i] = static_cast<std::size_t>(rng.below(n));
        } else {
            for (std::size_t i = 0; i < n; ++i) sample[i] = i;
        }
        model.trees[static_cast<std::size_t>(t)] = tree::grow_tree(x, y, sample, params.tree, rng);
    };

    int workers = params.n_threads;
    if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, n_trees);

    if (workers <= 1) {
        for (int t = 0; t < n_trees; ++t) build_tree(t);
    } else {
        std::vector<std::future<void>> futures;
        futures.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            futures.push_back(std::async(std::launch::async, [&, w] {
                for (int t = w; t < n_trees; t += workers) build_tree(t);
            }));
        }
        for (auto& f : futures) f.get();
    }
    return model;
}

std::vector<double> ForestModel::class_distribution(std::span<const double> x) const {
    if (kind != ModelKind::classifier) throw std::logic_error("not a classifier");
    std::vector<double> acc(static_cast<std::size_t>(n_classes), 0.0);
    for (const auto& t : trees) accumulate_distribution(t, x, acc);
    for (double& v : acc) v /= static_cast<double>(trees.size());
    return acc;
}

int ForestModel::predict_class(std::span<const double> x) const {
    return argmax_smallest(class_distribution(x));
}

std::vector<double> ForestModel::predict_targets(std::span<const double> x) const {
    if (kind != ModelKind::multi_regressor) throw std::logic_error("not a regressor");
    std::vector<double> acc(n_targets, 0.0);
    for (const auto& t : trees) {
        const auto leaf = t.predict(x);
        for (std::size_t j = 0; j < n_targets; ++j) acc[j] += leaf[j];
    }
    for (double& v : acc) v /= static_cast<double>(trees.size());
    return acc;
}

namespace {

// Rows never drawn by each tree's bootstrap, and per-row lists of trees that
// may vote on it out-of-bag.
std::vector<std::vector<std::size_t>> oob_trees_per_row(const ForestModel& model, std::size_t n) {
    std::vector<std::vector<std::size_t>> result(n);
    std::vector<char> inbag(n);
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        std::fill(inbag.begin(), inbag.end(), 0);
        for (std::size_t r : model.bootstrap_indices[t]) inbag[r] = 1;
        for (std::size_t i = 0; i < n; ++i)
            if (!inbag[i]) result[i].push_back(t);
    }
    return result;
}

void check_oob_preconditions(const ForestModel& model, const Matrix& x) {
    if (model.bootstrap_indices.size() != model.trees.size())
        throw std::invalid_argument("oob_score: model lacks bootstrap indices");
    if (!model.bootstrap_indices.empty() && !model.bootstrap_indices.front().empty() &&
        model.bootstrap_indices.front().size() != x.rows())
        throw std::invalid_argument("oob_score: matrix does not match the training data");
}

}  // namespace

OobResult oob_score(const ForestModel& model, const Matrix& x, const tree::Targets& y,
                    const ClassificationMetric& metric) {
    check_oob_preconditions(model, x);
    const std::size_t n = x.rows();
    const auto oob = oob_trees_per_row(model, n);
    std::vector<int> preds, truths;
    OobResult result;
    std::vector<double> acc(static_cast<std::size_t>(model.n_classes));
    for (std::size_t i = 0; i < n; ++i) {
        if (oob[i].empty()) {
            ++result.skipped;
            continue;
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t t : oob[i]) accumulate_distribution(model.trees[t], x.row(i), acc);
        preds.push_back(argmax_smallest(acc));
        truths.push_back(y.labels()[i]);
        ++result.covered;
    }
    if (result.covered == 0) throw std::runtime_error("oob_score: coverage is 0, grow more trees");
    result.score = metric(preds, truths);
    return result;
}

OobResult oob_score(const ForestModel& model, const Matrix& x, const tree::Targets& y,
                    const RegressionMetric& metric) {
    check_oob_preconditions(model, x);
    const std::size_t n = x.rows();
    const auto oob = oob_trees_per_row(model, n);
    OobResult result;
    std::vector<std::size_t> covered_rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (oob[i].empty())
            ++result.skipped;
        else
            covered_rows.push_back(i);
    }
    if (covered_rows.empty()) throw std::runtime_error("oob_score: coverage is 0, grow more trees");
    result.covered = covered_rows.size();

    Matrix preds(covered_rows.size(), model.n_targets);
    Matrix truths(covered_rows.size(), model.n_targets);
    for (std::size_t k = 0; k < covered_rows.size(); ++k) {
        const std::size_t i = covered_rows[k];
        std::vector<double> acc(model.n_targets, 0.0);
        for (std::size_t t : oob[i]) {
            const auto leaf = model.trees[t].predict(x.row(i));
            for (std::size_t j = 0; j < model.n_targets; ++j) acc[j] += leaf[j];
        }
        for (std::size_t j = 0; j < model.n_targets; ++j) {
            preds(k, j) = acc[j] / static_cast<double>(oob[i].size());
            truths(k, j) = y.y()(i, j);
        }
    }
    result.score = metric(preds, truths);
    return result;
}

namespace {

template <class Metric>
std::vector<double> importance_impl(const ForestModel& model, const Matrix& x, const tree::Targets& y,
                                    const Metric& metric, int n_permutations, std::uint64_t seed) {
    if (n_permutations < 1) throw std::invalid_argument("variable_importance: n_permutations must be >= 1");
    const double baseline = oob_score(model, x, y, metric).score;

    // Permutations shuffle the feature among covered rows only.
    const auto oob = oob_trees_per_row(model, x.rows());
    std::vector<std::size_t> covered;
    for (std::size_t i = 0; i < x.rows(); ++i)
        if (!oob[i].empty()) covered.push_back(i);

    std::vector<double> importance(x.cols(), 0.0);
    for (std::size_t f = 0; f < x.cols(); ++f) {
        double drop_sum = 0.0;
        for (int perm = 0; perm < n_permutations; ++perm) {
            Rng rng(mix_seed(mix_seed(seed, f), static_cast<std::uint64_t>(perm)));
            std::vector<std::size_t> shuffled = covered;
            rng.shuffle(shuffled);
            Matrix permuted = x;
            for (std::size_t k = 0; k < covered.size(); ++k)
                permuted(covered[k], f) = x(shuffled[k], f);
            drop_sum += baseline - oob_score(model, permuted, y, metric).score;
        }
        importance[f] = drop_sum / static_cast<double>(n_permutations);
    }
    return importance;
}

}  // namespace

std::vector<double> variable_importance(const ForestModel& model, const Matrix& x,
                                        const tree::Targets& y, const ClassificationMetric& metric,
                                        int n_permutations, std::uint64_t seed) {
    return importance_impl(model, x, y, metric, n_permutations, seed);
}

std::vector<double> variable_importance(const ForestModel& model, const Matrix& x,
                                        const tree::Targets& y, const RegressionMetric& metric,
                                        int n_permutations, std::uint64_t seed) {
    return importance_impl(model, x, y, metric, n_permutations, seed);
}

}  // namespace agritime::forest
