#include <doctest.h>

#include <cmath>
#include <set>

#include "agritime/tree.hpp"
#include "split_oracle.hpp"

using namespace agritime;
using tree::Targets;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t p, double lo = 0.0, double hi = 1.0) {
    Matrix m(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

std::vector<std::size_t> all_features(std::size_t p) {
    std::vector<std::size_t> f(p);
    for (std::size_t i = 0; i < p; ++i) f[i] = i;
    return f;
}

int tree_depth(const tree::Tree& t, int index = 0) {
    const auto& node = t.nodes[static_cast<std::size_t>(index)];
    if (node.is_leaf) return 0;
    return 1 + std::max(tree_depth(t, node.left), tree_depth(t, node.right));
}

}  // namespace

TEST_SUITE("tree") {

TEST_CASE("gini impurity basics") {
    CHECK(tree::gini_impurity(std::vector<int>{0, 0, 0}) == 0.0);
    CHECK(tree::gini_impurity(std::vector<int>{0, 1}) == doctest::Approx(0.5));
    // 1 - (4/9 + 1/9)
    CHECK(tree::gini_impurity(std::vector<int>{0, 0, 1}) == doctest::Approx(4.0 / 9.0));
    CHECK_THROWS(tree::gini_impurity(std::vector<int>{}));
}

TEST_CASE("gini stays within [0, 1 - 1/C]") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n_classes = 2 + static_cast<int>(rng.below(5));
        std::vector<int> labels;
        const std::size_t n = 1 + rng.below(40);
        for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(n_classes)));
        const double g = tree::gini_impurity(labels);
        CHECK(g >= 0.0);
        CHECK(g <= 1.0 - 1.0 / static_cast<double>(n_classes) + 1e-12);
    }
}

TEST_CASE("multi-target sse basics") {
    CHECK(tree::mt_sse(Matrix::from_rows({{3.0, -1.0, 7.0}})) == 0.0);
    CHECK(tree::mt_sse(Matrix::from_rows({{0.0}, {2.0}})) == doctest::Approx(2.0));
    // constant second target adds nothing
    CHECK(tree::mt_sse(Matrix::from_rows({{0.0, 10.0}, {2.0, 10.0}})) == doctest::Approx(2.0));
    CHECK_THROWS(tree::mt_sse(Matrix()));
}

TEST_CASE("mt_sse equals sum of n*var_j") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        const std::size_t m = 1 + rng.below(4);
        Matrix y = random_matrix(rng, n, m, -5.0, 5.0);
        double expected = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += y(i, j);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) var += (y(i, j) - mean) * (y(i, j) - mean);
            var /= static_cast<double>(n);
            expected += static_cast<double>(n) * var;
        }
        CHECK(tree::mt_sse(y) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("best_split on a perfect two-point problem") {
    Matrix x = Matrix::from_rows({{0.0}, {1.0}});
    auto y = Targets::classification({0, 1}, 2);
    auto split = tree::best_split(x, y, all_features(1), 1);
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
    CHECK(split->threshold == doctest::Approx(0.5));
    CHECK(split->impurity_decrease == doctest::Approx(0.5));
}

TEST_CASE("best_split returns none when every feature is constant") {
    Matrix x = Matrix::from_rows({{2.0, 7.0}, {2.0, 7.0}, {2.0, 7.0}});
    auto y = Targets::classification({0, 1, 0}, 2);
    CHECK_FALSE(tree::best_split(x, y, all_features(2), 1).has_value());
}

TEST_CASE("best_split matches the brute-force oracle") {
    Rng rng(23);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(29);
        const std::size_t p = 1 + rng.below(4);
        const bool classification = rng.uniform() < 0.5;
        Matrix x = random_matrix(rng, n, p);
        const int min_leaf = 1 + static_cast<int>(rng.below(3));
        const auto feats = all_features(p);
        const auto row_ids = all_features(n);

        if (classification) {
            const int n_classes = 2 + static_cast<int>(rng.below(3));
            std::vector<int> labels;
            for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(n_classes)));
            auto y = Targets::classification(labels, n_classes);
            auto got = tree::best_split(x, y, feats, min_leaf);
            auto want = oracle::best_split(x, &labels, nullptr, row_ids, feats, min_leaf);
            REQUIRE(got.has_value() == want.has_value());
            if (got) {
                CHECK(got->feature == want->feature);
                CHECK(got->threshold == want->threshold);
                CHECK(got->impurity_decrease == doctest::Approx(want->decrease).epsilon(1e-9));
            }
        } else {
            const std::size_t m = 1 + rng.below(3);
            Matrix targets = random_matrix(rng, n, m, -10.0, 10.0);
            auto y = Targets::regression(targets);
            auto got = tree::best_split(x, y, feats, min_leaf);
            auto want = oracle::best_split(x, nullptr, &targets, row_ids, feats, min_leaf);
            REQUIRE(got.has_value() == want.has_value());
            if (got) {
                CHECK(got->feature == want->feature);
                CHECK(got->threshold == want->threshold);
                CHECK(got->impurity_decrease == doctest::Approx(want->decrease).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("weighted child impurity never exceeds the parent") {
    Rng rng(29);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng.below(25);
        const bool classification = rng.uniform() < 0.5;
        Matrix x = random_matrix(rng, n, 2);
        std::optional<tree::SplitCandidate> split;
        double parent = 0.0;
        std::vector<std::size_t> rows = all_features(n);  // 0..n-1
        if (classification) {
            std::vector<int> labels;
            for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(3)));
            auto y = Targets::classification(labels, 3);
            parent = tree::node_impurity(y, rows);
            split = tree::best_split(x, y, all_features(2), 1);
            if (!split) continue;
            std::vector<int> l, r;
            for (std::size_t i = 0; i < n; ++i)
                (x(i, split->feature) <= split->threshold ? l : r).push_back(labels[i]);
            const double weighted = tree::gini_impurity(l) * static_cast<double>(l.size()) +
                                    tree::gini_impurity(r) * static_cast<double>(r.size());
            CHECK(weighted <= parent * static_cast<double>(n) + 1e-9);
        } else {
            Matrix targets = random_matrix(rng, n, 2, -3.0, 3.0);
            auto y = Targets::regression(targets);
            parent = tree::node_impurity(y, rows);
            split = tree::best_split(x, y, all_features(2), 1);
            if (!split) continue;
            std::vector<std::size_t> l, r;
            for (std::size_t i = 0; i < n; ++i)
                (x(i, split->feature) <= split->threshold ? l : r).push_back(i);
            const double weighted = tree::node_impurity(y, l) * static_cast<double>(l.size()) +
                                    tree::node_impurity(y, r) * static_cast<double>(r.size());
            CHECK(weighted <= parent * static_cast<double>(n) + 1e-9);
        }
        CHECK(split->impurity_decrease > 0.0);
    }
}

TEST_CASE("single training row grows a single leaf") {
    Matrix x = Matrix::from_rows({{1.5, 2.5}});
    auto y = Targets::regression(Matrix::from_rows({{4.0, 8.0}}));
    Rng rng(1);
    auto t = tree::grow_tree(x, y, tree::TreeParams{}, rng);
    REQUIRE(t.nodes.size() == 1);
    CHECK(t.nodes[0].is_leaf);
    auto pred = t.predict(x.row(0));
    CHECK(pred[0] == 4.0);
    CHECK(pred[1] == 8.0);
}

TEST_CASE("max_depth 0 gives the root leaf with global stats") {
    Matrix x = Matrix::from_rows({{0.0}, {1.0}, {2.0}});
    auto y = Targets::classification({0, 1, 1}, 2);
    tree::TreeParams params;
    params.max_depth = 0;
    Rng rng(2);
    auto t = tree::grow_tree(x, y, params, rng);
    REQUIRE(t.nodes.size() == 1);
    CHECK(t.nodes[0].value == std::vector<double>{1.0, 2.0});
}

TEST_CASE("trees grown to purity reproduce the training set") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(25);
        const std::size_t p = 1 + rng.below(3);
        Matrix x = random_matrix(rng, n, p);  // continuous, rows distinct w.p. 1
        tree::TreeParams params;
        params.min_samples_leaf = 1;
        params.min_samples_split = 2;

        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(3)));
        auto yc = Targets::classification(labels, 3);
        Rng grow_rng(100 + trial);
        auto tc = tree::grow_tree(x, yc, params, grow_rng);
        for (std::size_t i = 0; i < n; ++i) {
            auto dist = tc.predict(x.row(i));
            int argmax = 0;
            for (int c = 1; c < 3; ++c)
                if (dist[c] > dist[argmax]) argmax = c;
            CHECK(argmax == labels[i]);
        }

        Matrix targets = random_matrix(rng, n, 2, -4.0, 4.0);
        auto yr = Targets::regression(targets);
        Rng grow_rng2(200 + trial);
        auto tr = tree::grow_tree(x, yr, params, grow_rng2);
        for (std::size_t i = 0; i < n; ++i) {
            auto pred = tr.predict(x.row(i));
            CHECK(pred[0] == doctest::Approx(targets(i, 0)).epsilon(1e-12));
            CHECK(pred[1] == doctest::Approx(targets(i, 1)).epsilon(1e-12));
        }
    }
}

TEST_CASE("routing sends values equal to the threshold left") {
    tree::Tree t;
    t.n_features = 1;
    t.nodes.resize(3);
    t.nodes[0].is_leaf = false;
    t.nodes[0].feature = 0;
    t.nodes[0].threshold = 1.5;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[1].value = {1.0};
    t.nodes[2].value = {2.0};
    const double probe = 1.5;
    CHECK(t.predict(std::span<const double>(&probe, 1))[0] == 1.0);
}

TEST_CASE("predict rejects wrong feature count") {
    Matrix x = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
    auto y = Targets::classification({0, 1}, 2);
    Rng rng(3);
    auto t = tree::grow_tree(x, y, tree::TreeParams{}, rng);
    std::vector<double> bad{1.0};
    CHECK_THROWS(t.predict(bad));
}

TEST_CASE("growth respects depth and leaf-size limits and is deterministic") {
    Rng data_rng(37);
    Matrix x = random_matrix(data_rng, 120, 4);
    std::vector<int> labels;
    for (std::size_t i = 0; i < 120; ++i) labels.push_back(static_cast<int>(data_rng.below(4)));
    auto y = Targets::classification(labels, 4);

    tree::TreeParams params;
    params.max_depth = 4;
    params.min_samples_leaf = 7;
    params.mtry = 2;

    Rng g1(99), g2(99);
    auto t1 = tree::grow_tree(x, y, params, g1);
    auto t2 = tree::grow_tree(x, y, params, g2);
    REQUIRE(t1.nodes.size() == t2.nodes.size());
    for (std::size_t i = 0; i < t1.nodes.size(); ++i) {
        CHECK(t1.nodes[i].is_leaf == t2.nodes[i].is_leaf);
        CHECK(t1.nodes[i].feature == t2.nodes[i].feature);
        CHECK(t1.nodes[i].threshold == t2.nodes[i].threshold);
        CHECK(t1.nodes[i].value == t2.nodes[i].value);
    }

    CHECK(tree_depth(t1) <= 4);
    for (const auto& node : t1.nodes)
        if (node.is_leaf) CHECK(node.n_samples >= 7);
}

}  // TEST_SUITE
