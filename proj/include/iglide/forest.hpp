#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "iglide/data.hpp"
#include "iglide/rng.hpp"

namespace iglide {

struct ForestConfig {
    int n_estimators = 100;
    int max_depth = 10;
    int min_samples_split = 2;
    std::uint64_t random_state = 42;
    bool bootstrap = true;
    int max_features = -1;  // -1: consider every feature at every split

    void validate() const {
        if (n_estimators < 1) throw ConfigError("n_estimators must be >= 1");
        if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
        if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
        if (max_features == 0 || max_features < -1) {
            throw ConfigError("max_features must be -1 (all) or >= 1");
        }
    }
};

/// Flat node array in depth-first pre-order (parent, left subtree, right
/// subtree). Internal nodes route x[feature] <= threshold to `left`; leaves
/// have feature -1 and carry the mean training target.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict_row(const Mat& X, Eigen::Index r) const {
        int at = 0;
        while (!nodes[static_cast<std::size_t>(at)].is_leaf()) {
            const auto& nd = nodes[static_cast<std::size_t>(at)];
            at = (X(r, nd.feature) <= nd.threshold) ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }

    double predict(const Vec& x) const {
        Mat row = x.transpose();
        return predict_row(row, 0);
    }
};

struct Forest {
    std::vector<RegressionTree> trees;
    std::vector<std::string> feature_names;
    ForestConfig config;
    std::uint64_t config_hash = 0;  // set by the pipeline for manifest checks
};

namespace detail {

/// Deterministic CART builder. Split search runs in two passes. A prefix-sum
/// scan ranks every candidate boundary by variance reduction; those running
/// sums follow each feature's sort order, so two mathematically tied
/// partitions reached through different features can score a few ulps apart,
/// and the winner would depend on accumulation order. Every candidate within
/// a rounding-error window of that best is therefore re-scored canonically —
/// subset SSEs accumulated in ascending sample order — and the final scan
/// takes the first strictly-better reduction over features in ascending index
/// order and thresholds in ascending value order. Exact ties resolve to the
/// lowest feature index, then the lowest threshold, independent of the order
/// the fast pass met them. Candidate thresholds are midpoints lo + (hi - lo)/2
/// between consecutive distinct values (clamped back to lo if rounding lands
/// on hi). Sample index lists stay ascending so leaf means are summed in a
/// reproducible order.
struct TreeBuilder {
    const Mat& X;
    const Vec& y;
    const ForestConfig& cfg;
    RngStream& rng;
    std::vector<TreeNode> nodes;

    int leaf(const std::vector<int>& idx) {
        double s = 0.0;
        for (int i : idx) s += y(i);
        TreeNode nd;
        nd.value = s / static_cast<double>(idx.size());
        nodes.push_back(nd);
        return static_cast<int>(nodes.size()) - 1;
    }

    std::vector<int> split_candidates() {
        const int F = static_cast<int>(X.cols());
        if (cfg.max_features < 0 || cfg.max_features >= F) {
            std::vector<int> all(static_cast<std::size_t>(F));
            for (int f = 0; f < F; ++f) all[static_cast<std::size_t>(f)] = f;
            return all;
        }
        // Partial Fisher-Yates draw of max_features distinct indices,
        // sorted so the tie-break order stays by feature index.
        std::vector<int> pool(static_cast<std::size_t>(F));
        for (int f = 0; f < F; ++f) pool[static_cast<std::size_t>(f)] = f;
        std::vector<int> pick;
        for (int i = 0; i < cfg.max_features; ++i) {
            const auto j = static_cast<std::size_t>(i) +
                           static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(F - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
            pick.push_back(pool[static_cast<std::size_t>(i)]);
        }
        std::sort(pick.begin(), pick.end());
        return pick;
    }

    /// SSE of `idx` in ascending sample order, two-pass — the canonical form
    /// whose rounding does not depend on any per-feature sort.
    double canon_sse(const std::vector<int>& idx) const {
        double mean = 0.0;
        for (int i : idx) mean += y(i);
        mean /= static_cast<double>(idx.size());
        double sse = 0.0;
        for (int i : idx) {
            const double d = y(i) - mean;
            sse += d * d;
        }
        return sse;
    }

    /// Variance reduction of splitting `idx` at (f, thr), children accumulated
    /// in ascending sample order like canon_sse.
    double canon_gain(const std::vector<int>& idx, double parent_sse, int f, double thr) const {
        double sl = 0.0, sr = 0.0;
        int nl = 0, nr = 0;
        for (int i : idx) {
            if (X(i, f) <= thr) {
                sl += y(i);
                ++nl;
            } else {
                sr += y(i);
                ++nr;
            }
        }
        const double ml = sl / static_cast<double>(nl);
        const double mr = sr / static_cast<double>(nr);
        double el = 0.0, er = 0.0;
        for (int i : idx) {
            if (X(i, f) <= thr) {
                const double d = y(i) - ml;
                el += d * d;
            } else {
                const double d = y(i) - mr;
                er += d * d;
            }
        }
        return parent_sse - el - er;
    }

    int build(const std::vector<int>& idx, int depth) {
        const auto n = static_cast<int>(idx.size());
        double s = 0.0, q = 0.0;
        double ymin = y(idx.front()), ymax = ymin;
        for (int i : idx) {
            s += y(i);
            q += y(i) * y(i);
            ymin = std::min(ymin, y(i));
            ymax = std::max(ymax, y(i));
        }
        if (ymin == ymax || n < cfg.min_samples_split || depth >= cfg.max_depth) {
            return leaf(idx);
        }

        double best_gain = 0.0, best_thr = 0.0;
        int best_f = -1;
        {
            const double parent_fast = q - s * s / n;

            struct Cand {
                int f;
                double thr;
                double gain_fast;
            };
            std::vector<Cand> cands;  // feature-ascending, threshold-ascending
            double best_fast = 0.0;
            std::vector<std::pair<double, double>> vy(static_cast<std::size_t>(n));
            for (int f : split_candidates()) {
                for (int i = 0; i < n; ++i) {
                    const int r = idx[static_cast<std::size_t>(i)];
                    vy[static_cast<std::size_t>(i)] = {X(r, f), y(r)};
                }
                std::stable_sort(vy.begin(), vy.end(),
                                 [](const auto& a, const auto& b) { return a.first < b.first; });
                double sl = 0.0, ql = 0.0;
                for (int i = 1; i < n; ++i) {
                    const double yv = vy[static_cast<std::size_t>(i - 1)].second;
                    sl += yv;
                    ql += yv * yv;
                    const double lo = vy[static_cast<std::size_t>(i - 1)].first;
                    const double hi = vy[static_cast<std::size_t>(i)].first;
                    if (lo == hi) continue;
                    double thr = lo + (hi - lo) / 2.0;
                    if (thr >= hi) thr = lo;
                    const double sr = s - sl, qr = q - ql;
                    const double sse_l = ql - sl * sl / i;
                    const double sse_r = qr - sr * sr / (n - i);
                    const double gain = parent_fast - sse_l - sse_r;
                    cands.push_back({f, thr, gain});
                    best_fast = std::max(best_fast, gain);
                }
            }
            if (cands.empty()) return leaf(idx);

            // Generous bound on |fast - canonical| so no contender is pruned.
            const double eps = std::numeric_limits<double>::epsilon();
            const double ymag = std::max(std::abs(ymin), std::abs(ymax));
            const double tol =
                128.0 * eps * n * (q + static_cast<double>(n) * ymag * ymag + 1.0);
            const double window_lo = std::max(best_fast, 0.0) - tol;
            double parent_canon = 0.0;
            bool have_parent = false;
            for (const Cand& c : cands) {
                if (!(c.gain_fast > window_lo)) continue;
                if (!have_parent) {
                    parent_canon = canon_sse(idx);
                    have_parent = true;
                }
                const double gain = canon_gain(idx, parent_canon, c.f, c.thr);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_f = c.f;
                    best_thr = c.thr;
                }
            }
        }
        if (best_f < 0) return leaf(idx);  // no split improves on the parent

        std::vector<int> left_idx, right_idx;
        for (int i : idx) {
            (X(i, best_f) <= best_thr ? left_idx : right_idx).push_back(i);
        }
        const int at = static_cast<int>(nodes.size());
        TreeNode nd;
        nd.feature = best_f;
        nd.threshold = best_thr;
        nodes.push_back(nd);
        nodes[static_cast<std::size_t>(at)].left = build(left_idx, depth + 1);
        nodes[static_cast<std::size_t>(at)].right = build(right_idx, depth + 1);
        return at;
    }
};

inline RegressionTree fit_tree(const Mat& X, const Vec& y, const ForestConfig& cfg,
                               std::uint64_t tree_seed) {
    RngStream rng(tree_seed);
    const auto n = static_cast<int>(X.rows());
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(n));
    if (cfg.bootstrap) {
        for (int i = 0; i < n; ++i) {
            idx.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n))));
        }
        std::sort(idx.begin(), idx.end());
    } else {
        for (int i = 0; i < n; ++i) idx.push_back(i);
    }
    TreeBuilder tb{X, y, cfg, rng, {}};
    tb.build(idx, 0);
    RegressionTree t;
    t.nodes = std::move(tb.nodes);
    return t;
}

}  // namespace detail

/// Fit the bagged regression forest. Each tree draws a size-n bootstrap
/// resample (when enabled) from its own stream seeded by mixing random_state
/// with the tree index, so trees are independent of build order and `jobs`.
inline Forest fit_forest(const Mat& X, const Vec& y, const ForestConfig& cfg,
                         const std::vector<std::string>& feature_names = {}, int jobs = 1) {
    cfg.validate();
    if (X.rows() == 0) throw FitError("fit_forest: empty training set");
    if (X.rows() != y.size()) {
        throw FitError("fit_forest: " + std::to_string(X.rows()) + " rows vs " +
                       std::to_string(y.size()) + " targets");
    }
    if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != X.cols()) {
        throw FitError("fit_forest: feature name manifest does not match column count");
    }
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (!X.col(c).allFinite()) {
            std::string label = feature_names.empty()
                                    ? std::to_string(c)
                                    : std::to_string(c) + " ('" + feature_names[static_cast<std::size_t>(c)] + "')";
            throw FitError("fit_forest: non-finite value in feature column " + label);
        }
    }
    if (!y.allFinite()) throw FitError("fit_forest: non-finite target value");

    Forest f;
    f.config = cfg;
    f.feature_names = feature_names;
    f.trees.resize(static_cast<std::size_t>(cfg.n_estimators));
    auto fit_one = [&](int t) {
        f.trees[static_cast<std::size_t>(t)] =
            detail::fit_tree(X, y, cfg, derive_seed(cfg.random_state, static_cast<std::uint64_t>(t)));
    };
    if (jobs <= 1 || cfg.n_estimators == 1) {
        for (int t = 0; t < cfg.n_estimators; ++t) fit_one(t);
    } else {
        std::atomic<int> next{0};
        const int workers = std::min(jobs, cfg.n_estimators);
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < cfg.n_estimators; t = next.fetch_add(1)) {
                    fit_one(t);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return f;
}

/// Bagging mean over trees, accumulated in tree order.
inline Vec predict(const Forest& f, const Mat& X) {
    if (!f.feature_names.empty() &&
        X.cols() != static_cast<Eigen::Index>(f.feature_names.size())) {
        throw ShapeError("predict: feature count " + std::to_string(X.cols()) +
                         " != manifest size " + std::to_string(f.feature_names.size()));
    }
    Vec out = Vec::Zero(X.rows());
    for (const auto& t : f.trees) {
        for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) += t.predict_row(X, r);
    }
    return out / static_cast<double>(f.trees.size());
}

inline double predict(const Forest& f, const Vec& x) {
    Mat row = x.transpose();
    return predict(f, row)(0);
}

/// Predictor/loader guard: a forest trained on one HI set must not score
/// another.
inline void check_manifest(const Forest& f, const std::vector<std::string>& names) {
    if (f.feature_names != names) {
        throw UsageError("forest feature manifest mismatch: trained on a different HI set");
    }
}

inline double rmse(const Vec& pred, const Vec& target) {
    if (pred.size() != target.size()) throw ShapeError("rmse: length mismatch");
    if (pred.size() == 0) throw ShapeError("rmse: empty input");
    return std::sqrt((pred - target).squaredNorm() / static_cast<double>(pred.size()));
}

}  // namespace iglide
