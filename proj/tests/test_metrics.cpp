#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "relclust/matrix.hpp"
#include "relclust/metrics.hpp"

using relclust::ClusterMetrics;
using relclust::compute_metrics;
using relclust::hungarian_min;
using relclust::Matrix;
using relclust::mean_average_distance;

namespace {

// ---------------------------------------------------------------------------
// Brute-force reference implementations (test-only, independent code paths).
// ---------------------------------------------------------------------------

std::vector<int> compact(const std::vector<int>& labels, int& k_out) {
    std::map<int, int> ids;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int x : labels) {
        auto it = ids.find(x);
        if (it == ids.end()) it = ids.emplace(x, static_cast<int>(ids.size())).first;
        out.push_back(it->second);
    }
    k_out = static_cast<int>(ids.size());
    return out;
}

/// ACC by exhaustive enumeration of cluster-to-class bijections on the padded
/// square table.
double bf_acc(const std::vector<int>& pred, const std::vector<int>& truth) {
    int kp = 0, kt = 0;
    std::vector<int> p = compact(pred, kp);
    std::vector<int> t = compact(truth, kt);
    const int side = std::max(kp, kt);
    std::vector<int> perm(side);
    std::iota(perm.begin(), perm.end(), 0);
    long long best = -1;
    do {
        long long matched = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (perm[p[i]] == t[i]) matched++;
        best = std::max(best, matched);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(p.size());
}

/// NMI computed from scratch in log2 (the normalized ratio is base-invariant).
double bf_nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
    int kp = 0, kt = 0;
    std::vector<int> p = compact(pred, kp);
    std::vector<int> t = compact(truth, kt);
    const double n = static_cast<double>(p.size());
    std::vector<long long> cu(kp, 0), cv(kt, 0);
    std::vector<std::vector<long long>> cuv(kp, std::vector<long long>(kt, 0));
    for (std::size_t i = 0; i < p.size(); ++i) {
        cu[p[i]]++;
        cv[t[i]]++;
        cuv[p[i]][t[i]]++;
    }
    auto h = [n](const std::vector<long long>& q) {
        double s = 0.0;
        for (long long x : q)
            if (x > 0) s -= (x / n) * std::log2(x / n);
        return s;
    };
    double mi = 0.0;
    for (int i = 0; i < kp; ++i)
        for (int j = 0; j < kt; ++j)
            if (cuv[i][j] > 0)
                mi += (cuv[i][j] / n) * std::log2(n * cuv[i][j] /
                                                  static_cast<double>(cu[i]) / cv[j]);
    const double hu = h(cu), hv = h(cv);
    if (hu == 0.0 && hv == 0.0) return 1.0;
    return mi / (0.5 * (hu + hv));
}

/// ARI by explicit pair counting over all node pairs.
double bf_ari(const std::vector<int>& pred, const std::vector<int>& truth) {
    const std::size_t n = pred.size();
    double n11 = 0.0, n00 = 0.0, n10 = 0.0, n01 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool same_p = pred[i] == pred[j];
            const bool same_t = truth[i] == truth[j];
            if (same_p && same_t) n11 += 1.0;
            else if (same_p) n10 += 1.0;
            else if (same_t) n01 += 1.0;
            else n00 += 1.0;
        }
    const double total = n11 + n10 + n01 + n00;
    const double expected = (n11 + n10) * (n11 + n01) / total;
    const double maximum = 0.5 * ((n11 + n10) + (n11 + n01));
    if (maximum == expected) return 1.0;
    return (n11 - expected) / (maximum - expected);
}

/// Macro-F1 under the best bijection, ranked by matched count and then by
/// macro-F1 itself (same tie-break rule as the library, enumerated here).
double bf_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    int kp = 0, kt = 0;
    std::vector<int> p = compact(pred, kp);
    std::vector<int> t = compact(truth, kt);
    const int side = std::max(kp, kt);
    std::vector<int> perm(side);
    std::iota(perm.begin(), perm.end(), 0);
    long long best_matched = -1;
    double best_f1 = 0.0;
    do {
        long long matched = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (perm[p[i]] == t[i]) matched++;
        double f1_sum = 0.0;
        for (int cls = 0; cls < kt; ++cls) {
            int cluster = -1;
            for (int c = 0; c < kp; ++c)
                if (perm[c] == cls) cluster = c;
            if (cluster < 0) continue;
            double tp = 0.0, fp = 0.0, fn = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const bool in_cluster = p[i] == cluster;
                const bool in_class = t[i] == cls;
                if (in_cluster && in_class) tp += 1.0;
                else if (in_cluster) fp += 1.0;
                else if (in_class) fn += 1.0;
            }
            const double prec = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
            const double rec = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
            if (prec + rec > 0.0) f1_sum += 2.0 * prec * rec / (prec + rec);
        }
        const double f1 = f1_sum / kt;
        if (matched > best_matched || (matched == best_matched && f1 > best_f1)) {
            best_matched = matched;
            best_f1 = f1;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best_f1;
}

std::vector<int> random_labels(int n, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, k - 1);
    std::vector<int> out(n);
    for (int& x : out) x = d(rng);
    return out;
}

// ===========================================================================
// hungarian_min
// ===========================================================================

TEST(Hungarian, MatchesBruteForceOnRandomCosts) {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> val(-5.0, 5.0);
    for (int n = 1; n <= 6; ++n) {
        for (int trial = 0; trial < 20; ++trial) {
            Matrix cost(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) cost(i, j) = val(rng);
            const std::vector<int> got = hungarian_min(cost);
            double got_cost = 0.0;
            for (int i = 0; i < n; ++i) got_cost += cost(i, got[i]);
            std::vector<int> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            double best = std::numeric_limits<double>::infinity();
            do {
                double c = 0.0;
                for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
                best = std::min(best, c);
            } while (std::next_permutation(perm.begin(), perm.end()));
            EXPECT_NEAR(got_cost, best, 1e-9);
        }
    }
}

// ===========================================================================
// compute_metrics
// ===========================================================================

TEST(Metrics, PerfectAgreementScoresOneEverywhere) {
    std::vector<int> y = {0, 1, 2, 1, 0, 2, 2, 1};
    ClusterMetrics m = compute_metrics(y, y);
    EXPECT_DOUBLE_EQ(m.acc, 1.0);
    EXPECT_DOUBLE_EQ(m.nmi, 1.0);
    EXPECT_DOUBLE_EQ(m.ari, 1.0);
    EXPECT_DOUBLE_EQ(m.f1, 1.0);
}

TEST(Metrics, SingleClusterAgainstBalancedTwoClasses) {
    std::vector<int> pred = {0, 0, 0, 0};
    std::vector<int> truth = {0, 0, 1, 1};
    ClusterMetrics m = compute_metrics(pred, truth);
    EXPECT_DOUBLE_EQ(m.acc, 0.5);
    EXPECT_NEAR(m.ari, 0.0, 1e-12);
    EXPECT_NEAR(m.nmi, 0.0, 1e-12);
}

TEST(Metrics, InvariantToPredictionRelabeling) {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> pred = random_labels(12, 3, rng);
        std::vector<int> truth = random_labels(12, 3, rng);
        std::vector<int> relabeled(pred.size());
        const int perm[3] = {2, 0, 1};
        for (std::size_t i = 0; i < pred.size(); ++i) relabeled[i] = perm[pred[i]];
        ClusterMetrics a = compute_metrics(pred, truth);
        ClusterMetrics b = compute_metrics(relabeled, truth);
        EXPECT_NEAR(a.acc, b.acc, 1e-12);
        EXPECT_NEAR(a.nmi, b.nmi, 1e-12);
        EXPECT_NEAR(a.ari, b.ari, 1e-12);
        EXPECT_NEAR(a.f1, b.f1, 1e-12);
    }
}

TEST(Metrics, LengthMismatchRaises) {
    EXPECT_THROW(compute_metrics({0, 1}, {0, 1, 2}), relclust::contract_error);
}

TEST(Metrics, ExhaustiveSmallCasesMatchBruteForce) {
    // All label pairs with n = 4 over alphabet {0,1,2}: 3^4 x 3^4 pairs.
    std::vector<std::vector<int>> all;
    for (int code = 0; code < 81; ++code) {
        std::vector<int> v(4);
        int c = code;
        for (int i = 0; i < 4; ++i) {
            v[i] = c % 3;
            c /= 3;
        }
        all.push_back(v);
    }
    for (const auto& pred : all)
        for (const auto& truth : all) {
            ClusterMetrics m = compute_metrics(pred, truth);
            ASSERT_NEAR(m.acc, bf_acc(pred, truth), 1e-12);
            ASSERT_NEAR(m.nmi, bf_nmi(pred, truth), 1e-10);
            ASSERT_NEAR(m.ari, bf_ari(pred, truth), 1e-10);
            ASSERT_NEAR(m.f1, bf_f1(pred, truth), 1e-12);
        }
}

TEST(Metrics, RandomLargerCasesMatchBruteForce) {
    std::mt19937_64 rng(107);
    for (int trial = 0; trial < 3000; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 7);  // up to 8
        const int k = 1 + static_cast<int>(rng() % 3);
        std::vector<int> pred = random_labels(n, k, rng);
        std::vector<int> truth = random_labels(n, 1 + static_cast<int>(rng() % 3), rng);
        ClusterMetrics m = compute_metrics(pred, truth);
        ASSERT_NEAR(m.acc, bf_acc(pred, truth), 1e-12);
        ASSERT_NEAR(m.nmi, bf_nmi(pred, truth), 1e-10);
        ASSERT_NEAR(m.ari, bf_ari(pred, truth), 1e-10);
        ASSERT_NEAR(m.f1, bf_f1(pred, truth), 1e-12);
    }
}

// ===========================================================================
// mean_average_distance
// ===========================================================================

TEST(Mad, IdenticalRowsGiveZero) {
    Matrix z(5, 3);
    for (int i = 0; i < 5; ++i) {
        z(i, 0) = 1.0;
        z(i, 1) = 2.0;
        z(i, 2) = -1.0;
    }
    EXPECT_NEAR(mean_average_distance(z), 0.0, 1e-12);
}

TEST(Mad, OrthogonalRowsGiveOne) {
    Matrix z = Matrix::from_rows({{1.0, 0.0}, {0.0, 3.0}});
    EXPECT_NEAR(mean_average_distance(z), 1.0, 1e-12);
}

TEST(Mad, StaysWithinCosineRange) {
    std::mt19937_64 rng(109);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix z(6, 4);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 4; ++j) z(i, j) = val(rng) + 0.01;
        const double v = mean_average_distance(z);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 2.0);
    }
}

TEST(Mad, InvariantToPositiveRowRescaling) {
    std::mt19937_64 rng(113);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    Matrix z(5, 3), scaled(5, 3);
    const double factors[5] = {0.1, 1.0, 10.0, 2.5, 0.3};
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) {
            z(i, j) = val(rng) + 0.05;
            scaled(i, j) = z(i, j) * factors[i];
        }
    EXPECT_NEAR(mean_average_distance(z), mean_average_distance(scaled), 1e-10);
}

TEST(Mad, ZeroRowRaises) {
    Matrix z(2, 2);
    z(0, 0) = 1.0;
    EXPECT_THROW(mean_average_distance(z), relclust::contract_error);
}

}  // namespace
