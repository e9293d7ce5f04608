#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"

namespace relclust {

/// Minimum-cost perfect assignment on a square cost matrix (O(n^3) potentials
/// method). Returns row -> column.
inline std::vector<int> hungarian_min(const Matrix& cost) {
    if (cost.rows() != cost.cols()) throw contract_error("hungarian_min: matrix not square");
    const int n = cost.rows();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

struct ClusterMetrics {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    double f1 = 0.0;
};

namespace detail {

/// Maps arbitrary integer labels onto 0..K-1 (order of first appearance by
/// value) and returns the contingency counts.
inline std::vector<std::vector<long long>> contingency(const std::vector<int>& pred,
                                                       const std::vector<int>& truth) {
    std::map<int, int> pid, tid;
    for (int x : pred) pid.emplace(x, 0);
    for (int x : truth) tid.emplace(x, 0);
    int k = 0;
    for (auto& e : pid) e.second = k++;
    k = 0;
    for (auto& e : tid) e.second = k++;
    std::vector<std::vector<long long>> c(pid.size(), std::vector<long long>(tid.size(), 0));
    for (std::size_t i = 0; i < pred.size(); ++i) c[pid[pred[i]]][tid[truth[i]]]++;
    return c;
}

inline double entropy(const std::vector<long long>& counts, long long n) {
    double h = 0.0;
    for (long long c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return h;
}

inline double choose2(long long x) { return 0.5 * static_cast<double>(x) * (x - 1); }

}  // namespace detail

/// ACC, NMI, ARI, macro-F1 for a predicted clustering against ground truth.
/// ACC and F1 use the optimal cluster-to-class assignment; NMI normalizes by
/// the arithmetic mean of the entropies; ARI is adjusted for chance.
inline ClusterMetrics compute_metrics(const std::vector<int>& pred,
                                      const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw contract_error("compute_metrics: length mismatch, " +
                             std::to_string(pred.size()) + " vs " +
                             std::to_string(truth.size()));
    if (pred.empty()) throw contract_error("compute_metrics: empty label vectors");
    const long long n = static_cast<long long>(pred.size());
    const auto cont = detail::contingency(pred, truth);
    const int kp = static_cast<int>(cont.size());
    const int kt = static_cast<int>(cont[0].size());

    std::vector<long long> row_sum(kp, 0), col_sum(kt, 0);
    for (int i = 0; i < kp; ++i)
        for (int j = 0; j < kt; ++j) {
            row_sum[i] += cont[i][j];
            col_sum[j] += cont[i][j];
        }

    ClusterMetrics m;

    // --- ACC and the cluster-to-class map via minimum-cost assignment.
    // Matched counts are the primary objective; the per-pair F1 contribution
    // 2c/(row+col) breaks ties so the mapping (and hence macro-F1) does not
    // depend on label numbering. The tie-break weight is small enough that it
    // can never overturn a one-count difference in matched totals.
    const int side = std::max(kp, kt);
    const double tie_eps = 0.5 / (side + 1);
    Matrix cost(side, side, 0.0);
    for (int i = 0; i < kp; ++i)
        for (int j = 0; j < kt; ++j) {
            const double c = static_cast<double>(cont[i][j]);
            const double f1_pair =
                c > 0.0 ? 2.0 * c / static_cast<double>(row_sum[i] + col_sum[j]) : 0.0;
            cost(i, j) = -(c + tie_eps * f1_pair);
        }
    const std::vector<int> assign = hungarian_min(cost);
    long long matched = 0;
    for (int i = 0; i < kp; ++i)
        if (assign[i] < kt) matched += cont[i][assign[i]];
    m.acc = static_cast<double>(matched) / n;

    // --- macro-F1 over truth classes under the same mapping.
    std::vector<int> class_to_cluster(kt, -1);
    for (int i = 0; i < kp; ++i)
        if (assign[i] < kt) class_to_cluster[assign[i]] = i;
    double f1_sum = 0.0;
    for (int j = 0; j < kt; ++j) {
        const int i = class_to_cluster[j];
        if (i < 0) continue;  // class left unmatched scores zero
        const double tp = static_cast<double>(cont[i][j]);
        const double prec = row_sum[i] > 0 ? tp / row_sum[i] : 0.0;
        const double rec = col_sum[j] > 0 ? tp / col_sum[j] : 0.0;
        if (prec + rec > 0.0) f1_sum += 2.0 * prec * rec / (prec + rec);
    }
    m.f1 = f1_sum / kt;

    // --- NMI with arithmetic-mean normalization.
    const double hp = detail::entropy(row_sum, n);
    const double ht = detail::entropy(col_sum, n);
    if (hp == 0.0 && ht == 0.0) {
        m.nmi = 1.0;  // both partitions trivial and therefore identical
    } else {
        double mi = 0.0;
        for (int i = 0; i < kp; ++i)
            for (int j = 0; j < kt; ++j) {
                if (cont[i][j] == 0) continue;
                const double pij = static_cast<double>(cont[i][j]) / n;
                mi += pij * std::log(pij * n * n /
                                     (static_cast<double>(row_sum[i]) * col_sum[j]));
            }
        m.nmi = mi / (0.5 * (hp + ht));
    }

    // --- ARI by pair counting.
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < kp; ++i)
        for (int j = 0; j < kt; ++j) sum_ij += detail::choose2(cont[i][j]);
    for (int i = 0; i < kp; ++i) sum_a += detail::choose2(row_sum[i]);
    for (int j = 0; j < kt; ++j) sum_b += detail::choose2(col_sum[j]);
    const double total_pairs = detail::choose2(n);
    const double expected = total_pairs > 0.0 ? sum_a * sum_b / total_pairs : 0.0;
    const double maximum = 0.5 * (sum_a + sum_b);
    if (maximum == expected) {
        m.ari = 1.0;  // degenerate: both partitions trivial
    } else {
        m.ari = (sum_ij - expected) / (maximum - expected);
    }
    return m;
}

/// Mean over nodes of the average cosine distance to every other node.
/// Lower values mean more homogeneous (over-smoothed) embeddings.
inline double mean_average_distance(const Matrix& z) {
    const int n = z.rows();
    if (n < 2) throw contract_error("mean_average_distance: need at least 2 rows");
    std::vector<double> norm(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < z.cols(); ++j) s += z(i, j) * z(i, j);
        if (s == 0.0)
            throw contract_error("mean_average_distance: zero row " + std::to_string(i));
        norm[i] = std::sqrt(s);
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double dot = 0.0;
            for (int c = 0; c < z.cols(); ++c) dot += z(i, c) * z(j, c);
            acc += 1.0 - dot / (norm[i] * norm[j]);
        }
        total += acc / (n - 1);
    }
    return total / n;
}

}  // namespace relclust
