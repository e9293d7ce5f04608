#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "relclust/autodiff.hpp"
#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"

namespace relclust {

// ---------------------------------------------------------------------------
// Anchor selection
// ---------------------------------------------------------------------------

struct SamplingWeights {
    std::vector<double> w;
    std::vector<double> p;  // w normalized to sum 1
};

/// Degree-skewed sampling distribution: w_i = beta^log(deg_i + 1), so lower
/// degrees get larger weight. log_base 0 selects the natural logarithm.
inline SamplingWeights sampling_weights(const std::vector<double>& loop_degrees, double beta,
                                        double log_base = 0.0) {
    if (!(beta > 0.0 && beta < 1.0))
        throw config_error("sampling_weights: beta must lie in (0,1), got " +
                           std::to_string(beta));
    if (log_base != 0.0 && !(log_base > 1.0))
        throw config_error("sampling_weights: log base must exceed 1");
    SamplingWeights out;
    out.w.reserve(loop_degrees.size());
    const double denom = log_base == 0.0 ? 1.0 : std::log(log_base);
    for (double d : loop_degrees) {
        if (d < 1.0) throw contract_error("sampling_weights: degree below 1");
        out.w.push_back(std::pow(beta, std::log(d + 1.0) / denom));
    }
    const double total = std::accumulate(out.w.begin(), out.w.end(), 0.0);
    out.p.reserve(out.w.size());
    for (double w : out.w) out.p.push_back(w / total);
    return out;
}

/// Shifted one-dimensional lattice {(2i-1)/(2M) + omega mod 1 : i = 1..M}.
inline std::vector<double> qmc_points(int m, double omega) {
    if (m < 1) throw config_error("qmc_points: point count must be >= 1");
    std::vector<double> pts(m);
    for (int i = 1; i <= m; ++i) {
        double t = (2.0 * i - 1.0) / (2.0 * m) + omega;
        t -= std::floor(t);
        pts[i - 1] = t;
    }
    return pts;
}

/// Inverse-CDF multinomial draw for each point: the anchor of point t is the
/// smallest index whose cumulative probability exceeds t. With replacement.
inline std::vector<int> qmc_multinomial(const SamplingWeights& sw,
                                        const std::vector<double>& points) {
    const int n = static_cast<int>(sw.p.size());
    std::vector<double> cum(n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += sw.p[i];
        cum[i] = acc;
    }
    cum[n - 1] = 1.0;  // guard float round-off at the top of the CDF
    std::vector<int> anchors;
    anchors.reserve(points.size());
    for (double t : points) {
        if (t < 0.0 || t >= 1.0) throw contract_error("qmc_multinomial: point outside [0,1)");
        const int idx = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), t) -
                                         cum.begin());
        anchors.push_back(std::min(idx, n - 1));
    }
    return anchors;
}

/// Per-node lists of the m2 largest entries of the node's diffusion row,
/// excluding the node itself; ties resolve toward lower index. Flattened
/// row-major (n * m2 entries).
inline std::vector<int> local_anchors(const Matrix& u, int m2) {
    const int n = u.rows();
    if (m2 < 1 || m2 > n - 1)
        throw config_error("local_anchors: m2 must lie in [1, n-1], got " + std::to_string(m2));
    std::vector<int> flat(static_cast<std::size_t>(n) * m2);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) {
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        order.erase(order.begin() + i);
        std::partial_sort(order.begin(), order.begin() + m2, order.end(),
                          [&](int a, int b) {
                              if (u(i, a) != u(i, b)) return u(i, a) > u(i, b);
                              return a < b;
                          });
        for (int t = 0; t < m2; ++t) flat[static_cast<std::size_t>(i) * m2 + t] = order[t];
    }
    return flat;
}

// ---------------------------------------------------------------------------
// Relation matrices and the redundancy-aware loss (differentiable)
// ---------------------------------------------------------------------------

/// Row i holds the dot products of query row i against the shared anchor rows.
inline Tensor relation_matrix_global(Tape& tape, Tensor z_query, Tensor z_anchor,
                                     const std::vector<int>& anchors) {
    if (anchors.empty()) throw contract_error("relation_matrix_global: empty anchor set");
    return tape.matmul(z_query, tape.transpose(tape.gather_rows(z_anchor, anchors)));
}

/// Row i holds the dot products of query row i against its own anchor rows.
inline Tensor relation_matrix_local(Tape& tape, Tensor z_query, Tensor z_anchor,
                                    const std::vector<int>& lists_flat, int m2) {
    if (m2 < 1) throw contract_error("relation_matrix_local: empty anchor lists");
    return tape.rowwise_gather_dot(z_query, z_anchor, lists_flat, m2);
}

namespace detail {

inline void warn_zero_rows(const Matrix& r, const char* what) {
    for (int i = 0; i < r.rows(); ++i) {
        bool zero = true;
        for (int j = 0; j < r.cols() && zero; ++j) zero = r(i, j) == 0.0;
        if (zero) {
            warn(std::string(what) + ": zero relation row " + std::to_string(i) +
                 " contributes 0");
            return;
        }
    }
}

}  // namespace detail

/// Mean squared cosine between matched rows of the two relation matrices;
/// lies in [0,1], and is the quantity the training loss drives up.
inline Tensor preservation_term(Tape& tape, Tensor r1, Tensor r2) {
    if (r1.rows != r2.rows || r1.cols != r2.cols)
        throw shape_error("preservation_term: relation matrices differ in shape");
    detail::warn_zero_rows(tape.value(r1), "preservation_term");
    Tensor a = tape.row_normalize(r1);
    Tensor b = tape.row_normalize(r2);
    Tensor cos_diag = tape.row_sum(tape.hadamard(a, b));
    return tape.scale(tape.sum_all(tape.square(cos_diag)), 1.0 / r1.rows);
}

/// Mean squared cosine over ordered cross pairs (i != j); lies in [0,1], and
/// is the quantity the training loss drives down.
inline Tensor redundancy_term(Tape& tape, Tensor r1, Tensor r2) {
    if (r1.rows != r2.rows || r1.cols != r2.cols)
        throw shape_error("redundancy_term: relation matrices differ in shape");
    if (r1.rows < 2) throw contract_error("redundancy_term: needs at least 2 rows");
    const double n = r1.rows;
    Tensor a = tape.row_normalize(r1);
    Tensor b = tape.row_normalize(r2);
    Tensor all_sq = tape.sum_all(tape.square(tape.matmul(a, tape.transpose(b))));
    Tensor diag_sq = tape.sum_all(tape.square(tape.row_sum(tape.hadamard(a, b))));
    return tape.scale(tape.sub(all_sq, diag_sq), 1.0 / (n * (n - 1.0)));
}

/// One route's relation matrices (attribute route or structure route):
/// cross-view and within-view, global and local scope.
struct RelationMatrices {
    Tensor r1_g, r1_l;  // view-1 queries against view-2 anchors
    Tensor r2_g, r2_l;  // view-2 queries against view-2 anchors
};

/// redundancy - preservation over both scopes; lies in [-2, 2].
inline Tensor relation_route_loss(Tape& tape, const RelationMatrices& r) {
    Tensor pres = tape.add(preservation_term(tape, r.r1_g, r.r2_g),
                           preservation_term(tape, r.r1_l, r.r2_l));
    Tensor red = tape.add(redundancy_term(tape, r.r1_g, r.r2_g),
                          redundancy_term(tape, r.r1_l, r.r2_l));
    return tape.sub(red, pres);
}

/// Sum of the attribute-route and structure-route terms; lies in [-4, 4].
inline Tensor relation_loss(Tape& tape, const RelationMatrices& attr_route,
                            const RelationMatrices& struct_route) {
    return tape.add(relation_route_loss(tape, attr_route),
                    relation_route_loss(tape, struct_route));
}

}  // namespace relclust
