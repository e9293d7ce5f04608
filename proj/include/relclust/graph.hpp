#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"

namespace relclust {

/// Undirected attributed graph: 0/1 adjacency (no self-loops, no duplicate
/// edges), dense node attributes, optional ground-truth labels.
struct Graph {
    int n = 0;
    std::vector<std::pair<int, int>> edges;  // u < v, each undirected edge once
    Matrix x;                                // n x d attributes
    std::vector<int> labels;                 // empty when unlabeled

    int attr_dim() const { return x.cols(); }
    bool has_labels() const { return !labels.empty(); }

    /// Canonicalizes, validates, and de-duplicates the edge list.
    void finalize() {
        if (x.rows() != n) throw shape_error("Graph: attribute rows do not match node count");
        if (!labels.empty() && static_cast<int>(labels.size()) != n)
            throw shape_error("Graph: label count does not match node count");
        for (auto& e : edges) {
            if (e.first == e.second)
                throw structural_error("Graph: self-loop at node " + std::to_string(e.first));
            if (e.first < 0 || e.second < 0 || e.first >= n || e.second >= n)
                throw structural_error("Graph: edge endpoint out of range");
            if (e.first > e.second) std::swap(e.first, e.second);
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    }

    /// Post-self-loop degrees: 1 + #incident edges.
    std::vector<double> loop_degrees() const {
        std::vector<double> d(n, 1.0);
        for (const auto& e : edges) {
            d[e.first] += 1.0;
            d[e.second] += 1.0;
        }
        return d;
    }
};

/// Symmetric propagation operator built by adding self-loops and scaling both
/// sides by inverse square-root degrees; every stored entry lies in (0, 1].
struct NormalizedAdjacency {
    Csr s;
    std::vector<double> loop_degrees;  // degrees including the self-loop
};

inline NormalizedAdjacency normalize_adjacency(const Graph& g) {
    std::vector<double> deg = g.loop_degrees();
    std::vector<double> inv_sqrt(g.n);
    for (int i = 0; i < g.n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);

    std::vector<std::pair<std::pair<int, int>, double>> trip;
    trip.reserve(2 * g.edges.size() + g.n);
    for (int i = 0; i < g.n; ++i) trip.push_back({{i, i}, inv_sqrt[i] * inv_sqrt[i]});
    for (const auto& e : g.edges) {
        const double v = inv_sqrt[e.first] * inv_sqrt[e.second];
        trip.push_back({{e.first, e.second}, v});
        trip.push_back({{e.second, e.first}, v});
    }
    NormalizedAdjacency out;
    out.s = Csr::from_triplets(g.n, g.n, std::move(trip));
    out.s.validate();
    out.loop_degrees = std::move(deg);
    return out;
}

/// Dense influence matrix from a teleporting random walk on s: solves
/// (I - (1-eta) s) U = eta I exactly by LU.
struct DiffusionMatrix {
    Matrix u;
    double eta = 0.0;
};

inline DiffusionMatrix ppr_diffusion(const NormalizedAdjacency& sn, double eta) {
    if (!(eta > 0.0 && eta < 1.0))
        throw config_error("ppr_diffusion: teleport probability must lie in (0,1), got " +
                           std::to_string(eta));
    const int n = sn.s.rows;
    Matrix a = sn.s.densify();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - (1.0 - eta) * a(i, j);
    Matrix rhs(n, n);
    for (int i = 0; i < n; ++i) rhs(i, i) = eta;
    DiffusionMatrix d;
    d.u = lup_solve(std::move(a), std::move(rhs));
    d.eta = eta;
    // Zero out the tiny negative values LU round-off can produce.
    for (std::size_t i = 0; i < d.u.size(); ++i)
        if (d.u.data()[i] < 0.0) d.u.data()[i] = 0.0;
    return d;
}

/// Memory-light alternative: eta * sum_{j=0..terms} (1-eta)^j s^j, with
/// truncation error at most (1-eta)^(terms+1)/eta in operator norm.
inline DiffusionMatrix ppr_diffusion_series(const NormalizedAdjacency& sn, double eta,
                                            int terms) {
    if (!(eta > 0.0 && eta < 1.0))
        throw config_error("ppr_diffusion_series: teleport probability must lie in (0,1)");
    if (terms < 0) throw config_error("ppr_diffusion_series: negative term count");
    const int n = sn.s.rows;
    Matrix acc = Matrix::identity(n);   // (1-eta)^j s^j, running power
    Matrix sum = Matrix::identity(n);
    Matrix tmp(n, n);
    for (int j = 1; j <= terms; ++j) {
        spmm_into(sn.s, acc, tmp);
        std::swap(acc, tmp);
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] *= 1.0 - eta;
        for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] += acc.data()[i];
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] *= eta;
    DiffusionMatrix d;
    d.u = std::move(sum);
    d.eta = eta;
    return d;
}

/// Symmetrized k-nearest-neighbor edges under Euclidean distance; ties broken
/// by lower node index, k clamped to n-1 with a warning.
inline std::vector<std::pair<int, int>> knn_edges(const Matrix& x, int k) {
    const int n = x.rows();
    if (k < 1) throw config_error("knn_edges: k must be >= 1");
    if (k >= n) {
        warn("knn_edges: k = " + std::to_string(k) + " >= n = " + std::to_string(n) +
             ", clamping to n-1");
        k = n - 1;
    }
    std::set<std::pair<int, int>> picked;
    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int c = 0; c < x.cols(); ++c) {
                const double d = x(i, c) - x(j, c);
                s += d * d;
            }
            dist[j] = {s, j};
        }
        dist[i] = {std::numeric_limits<double>::infinity(), i};  // exclude self
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int t = 0; t < k; ++t) {
            const int j = dist[t].second;
            picked.insert({std::min(i, j), std::max(i, j)});
        }
    }
    return {picked.begin(), picked.end()};
}

inline Graph knn_graph(const Matrix& x, int k, std::vector<int> labels = {}) {
    Graph g;
    g.n = x.rows();
    g.x = x;
    g.labels = std::move(labels);
    g.edges = knn_edges(x, k);
    g.finalize();
    return g;
}

}  // namespace relclust
