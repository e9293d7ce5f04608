#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "relclust/errors.hpp"
#include "relclust/graph.hpp"
#include "relclust/matrix.hpp"
#include "relclust/rng.hpp"

namespace relclust {

struct AugmentConfig {
    double sigma_pert = 0.1;  // stddev of the multiplicative attribute noise
    double rho = 0.1;         // per-node fraction of incident edges to mark
    double eta = 0.2;         // teleport probability behind the diffusion view

    void validate() const {
        if (sigma_pert < 0.0) throw config_error("augment: sigma_pert must be >= 0");
        if (rho < 0.0 || rho >= 1.0) throw config_error("augment: rho must lie in [0,1)");
        if (eta <= 0.0 || eta >= 1.0) throw config_error("augment: eta must lie in (0,1)");
    }
};

/// Propagation operator of one view. Exactly one representation is set:
/// a sparse matrix (normalized adjacency), a dense one (solved diffusion),
/// or a truncated diffusion series eta * sum_j (1-eta)^j S^j applied on the
/// fly (series_terms spmm passes, error bounded by (1-eta)^(J+1)/eta).
struct ViewStructure {
    std::shared_ptr<const Csr> sparse;
    std::shared_ptr<const Matrix> dense;
    std::shared_ptr<const Csr> series_base;
    double series_eta = 0.0;
    int series_terms = 0;

    int rows() const {
        if (sparse) return sparse->rows;
        if (dense) return dense->rows();
        return series_base->rows;
    }
};

inline ViewStructure sparse_view(std::shared_ptr<const Csr> s) {
    ViewStructure v;
    v.sparse = std::move(s);
    return v;
}

inline ViewStructure dense_view(std::shared_ptr<const Matrix> m) {
    ViewStructure v;
    v.dense = std::move(m);
    return v;
}

inline ViewStructure series_view(std::shared_ptr<const Csr> base, double eta, int terms) {
    if (eta <= 0.0 || eta >= 1.0) throw config_error("series_view: eta must lie in (0,1)");
    if (terms < 1) throw config_error("series_view: need at least one term");
    ViewStructure v;
    v.series_base = std::move(base);
    v.series_eta = eta;
    v.series_terms = terms;
    return v;
}

struct AugmentedView {
    Matrix x;
    ViewStructure s;
};

/// Entrywise multiplication by Gaussian factors centered at 1.
inline Matrix perturb_attributes(const Matrix& x, double sigma_pert, Rng& rng) {
    if (sigma_pert < 0.0) throw config_error("perturb_attributes: sigma_pert must be >= 0");
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] *= gaussian(rng, 1.0, sigma_pert);
    return out;
}

/// Drops the mutually least-similar incident edges: each endpoint marks its
/// floor(rho * degree) lowest-cosine edges (by pre-learned embeddings), and an
/// edge disappears only when both endpoints marked it.
inline std::vector<std::pair<int, int>> delete_edges(const Graph& g, const Matrix& z_pre,
                                                     double rho) {
    if (rho < 0.0 || rho >= 1.0) throw config_error("delete_edges: rho must lie in [0,1)");
    if (z_pre.rows() != g.n) throw shape_error("delete_edges: embedding rows != node count");
    if (rho == 0.0) return g.edges;

    std::vector<double> norm(g.n);
    bool warned = false;
    for (int i = 0; i < g.n; ++i) {
        double s = 0.0;
        for (int j = 0; j < z_pre.cols(); ++j) s += z_pre(i, j) * z_pre(i, j);
        norm[i] = std::sqrt(s);
        if (norm[i] == 0.0 && !warned) {
            warn("delete_edges: zero embedding row " + std::to_string(i) +
                 "; treating its similarities as -1");
            warned = true;
        }
    }
    auto cosine = [&](int a, int b) {
        if (norm[a] == 0.0 || norm[b] == 0.0) return -1.0;
        double dot = 0.0;
        for (int j = 0; j < z_pre.cols(); ++j) dot += z_pre(a, j) * z_pre(b, j);
        return dot / (norm[a] * norm[b]);
    };

    // incident[i] = (similarity, edge id) for every edge touching i.
    std::vector<std::vector<std::pair<double, int>>> incident(g.n);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const double sim = cosine(g.edges[e].first, g.edges[e].second);
        incident[g.edges[e].first].push_back({sim, static_cast<int>(e)});
        incident[g.edges[e].second].push_back({sim, static_cast<int>(e)});
    }
    std::vector<int> marks(g.edges.size(), 0);
    for (int i = 0; i < g.n; ++i) {
        auto& inc = incident[i];
        const int drop = static_cast<int>(std::floor(rho * static_cast<double>(inc.size())));
        if (drop == 0) continue;
        // Ties on similarity resolve toward the lower edge id so the result
        // does not depend on traversal order.
        std::sort(inc.begin(), inc.end());
        for (int t = 0; t < drop; ++t) marks[inc[t].second]++;
    }
    std::vector<std::pair<int, int>> kept;
    kept.reserve(g.edges.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e)
        if (marks[e] < 2) kept.push_back(g.edges[e]);
    return kept;
}

/// Builds the two training views for one epoch: view 1 perturbs attributes
/// and prunes low-similarity edges; view 2 perturbs attributes independently
/// and swaps the propagation operator for the dense diffusion matrix. Pure
/// function of (inputs, seed, epoch).
inline std::pair<AugmentedView, AugmentedView> make_views(
    const Graph& g, const Matrix& z_pre, ViewStructure diffusion,
    const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t epoch) {
    cfg.validate();
    Rng stream = stream_rng(seed, mix_seed(epoch, 0x76696577));  // per-epoch draw stream

    AugmentedView v1;
    v1.x = perturb_attributes(g.x, cfg.sigma_pert, stream);
    Graph pruned;
    pruned.n = g.n;
    pruned.x = Matrix(g.n, 0);
    pruned.edges = delete_edges(g, z_pre, cfg.rho);
    v1.s.sparse = std::make_shared<const Csr>(normalize_adjacency(pruned).s);

    AugmentedView v2;
    v2.x = perturb_attributes(g.x, cfg.sigma_pert, stream);
    v2.s = std::move(diffusion);

    check_finite(v1.x, "augmented view 1 attributes");
    check_finite(v2.x, "augmented view 2 attributes");
    return {std::move(v1), std::move(v2)};
}

}  // namespace relclust
