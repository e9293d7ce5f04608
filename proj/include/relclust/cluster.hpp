#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "relclust/autodiff.hpp"
#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"
#include "relclust/nets.hpp"
#include "relclust/rng.hpp"

namespace relclust {

// ---------------------------------------------------------------------------
// View fusion
// ---------------------------------------------------------------------------

/// Trainable mixing weights between the attribute and structure branches,
/// plus the skip weight of the attention refinement. Symmetric 0.5 start.
struct FusionParams {
    Matrix w1, w2;  // n x d' elementwise branch weights
    Matrix delta;   // 1 x 1 skip-connection weight

    static FusionParams init(int n, int latent) {
        if (n < 1 || latent < 1) throw config_error("FusionParams: dims must be >= 1");
        FusionParams p;
        p.w1 = Matrix(n, latent, 0.5);
        p.w2 = Matrix(n, latent, 0.5);
        p.delta = Matrix(1, 1, 0.5);
        return p;
    }

    std::vector<Matrix*> parameters() { return {&w1, &w2, &delta}; }
};

struct FusionBinding {
    Tensor w1, w2, delta;

    std::vector<Tensor> tensors() const { return {w1, w2, delta}; }
};

inline FusionBinding bind(Tape& tape, const FusionParams& p) {
    FusionBinding b;
    b.w1 = tape.leaf(p.w1);
    b.w2 = tape.leaf(p.w2);
    b.delta = tape.leaf(p.delta);
    return b;
}

/// W1 .* (Z1_AE + Z2_AE) + W2 .* (Z1_GAE + Z2_GAE).
inline Tensor fuse_views(Tape& tape, const FusionBinding& p, Tensor z1_ae, Tensor z2_ae,
                         Tensor z1_gae, Tensor z2_gae) {
    Tensor attr = tape.hadamard(p.w1, tape.add(z1_ae, z2_ae));
    Tensor structure = tape.hadamard(p.w2, tape.add(z1_gae, z2_gae));
    return tape.add(attr, structure);
}

/// Attention refinement of the fused representation: with A = S * Zc,
/// returns delta * A + softmax_rows(A * A^T) * A.
inline Tensor refine_fusion(Tape& tape, const BoundStructure& s, Tensor z_c,
                            Tensor delta) {
    Tensor a = propagate(tape, s, z_c);
    Tensor attention = tape.softmax_rows(tape.matmul(a, tape.transpose(a)));
    return tape.add(tape.scale_by(a, delta), tape.matmul(attention, a));
}

/// Attention refinement restricted to contiguous row blocks: each block
/// attends only within itself, keeping the quadratic cost at block size.
/// A single block spanning all rows reproduces refine_fusion exactly.
inline Tensor refine_fusion_blocked(Tape& tape, const BoundStructure& s, Tensor z_c,
                                    Tensor delta, const std::vector<int>& block_sizes) {
    int total = 0;
    for (int b : block_sizes) {
        if (b < 1) throw config_error("refine_fusion_blocked: block sizes must be >= 1");
        total += b;
    }
    if (total != z_c.rows)
        throw contract_error("refine_fusion_blocked: block sizes sum to " +
                             std::to_string(total) + " but there are " +
                             std::to_string(z_c.rows) + " rows");
    Tensor a = propagate(tape, s, z_c);
    std::vector<Tensor> refined;
    refined.reserve(block_sizes.size());
    int start = 0;
    for (int b : block_sizes) {
        std::vector<int> rows(b);
        for (int i = 0; i < b; ++i) rows[i] = start + i;
        Tensor ab = tape.gather_rows(a, std::move(rows));
        Tensor attention = tape.softmax_rows(tape.matmul(ab, tape.transpose(ab)));
        refined.push_back(tape.matmul(attention, ab));
        start += b;
    }
    return tape.add(tape.scale_by(a, delta), tape.concat_rows(refined));
}

/// Structure reconstruction from both GAE latents and the GAE output:
/// 0.5 * (Z1 Z1^T + Z2 Z2^T) + X_hat X_hat^T. Symmetric by construction.
inline Tensor reconstruct_adjacency(Tape& tape, Tensor z1_gae, Tensor z2_gae,
                                    Tensor x_hat_gae) {
    Tensor g1 = tape.matmul(z1_gae, tape.transpose(z1_gae));
    Tensor g2 = tape.matmul(z2_gae, tape.transpose(z2_gae));
    Tensor gx = tape.matmul(x_hat_gae, tape.transpose(x_hat_gae));
    return tape.add(tape.scale(tape.add(g1, g2), 0.5), gx);
}

// ---------------------------------------------------------------------------
// Soft assignments and the self-training target
// ---------------------------------------------------------------------------

/// Student-t kernel against the centroids, row-normalized to probabilities.
inline Tensor soft_assign(Tape& tape, Tensor z, Tensor centroids) {
    if (z.cols != centroids.cols)
        throw shape_error("soft_assign: embedding and centroid widths differ");
    return tape.normalize_rows_sum(tape.inv_one_plus(tape.pairwise_sqdist(z, centroids)));
}

/// Sharpened, frequency-corrected target computed from the current fused
/// assignment. Plain matrix on purpose: the training step treats it as a
/// constant (no gradient flows through the target).
inline Matrix target_distribution(const Matrix& q) {
    const int n = q.rows(), k = q.cols();
    std::vector<double> freq(k, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) freq[j] += q(i, j);
    for (int j = 0; j < k; ++j)
        if (freq[j] <= 0.0)
            throw numeric_error("target_distribution: cluster " + std::to_string(j) +
                                " has zero total assignment");
    Matrix p(n, k);
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < k; ++j) {
            p(i, j) = q(i, j) * q(i, j) / freq[j];
            row += p(i, j);
        }
        for (int j = 0; j < k; ++j) p(i, j) /= row;
    }
    return p;
}

/// KL divergence from the (constant) target to the mean of the three soft
/// assignments: sum_ij p_ij * (log p_ij - log mean_ij).
inline Tensor clustering_loss(Tape& tape, const Matrix& p, Tensor q1, Tensor q2,
                              Tensor q3) {
    if (p.rows() != tape.value(q1).rows() || p.cols() != tape.value(q1).cols())
        throw shape_error("clustering_loss: target and assignment shapes differ");
    Tensor pc = tape.constant(p);
    Tensor mean = tape.scale(tape.add(tape.add(q1, q2), q3), 1.0 / 3.0);
    return tape.sum_all(tape.hadamard(pc, tape.sub(tape.log(pc), tape.log(mean))));
}

/// L_RE + L_REC + kappa * L_CLU.
inline Tensor total_loss(Tape& tape, Tensor l_re, Tensor l_rec, Tensor l_clu,
                         double kappa) {
    if (kappa < 0.0) throw config_error("total_loss: kappa must be >= 0");
    return tape.add(tape.add(l_re, l_rec), tape.scale(l_clu, kappa));
}

// ---------------------------------------------------------------------------
// Centroid initialization and hard assignment
// ---------------------------------------------------------------------------

namespace detail {

inline double sqdist(const Matrix& a, int i, const Matrix& b, int j) {
    double s = 0.0;
    for (int c = 0; c < a.cols(); ++c) {
        const double d = a(i, c) - b(j, c);
        s += d * d;
    }
    return s;
}

struct KmeansRun {
    Matrix centroids;
    double inertia = std::numeric_limits<double>::infinity();
};

inline KmeansRun kmeans_once(const Matrix& z, int k, Rng& rng, int max_iters,
                             double rel_tol) {
    const int n = z.rows(), d = z.cols();
    Matrix mu(k, d);

    // k-means++ seeding: first centroid uniform, the rest proportional to the
    // squared distance to the nearest centroid chosen so far.
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    int first = static_cast<int>(uniform01(rng) * n);
    if (first >= n) first = n - 1;
    for (int c = 0; c < d; ++c) mu(0, c) = z(first, c);
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], sqdist(z, i, mu, j - 1));
            total += dist2[i];
        }
        int pick;
        if (total <= 0.0) {
            pick = static_cast<int>(uniform01(rng) * n);  // all points coincide
            if (pick >= n) pick = n - 1;
        } else {
            const double t = uniform01(rng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += dist2[i];
                if (acc > t) {
                    pick = i;
                    break;
                }
            }
        }
        for (int c = 0; c < d; ++c) mu(j, c) = z(pick, c);
    }

    // Lloyd iterations with farthest-point rescue for empty clusters.
    std::vector<int> assign(n, 0);
    double prev_inertia = std::numeric_limits<double>::infinity();
    double inertia = prev_inertia;
    for (int iter = 0; iter < max_iters; ++iter) {
        inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int j = 0; j < k; ++j) {
                const double dd = sqdist(z, i, mu, j);
                if (dd < best) {
                    best = dd;
                    arg = j;
                }
            }
            assign[i] = arg;
            inertia += best;
        }

        Matrix sums(k, d);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            counts[assign[i]]++;
            for (int c = 0; c < d; ++c) sums(assign[i], c) += z(i, c);
        }
        for (int j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                for (int c = 0; c < d; ++c) mu(j, c) = sums(j, c) / counts[j];
                continue;
            }
            // Re-seed an empty cluster at the point farthest from its centroid.
            double far = -1.0;
            int pick = 0;
            for (int i = 0; i < n; ++i) {
                const double dd = sqdist(z, i, mu, assign[i]);
                if (dd > far) {
                    far = dd;
                    pick = i;
                }
            }
            for (int c = 0; c < d; ++c) mu(j, c) = z(pick, c);
            assign[pick] = j;
        }

        if (prev_inertia - inertia <= rel_tol * std::max(prev_inertia, 1e-12) &&
            prev_inertia != std::numeric_limits<double>::infinity())
            break;
        prev_inertia = inertia;
    }

    // Final consistent inertia for restart comparison.
    inertia = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) best = std::min(best, sqdist(z, i, mu, j));
        inertia += best;
    }
    return {std::move(mu), inertia};
}

}  // namespace detail

/// Best-of-20-restarts k-means++ / Lloyd centroids on the given embedding.
/// Deterministic in (z, k, seed); earlier restarts win inertia ties.
inline Matrix init_centroids(const Matrix& z, int k, std::uint64_t seed,
                             int restarts = 20, int max_iters = 300,
                             double rel_tol = 1e-6) {
    if (k < 1) throw config_error("init_centroids: K must be >= 1");
    if (k > z.rows())
        throw config_error("init_centroids: K = " + std::to_string(k) +
                           " exceeds point count " + std::to_string(z.rows()));
    detail::KmeansRun best;
    for (int r = 0; r < restarts; ++r) {
        Rng rng = stream_rng(seed, mix_seed(0x6b6d6561u, static_cast<std::uint64_t>(r)));
        detail::KmeansRun run = detail::kmeans_once(z, k, rng, max_iters, rel_tol);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    check_finite(best.centroids, "k-means centroids");
    return std::move(best.centroids);
}

/// Hard labels from the fused soft assignment; ties go to the lower index.
inline std::vector<int> predict(const Matrix& q) {
    if (q.rows() < 1 || q.cols() < 1) throw contract_error("predict: empty assignment");
    std::vector<int> y(q.rows());
    for (int i = 0; i < q.rows(); ++i) {
        int arg = 0;
        for (int j = 1; j < q.cols(); ++j)
            if (q(i, j) > q(i, arg)) arg = j;
        y[i] = arg;
    }
    return y;
}

}  // namespace relclust
