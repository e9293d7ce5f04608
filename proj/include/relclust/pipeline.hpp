#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relclust/augment.hpp"
#include "relclust/autodiff.hpp"
#include "relclust/checkpoint.hpp"
#include "relclust/cluster.hpp"
#include "relclust/config.hpp"
#include "relclust/errors.hpp"
#include "relclust/graph.hpp"
#include "relclust/metrics.hpp"
#include "relclust/nets.hpp"
#include "relclust/optim.hpp"
#include "relclust/relation.hpp"
#include "relclust/rng.hpp"

namespace relclust {

// ---------------------------------------------------------------------------
// Epoch records and the JSON training log
// ---------------------------------------------------------------------------

/// One line of the training trace: the loss breakdown of a single epoch and,
/// when ground-truth labels exist, the clustering quality of that epoch.
struct EpochRecord {
    std::string phase;  // "ae", "gae", "joint", or "train"
    int epoch = 0;      // 1-based within the run
    double loss = 0.0;  // total objective of the phase
    double l_ae = 0.0;
    double l_gae = 0.0;
    double l_pr = 0.0;
    double l_re = 0.0;
    double l_clu = 0.0;
    bool has_metrics = false;
    ClusterMetrics metrics;
    double mad = 0.0;  // mean average distance of the fused embedding
};

namespace detail {

/// One JSON object per epoch; nlohmann stores keys sorted, so the emitted
/// bytes are a pure function of the record (no timestamps on purpose).
inline std::string epoch_json(const EpochRecord& rec) {
    nlohmann::json j;
    j["phase"] = rec.phase;
    j["epoch"] = rec.epoch;
    j["loss"] = rec.loss;
    j["l_ae"] = rec.l_ae;
    j["l_gae"] = rec.l_gae;
    j["l_pr"] = rec.l_pr;
    j["l_re"] = rec.l_re;
    j["l_clu"] = rec.l_clu;
    if (rec.has_metrics) {
        j["acc"] = rec.metrics.acc;
        j["nmi"] = rec.metrics.nmi;
        j["ari"] = rec.metrics.ari;
        j["f1"] = rec.metrics.f1;
        j["mad"] = rec.mad;
    }
    return j.dump();
}

/// Finiteness gate plus logging; identifies the offending term by name.
inline void finish_epoch(const EpochRecord& rec, std::vector<EpochRecord>& trace,
                         std::ostream* log) {
    const std::pair<const char*, double> terms[] = {
        {"loss", rec.loss}, {"l_ae", rec.l_ae}, {"l_gae", rec.l_gae},
        {"l_pr", rec.l_pr}, {"l_re", rec.l_re}, {"l_clu", rec.l_clu}};
    for (const auto& [name, v] : terms)
        if (!std::isfinite(v))
            throw numeric_error(rec.phase + " epoch " + std::to_string(rec.epoch) +
                                ": non-finite " + name);
    if (log != nullptr) *log << epoch_json(rec) << "\n";
    trace.push_back(rec);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Epoch-invariant training context
// ---------------------------------------------------------------------------

/// Everything that can be computed once per run: the normalized structure,
/// the diffusion operator, the anchor machinery, and the row-block partition
/// that bounds every quadratic loss term. Full-graph mode is the single block
/// {n}, so both modes share one code path.
struct TrainContext {
    RunConfig cfg;
    int n = 0;
    int d = 0;
    int m2 = 0;  // effective per-node anchor count (capped at n - 1)
    NormalizedAdjacency sn;
    std::shared_ptr<const Csr> s_clean;
    ViewStructure diffusion;  // second-view operator: dense solve or series
    Matrix sx;                // propagated attributes, the graph-decoder target
    SamplingWeights sw;
    std::vector<int> local_lists;              // fixed top-m2 anchors, flattened
    std::vector<int> blocks;                   // contiguous block sizes
    std::vector<std::vector<int>> block_rows;  // row indices per block
    std::vector<double> red_weight;            // per-block share of cross pairs
    std::vector<Matrix> s_targets;             // dense diagonal blocks of S
    double shat_rescale = 1.0;                 // n^2 / sum of squared block sizes
};

namespace detail {

inline std::vector<int> width_chain(const std::vector<int>& hidden, int d, int latent) {
    std::vector<int> chain;
    chain.reserve(hidden.size() + 2);
    chain.push_back(d);
    for (int w : hidden) chain.push_back(w);
    chain.push_back(latent);
    return chain;
}

inline std::vector<int> block_partition(int n, int batch) {
    if (batch <= 0 || batch >= n) return {n};
    std::vector<int> blocks(static_cast<std::size_t>(n / batch), batch);
    if (n % batch != 0) blocks.push_back(n % batch);
    return blocks;
}

/// Dense copy of S[start:start+size, start:start+size].
inline Matrix dense_diagonal_block(const Csr& s, int start, int size) {
    Matrix block(size, size);
    for (int i = 0; i < size; ++i)
        for (int p = s.row_ptr[start + i]; p < s.row_ptr[start + i + 1]; ++p) {
            const int j = s.col_idx[p] - start;
            if (j >= 0 && j < size) block(i, j) = s.vals[p];
        }
    return block;
}

}  // namespace detail

inline TrainContext prepare_training(const Graph& g, const RunConfig& cfg) {
    cfg.validate();
    if (g.n < 2) throw config_error("training needs at least 2 nodes");
    if (cfg.batch == 1)
        throw config_error("batch: blocks need at least 2 rows for redundancy pairs");
    if (cfg.k > g.n)
        throw config_error("k = " + std::to_string(cfg.k) + " exceeds the node count " +
                           std::to_string(g.n));

    TrainContext ctx;
    ctx.cfg = cfg;
    ctx.n = g.n;
    ctx.d = g.attr_dim();
    ctx.sn = normalize_adjacency(g);
    ctx.s_clean = std::make_shared<const Csr>(ctx.sn.s);

    Matrix u;
    if (cfg.diffusion_series_terms == 0) {
        u = ppr_diffusion(ctx.sn, cfg.eta).u;
        ctx.diffusion = dense_view(std::make_shared<const Matrix>(u));
    } else {
        // Keep the per-epoch cost sparse: the dense series matrix serves only
        // the one-time anchor selection, while training applies the operator
        // term by term.
        u = ppr_diffusion_series(ctx.sn, cfg.eta, cfg.diffusion_series_terms).u;
        ctx.diffusion = series_view(ctx.s_clean, cfg.eta, cfg.diffusion_series_terms);
    }
    ctx.sx = sparse_multiply(*ctx.s_clean, g.x);
    ctx.sw = sampling_weights(ctx.sn.loop_degrees, cfg.beta, cfg.log_base);

    ctx.m2 = std::min(cfg.m2, g.n - 1);
    if (ctx.m2 < cfg.m2)
        warn("m2 reduced to " + std::to_string(ctx.m2) + ": only " + std::to_string(g.n) +
             " nodes");
    ctx.local_lists = local_anchors(u, ctx.m2);

    ctx.blocks = detail::block_partition(g.n, cfg.batch);
    double pair_total = 0.0, sq_total = 0.0;
    int at = 0;
    for (int b : ctx.blocks) {
        std::vector<int> rows(b);
        std::iota(rows.begin(), rows.end(), at);
        ctx.block_rows.push_back(std::move(rows));
        ctx.s_targets.push_back(detail::dense_diagonal_block(ctx.sn.s, at, b));
        pair_total += static_cast<double>(b) * (b - 1);
        sq_total += static_cast<double>(b) * b;
        at += b;
    }
    if (pair_total <= 0.0)
        throw config_error("redundancy needs at least one block with 2 rows");
    for (int b : ctx.blocks)
        ctx.red_weight.push_back(static_cast<double>(b) * (b - 1) / pair_total);
    ctx.shat_rescale = static_cast<double>(g.n) * g.n / sq_total;
    return ctx;
}

// ---------------------------------------------------------------------------
// Loss assembly shared by the pretraining and training phases
// ---------------------------------------------------------------------------

namespace detail {

/// (alpha/n) * ||S - S_hat||^2 restricted to the diagonal blocks (rescaled to
/// keep the expected magnitude of the full sum) plus (1/n) * ||SX - X_hat||^2.
/// With the single block {n} this equals the unrestricted graph loss.
inline Tensor graph_reconstruction_loss(Tape& tape, const TrainContext& ctx, Tensor z1_gae,
                                        Tensor z2_gae, Tensor x_hat_gae) {
    Tensor sq;
    for (std::size_t b = 0; b < ctx.blocks.size(); ++b) {
        Tensor z1b = tape.gather_rows(z1_gae, ctx.block_rows[b]);
        Tensor z2b = tape.gather_rows(z2_gae, ctx.block_rows[b]);
        Tensor xb = tape.gather_rows(x_hat_gae, ctx.block_rows[b]);
        Tensor s_hat = reconstruct_adjacency(tape, z1b, z2b, xb);
        Tensor term = tape.sqdiff_sum(tape.constant(ctx.s_targets[b]), s_hat);
        sq = sq.id < 0 ? term : tape.add(sq, term);
    }
    const double n = ctx.n;
    Tensor structure = tape.scale(sq, ctx.shat_rescale * ctx.cfg.alpha / n);
    Tensor attribute = tape.scale(tape.sqdiff_sum(tape.constant(ctx.sx), x_hat_gae), 1.0 / n);
    return tape.add(structure, attribute);
}

/// Redundancy restricted to within-block row pairs, blocks weighted by their
/// share of all cross pairs. Single block {n} reproduces the full term.
inline Tensor blocked_redundancy(Tape& tape, const TrainContext& ctx, Tensor r1, Tensor r2) {
    Tensor acc;
    for (std::size_t b = 0; b < ctx.blocks.size(); ++b) {
        if (ctx.red_weight[b] == 0.0) continue;  // a 1-row block has no pairs
        Tensor term = redundancy_term(tape, tape.gather_rows(r1, ctx.block_rows[b]),
                                      tape.gather_rows(r2, ctx.block_rows[b]));
        Tensor w = tape.scale(term, ctx.red_weight[b]);
        acc = acc.id < 0 ? w : tape.add(acc, w);
    }
    return acc;
}

/// redundancy - preservation over both anchor scopes for one route.
inline Tensor blocked_route_loss(Tape& tape, const TrainContext& ctx,
                                 const RelationMatrices& r) {
    Tensor pres = tape.add(preservation_term(tape, r.r1_g, r.r2_g),
                           preservation_term(tape, r.r1_l, r.r2_l));
    Tensor red = tape.add(blocked_redundancy(tape, ctx, r.r1_g, r.r2_g),
                          blocked_redundancy(tape, ctx, r.r1_l, r.r2_l));
    return tape.sub(red, pres);
}

/// The four relation matrices of one route. The anchor side is always the
/// second-view embedding; the symmetric flag swaps the within-view comparison
/// to first-view anchors instead.
inline RelationMatrices build_relations(Tape& tape, const TrainContext& ctx, Tensor z1,
                                        Tensor z2, const std::vector<int>& global_anchors) {
    Tensor r2_anchor = ctx.cfg.symmetric_relation ? z1 : z2;
    RelationMatrices r;
    r.r1_g = relation_matrix_global(tape, z1, z2, global_anchors);
    r.r1_l = relation_matrix_local(tape, z1, z2, ctx.local_lists, ctx.m2);
    r.r2_g = relation_matrix_global(tape, z2, r2_anchor, global_anchors);
    r.r2_l = relation_matrix_local(tape, z2, r2_anchor, ctx.local_lists, ctx.m2);
    return r;
}

/// Deterministic clean-input pass through the fused architecture: both views
/// share the unperturbed attributes and differ only in the propagation
/// operator (adjacency vs. diffusion), mirroring the training geometry.
struct FusedForward {
    Matrix z_tilde;
    Matrix z_ae_mean;
    Matrix z_gae_mean;
};

inline FusedForward fused_forward(const TrainContext& ctx, const Graph& g,
                                  const ModelState& model) {
    Tape tape;
    AeBinding ab = bind(tape, model.ae);
    GaeBinding gb = bind(tape, model.gae);
    FusionBinding fu = bind(tape, model.fusion);
    BoundStructure bs = bind_structure(tape, sparse_view(ctx.s_clean));
    BoundStructure bu = bind_structure(tape, ctx.diffusion);
    Tensor x = tape.constant(g.x);

    Tensor za = ae_encode(tape, ab, x);
    Tensor z1g = gae_encode(tape, gb, bs, x, ctx.cfg.gae_final_activation).out;
    Tensor z2g = gae_encode(tape, gb, bu, x, ctx.cfg.gae_final_activation).out;
    Tensor zc = fuse_views(tape, fu, za, za, z1g, z2g);
    Tensor zt = refine_fusion_blocked(tape, bs, zc, fu.delta, ctx.blocks);

    FusedForward f;
    f.z_tilde = tape.value(zt);
    f.z_ae_mean = tape.value(za);
    f.z_gae_mean = tape.value(tape.scale(tape.add(z1g, z2g), 0.5));
    return f;
}

/// Warn when a cluster loses all of its members, but only on transitions:
/// `last_empty` carries the previously reported cluster id (-1 when all were
/// populated) so a persistent collapse produces one line, not one per epoch.
inline void warn_empty_clusters(const std::vector<int>& pred, int k, int epoch,
                                int& last_empty) {
    std::vector<char> seen(static_cast<std::size_t>(k), 0);
    for (int y : pred)
        if (y >= 0 && y < k) seen[static_cast<std::size_t>(y)] = 1;
    int empty = -1;
    for (int j = 0; j < k && empty < 0; ++j)
        if (!seen[static_cast<std::size_t>(j)]) empty = j;
    if (empty >= 0 && empty != last_empty)
        warn("train epoch " + std::to_string(epoch) + ": predicted cluster " +
             std::to_string(empty) + " is empty");
    last_empty = empty;
}

/// Data-compatibility checks shared by training and inference. Training
/// additionally insists the configured latent width matches the checkpoint,
/// because continuing with a silently different architecture than the config
/// asked for would be worse than failing; inference takes the checkpoint's
/// architecture as authoritative.
inline void check_model_matches(const ModelState& model, const TrainContext& ctx,
                                bool training) {
    const std::string who = training ? "train" : "inference";
    if (model.ae.enc_w.empty() || model.gae.enc_w.empty())
        throw contract_error(who + ": checkpoint carries no model parameters");
    if (model.ae.enc_w.front().rows() != ctx.d)
        throw contract_error(who + ": model expects " +
                             std::to_string(model.ae.enc_w.front().rows()) +
                             " attributes but the dataset has " + std::to_string(ctx.d));
    if (training && model.ae.enc_w.back().cols() != ctx.cfg.latent)
        throw contract_error(who + ": model latent width " +
                             std::to_string(model.ae.enc_w.back().cols()) +
                             " does not match configured " + std::to_string(ctx.cfg.latent));
    if (model.fusion.w1.rows() != ctx.n)
        throw contract_error(who + ": fusion weights cover " +
                             std::to_string(model.fusion.w1.rows()) + " nodes but the graph has " +
                             std::to_string(ctx.n));
    if (model.centroids.size() > 0 && model.centroids.rows() != ctx.cfg.k)
        throw contract_error(who + ": checkpoint has " + std::to_string(model.centroids.rows()) +
                             " centroids but k = " + std::to_string(ctx.cfg.k));
}

/// One main-phase epoch: build views, encode, assemble every loss term, take
/// one optimizer step. Returns the record of the pre-step forward pass.
inline EpochRecord train_epoch(const TrainContext& ctx, const Graph& g, ModelState& model,
                               Adam& adam, int epoch, int& last_empty) {
    const RunConfig& cfg = ctx.cfg;
    Tape tape;
    AeBinding ab = bind(tape, model.ae);
    GaeBinding gb = bind(tape, model.gae);
    FusionBinding fu = bind(tape, model.fusion);
    const bool own_q2 = model.centroids_q2.size() > 0;
    const bool own_q3 = model.centroids_q3.size() > 0;
    Tensor mu1 = tape.leaf(model.centroids);
    Tensor mu2 = own_q2 ? tape.leaf(model.centroids_q2) : mu1;
    Tensor mu3 = own_q3 ? tape.leaf(model.centroids_q3) : mu1;

    AugmentConfig aug;
    aug.sigma_pert = cfg.sigma_pert;
    aug.rho = cfg.rho;
    aug.eta = cfg.eta;
    auto views = make_views(g, model.z_pre, ctx.diffusion, aug, cfg.seed_augment,
                            static_cast<std::uint64_t>(epoch));
    BoundStructure b1 = bind_structure(tape, views.first.s);
    BoundStructure b2 = bind_structure(tape, views.second.s);
    BoundStructure bs = bind_structure(tape, sparse_view(ctx.s_clean));
    Tensor x1 = tape.constant(views.first.x);
    Tensor x2 = tape.constant(views.second.x);

    // Two-view encoders.
    Tensor z1a = ae_encode(tape, ab, x1);
    Tensor z2a = ae_encode(tape, ab, x2);
    GaeForward g1 = gae_encode(tape, gb, b1, x1, cfg.gae_final_activation);
    GaeForward g2 = gae_encode(tape, gb, b2, x2, cfg.gae_final_activation);

    // Relation alignment with fresh global anchors every epoch.
    Rng srng = stream_rng(cfg.seed_sample, mix_seed(static_cast<std::uint64_t>(epoch), 0x616e63));
    const std::vector<int> ganchors = qmc_multinomial(ctx.sw, qmc_points(cfg.m1, uniform01(srng)));
    RelationMatrices r_attr = build_relations(tape, ctx, z1a, z2a, ganchors);
    RelationMatrices r_struct = build_relations(tape, ctx, g1.out, g2.out, ganchors);
    Tensor l_re = tape.add(blocked_route_loss(tape, ctx, r_attr),
                           blocked_route_loss(tape, ctx, r_struct));

    // Fuse both branches, refine by self-attention, and decode the result.
    Tensor zc = fuse_views(tape, fu, z1a, z2a, g1.out, g2.out);
    Tensor zt = refine_fusion_blocked(tape, bs, zc, fu.delta, ctx.blocks);
    Tensor xhat_ae = ae_decode(tape, ab, zt);
    GaeForward dec = gae_decode(tape, gb, bs, zt);

    Tensor l_ae = loss_ae(tape, tape.constant(g.x), xhat_ae);
    Tensor l_gae = graph_reconstruction_loss(tape, ctx, g1.out, g2.out, dec.out);

    std::vector<Tensor> prop_trace;
    for (Tensor t : g1.trace) prop_trace.push_back(t);
    for (Tensor t : g2.trace) prop_trace.push_back(t);
    for (Tensor t : dec.trace) prop_trace.push_back(t);
    Tensor l_pr = propagation_reg(tape, bs, prop_trace);
    Tensor l_rec = reconstruction_loss(tape, l_ae, l_gae, l_pr, cfg.epsilon);

    // Assignment heads against the per-epoch frozen target.
    Tensor q1 = soft_assign(tape, zt, mu1);
    Tensor q2 = soft_assign(tape, tape.scale(tape.add(z1a, z2a), 0.5), mu2);
    Tensor q3 = soft_assign(tape, tape.scale(tape.add(g1.out, g2.out), 0.5), mu3);
    const Matrix target = target_distribution(tape.value(q1));
    Tensor l_clu = clustering_loss(tape, target, q1, q2, q3);

    Tensor loss = total_loss(tape, l_re, l_rec, l_clu, cfg.kappa);

    // Gradient slots must line up with ModelState::parameters().
    std::vector<Tensor> wrt = ab.tensors();
    for (Tensor t : gb.tensors()) wrt.push_back(t);
    for (Tensor t : fu.tensors()) wrt.push_back(t);
    wrt.push_back(mu1);
    if (own_q2) wrt.push_back(mu2);
    if (own_q3) wrt.push_back(mu3);
    std::vector<Matrix> grads = tape.backward(loss, wrt);
    adam.step(grads);

    EpochRecord rec;
    rec.phase = "train";
    rec.epoch = epoch;
    rec.l_ae = tape.value(l_ae)(0, 0);
    rec.l_gae = tape.value(l_gae)(0, 0);
    rec.l_pr = tape.value(l_pr)(0, 0);
    rec.l_re = tape.value(l_re)(0, 0);
    rec.l_clu = tape.value(l_clu)(0, 0);
    rec.loss = tape.value(loss)(0, 0);
    if (g.has_labels()) {
        const std::vector<int> pred = predict(tape.value(q1));
        rec.metrics = compute_metrics(pred, g.labels);
        rec.mad = mean_average_distance(tape.value(zt));
        rec.has_metrics = true;
        warn_empty_clusters(pred, cfg.k, epoch, last_empty);
    }
    return rec;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pretraining: attribute branch, structure branch, then the united pass
// ---------------------------------------------------------------------------

struct PretrainResult {
    TrainerCheckpoint checkpoint;  // phase "pretrained", no optimizer state
    Matrix z_fused;                // clean-input fused representation
    std::vector<EpochRecord> trace;
};

inline PretrainResult pretrain(const Graph& g, const RunConfig& cfg,
                               std::ostream* log = nullptr) {
    TrainContext ctx = prepare_training(g, cfg);

    ModelState model;
    Rng ae_rng = stream_rng(cfg.seed_model, 0x6165);
    Rng gae_rng = stream_rng(cfg.seed_model, 0x676165);
    model.ae = AeParams::init(detail::width_chain(cfg.ae_hidden(), ctx.d, cfg.latent), ae_rng);
    model.gae = GaeParams::init(detail::width_chain(cfg.gae_hidden(), ctx.d, cfg.latent), gae_rng);
    model.fusion = FusionParams::init(ctx.n, cfg.latent);

    PretrainResult out;
    AdamConfig acfg;
    acfg.lr = cfg.lr;

    // Phase 1: the attribute autoencoder alone.
    {
        Adam adam(model.ae.parameters(), acfg);
        for (int e = 1; e <= cfg.epochs_ae; ++e) {
            Tape tape;
            AeBinding ab = bind(tape, model.ae);
            Tensor x = tape.constant(g.x);
            Tensor l = loss_ae(tape, x, ae_decode(tape, ab, ae_encode(tape, ab, x)));
            adam.step(tape.backward(l, ab.tensors()));

            EpochRecord rec;
            rec.phase = "ae";
            rec.epoch = e;
            rec.l_ae = rec.loss = tape.value(l)(0, 0);
            detail::finish_epoch(rec, out.trace, log);
        }
    }

    // Phase 2: the graph autoencoder alone (single view over the clean graph).
    {
        Adam adam(model.gae.parameters(), acfg);
        for (int e = 1; e <= cfg.epochs_gae; ++e) {
            Tape tape;
            GaeBinding gb = bind(tape, model.gae);
            BoundStructure bs = bind_structure(tape, sparse_view(ctx.s_clean));
            Tensor x = tape.constant(g.x);
            GaeForward enc = gae_encode(tape, gb, bs, x, cfg.gae_final_activation);
            GaeForward dec = gae_decode(tape, gb, bs, enc.out);
            Tensor l = detail::graph_reconstruction_loss(tape, ctx, enc.out, enc.out, dec.out);
            adam.step(tape.backward(l, gb.tensors()));

            EpochRecord rec;
            rec.phase = "gae";
            rec.epoch = e;
            rec.l_gae = rec.loss = tape.value(l)(0, 0);
            detail::finish_epoch(rec, out.trace, log);
        }
    }

    // Phase 3: both branches on the summed reconstruction objective. With the
    // fusion weights included, the decoders read the refined fusion (so W1,
    // W2, and the skip weight receive gradients); excluded, each branch
    // decodes its own latent and the fusion weights stay at initialization.
    {
        std::vector<Matrix*> params = model.ae.parameters();
        for (Matrix* p : model.gae.parameters()) params.push_back(p);
        if (cfg.joint_include_fusion)
            for (Matrix* p : model.fusion.parameters()) params.push_back(p);
        Adam adam(params, acfg);
        for (int e = 1; e <= cfg.epochs_joint; ++e) {
            Tape tape;
            AeBinding ab = bind(tape, model.ae);
            GaeBinding gb = bind(tape, model.gae);
            FusionBinding fu;
            BoundStructure bs = bind_structure(tape, sparse_view(ctx.s_clean));
            Tensor x = tape.constant(g.x);

            Tensor za = ae_encode(tape, ab, x);
            GaeForward enc = gae_encode(tape, gb, bs, x, cfg.gae_final_activation);
            Tensor xhat_ae;
            GaeForward dec;
            if (cfg.joint_include_fusion) {
                fu = bind(tape, model.fusion);
                Tensor zc = fuse_views(tape, fu, za, za, enc.out, enc.out);
                Tensor zt = refine_fusion_blocked(tape, bs, zc, fu.delta, ctx.blocks);
                xhat_ae = ae_decode(tape, ab, zt);
                dec = gae_decode(tape, gb, bs, zt);
            } else {
                xhat_ae = ae_decode(tape, ab, za);
                dec = gae_decode(tape, gb, bs, enc.out);
            }
            Tensor l_ae = loss_ae(tape, x, xhat_ae);
            Tensor l_gae = detail::graph_reconstruction_loss(tape, ctx, enc.out, enc.out, dec.out);
            Tensor l = tape.add(l_ae, l_gae);

            std::vector<Tensor> wrt = ab.tensors();
            for (Tensor t : gb.tensors()) wrt.push_back(t);
            if (cfg.joint_include_fusion)
                for (Tensor t : fu.tensors()) wrt.push_back(t);
            adam.step(tape.backward(l, wrt));

            EpochRecord rec;
            rec.phase = "joint";
            rec.epoch = e;
            rec.l_ae = tape.value(l_ae)(0, 0);
            rec.l_gae = tape.value(l_gae)(0, 0);
            rec.loss = tape.value(l)(0, 0);
            detail::finish_epoch(rec, out.trace, log);
        }
    }

    // Final artifacts: the clean attribute latent drives edge deletion, and
    // the clean fused representation seeds the centroids.
    {
        Tape tape;
        AeBinding ab = bind(tape, model.ae);
        model.z_pre = tape.value(ae_encode(tape, ab, tape.constant(g.x)));
    }
    out.z_fused = detail::fused_forward(ctx, g, model).z_tilde;

    out.checkpoint.model = std::move(model);
    out.checkpoint.phase = "pretrained";
    out.checkpoint.epoch = cfg.epochs_ae + cfg.epochs_gae + cfg.epochs_joint;
    return out;
}

// ---------------------------------------------------------------------------
// Inference: deterministic labels from a trained model
// ---------------------------------------------------------------------------

struct InferenceOutput {
    Matrix z_tilde;
    Matrix q1, q2, q3;
    std::vector<int> labels;
};

namespace detail {

inline InferenceOutput infer_with(const TrainContext& ctx, const Graph& g,
                                  const ModelState& model) {
    if (model.centroids.size() == 0)
        throw contract_error("infer: model has no centroids; run training first");
    FusedForward f = fused_forward(ctx, g, model);

    Tape tape;
    Tensor mu1 = tape.constant(model.centroids);
    Tensor mu2 = model.centroids_q2.size() > 0 ? tape.constant(model.centroids_q2) : mu1;
    Tensor mu3 = model.centroids_q3.size() > 0 ? tape.constant(model.centroids_q3) : mu1;
    InferenceOutput out;
    out.z_tilde = f.z_tilde;
    out.q1 = tape.value(soft_assign(tape, tape.constant(f.z_tilde), mu1));
    out.q2 = tape.value(soft_assign(tape, tape.constant(f.z_ae_mean), mu2));
    out.q3 = tape.value(soft_assign(tape, tape.constant(f.z_gae_mean), mu3));
    out.labels = predict(out.q1);
    return out;
}

}  // namespace detail

inline InferenceOutput infer(const Graph& g, const RunConfig& cfg, const ModelState& model) {
    TrainContext ctx = prepare_training(g, cfg);
    detail::check_model_matches(model, ctx, /*training=*/false);
    return detail::infer_with(ctx, g, model);
}

// ---------------------------------------------------------------------------
// Main training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    TrainerCheckpoint checkpoint;  // phase "train", resumable
    std::vector<EpochRecord> trace;
    std::vector<int> labels;  // clean-inference labels of the final model
    Matrix z_tilde;           // clean-inference fused embedding
    Matrix q1;                // clean-inference fused assignment
    bool stopped_early = false;
};

/// Runs the main phase from a "pretrained" checkpoint (fresh optimizer,
/// centroids initialized on the fused pre-representation) or resumes a
/// "train" checkpoint exactly where it stopped.
inline TrainResult train(const Graph& g, const RunConfig& cfg, TrainerCheckpoint start,
                         std::ostream* log = nullptr) {
    TrainContext ctx = prepare_training(g, cfg);
    ModelState model = std::move(start.model);
    detail::check_model_matches(model, ctx, /*training=*/true);
    if (model.z_pre.size() == 0)
        throw contract_error("train: checkpoint lacks the pre-trained attribute latent");

    const bool resume = start.phase == "train";
    if (!resume && start.phase != "pretrained")
        throw config_error("train: cannot continue from phase '" + start.phase + "'");

    if (model.centroids.size() == 0) {
        detail::FusedForward f = detail::fused_forward(ctx, g, model);
        model.centroids = init_centroids(f.z_tilde, cfg.k, mix_seed(cfg.seed_model, 0x7131));
        if (!cfg.shared_centroids) {
            model.centroids_q2 =
                init_centroids(f.z_ae_mean, cfg.k, mix_seed(cfg.seed_model, 0x7132));
            model.centroids_q3 =
                init_centroids(f.z_gae_mean, cfg.k, mix_seed(cfg.seed_model, 0x7133));
        }
    }

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    Adam adam(model.parameters(), acfg);
    if (resume) {
        if (start.adam_m.size() != adam.param_count())
            throw contract_error("train: optimizer state covers " +
                                 std::to_string(start.adam_m.size()) + " tensors but the model has " +
                                 std::to_string(adam.param_count()));
        adam.first_moments() = std::move(start.adam_m);
        adam.second_moments() = std::move(start.adam_v);
        adam.set_step_count(start.adam_step);
    }

    TrainResult out;
    int last = resume ? start.epoch : 0;
    double best_loss = std::numeric_limits<double>::infinity();
    int stall = 0;
    int last_empty = -1;
    for (int e = last + 1; e <= cfg.epochs; ++e) {
        EpochRecord rec = detail::train_epoch(ctx, g, model, adam, e, last_empty);
        detail::finish_epoch(rec, out.trace, log);
        last = e;
        if (cfg.early_stop) {
            const double scale = std::max(std::abs(best_loss), 1e-12);
            if (best_loss == std::numeric_limits<double>::infinity() ||
                best_loss - rec.loss > cfg.early_stop_tol * scale) {
                best_loss = rec.loss;
                stall = 0;
            } else if (++stall >= cfg.early_stop_patience) {
                out.stopped_early = true;
                break;
            }
        }
    }

    InferenceOutput fin = detail::infer_with(ctx, g, model);
    out.labels = std::move(fin.labels);
    out.z_tilde = std::move(fin.z_tilde);
    out.q1 = std::move(fin.q1);

    out.checkpoint.model = std::move(model);
    out.checkpoint.phase = "train";
    out.checkpoint.epoch = last;
    out.checkpoint.adam_step = adam.step_count();
    out.checkpoint.adam_m = adam.first_moments();
    out.checkpoint.adam_v = adam.second_moments();
    return out;
}

}  // namespace relclust
