#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "relclust/augment.hpp"
#include "relclust/autodiff.hpp"
#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"
#include "relclust/rng.hpp"

namespace relclust {

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Uniform draw in +-sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_init(int fan_in, int fan_out, Rng& rng) {
    if (fan_in < 1 || fan_out < 1) throw config_error("glorot_init: fan dims must be >= 1");
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (std::size_t i = 0; i < w.size(); ++i)
        w.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
    return w;
}

inline void check_dims(const std::vector<int>& dims, const char* what) {
    if (dims.size() < 2)
        throw config_error(std::string(what) + ": need at least input and output widths");
    for (int d : dims)
        if (d < 1) throw config_error(std::string(what) + ": layer widths must be >= 1");
}

/// Default encoder width chains; decoders mirror them.
inline std::vector<int> ae_dims(int d, int latent = 20) { return {d, 128, 256, 512, latent}; }
inline std::vector<int> gae_dims(int d, int latent = 20) { return {d, 128, 256, latent}; }

// ---------------------------------------------------------------------------
// Parameter containers
// ---------------------------------------------------------------------------

/// Fully connected autoencoder: ReLU hidden layers with biases, linear final
/// layer on both sides. The decoder mirrors the encoder width chain.
struct AeParams {
    std::vector<Matrix> enc_w, enc_b;
    std::vector<Matrix> dec_w, dec_b;

    static AeParams init(const std::vector<int>& dims, Rng& rng) {
        check_dims(dims, "AeParams");
        AeParams p;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            p.enc_w.push_back(glorot_init(dims[l], dims[l + 1], rng));
            p.enc_b.push_back(Matrix(1, dims[l + 1]));
        }
        for (std::size_t l = dims.size() - 1; l > 0; --l) {
            p.dec_w.push_back(glorot_init(dims[l], dims[l - 1], rng));
            p.dec_b.push_back(Matrix(1, dims[l - 1]));
        }
        return p;
    }

    /// Stable flat order used by the optimizer and the checkpoint format.
    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> out;
        for (std::size_t l = 0; l < enc_w.size(); ++l) {
            out.push_back(&enc_w[l]);
            out.push_back(&enc_b[l]);
        }
        for (std::size_t l = 0; l < dec_w.size(); ++l) {
            out.push_back(&dec_w[l]);
            out.push_back(&dec_b[l]);
        }
        return out;
    }
};

/// Graph autoencoder: every layer propagates through the structure operator,
/// sigma(S (H W)), Tanh hidden activations, no biases. The final layer is
/// linear unless final_activation is requested at the call site.
struct GaeParams {
    std::vector<Matrix> enc_w;
    std::vector<Matrix> dec_w;

    static GaeParams init(const std::vector<int>& dims, Rng& rng) {
        check_dims(dims, "GaeParams");
        GaeParams p;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l)
            p.enc_w.push_back(glorot_init(dims[l], dims[l + 1], rng));
        for (std::size_t l = dims.size() - 1; l > 0; --l)
            p.dec_w.push_back(glorot_init(dims[l], dims[l - 1], rng));
        return p;
    }

    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> out;
        for (auto& w : enc_w) out.push_back(&w);
        for (auto& w : dec_w) out.push_back(&w);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Tape bindings: per-record leaves for each parameter, in parameters() order
// ---------------------------------------------------------------------------

struct AeBinding {
    std::vector<Tensor> enc_w, enc_b, dec_w, dec_b;

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        for (std::size_t l = 0; l < enc_w.size(); ++l) {
            out.push_back(enc_w[l]);
            out.push_back(enc_b[l]);
        }
        for (std::size_t l = 0; l < dec_w.size(); ++l) {
            out.push_back(dec_w[l]);
            out.push_back(dec_b[l]);
        }
        return out;
    }
};

struct GaeBinding {
    std::vector<Tensor> enc_w, dec_w;

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        for (Tensor w : enc_w) out.push_back(w);
        for (Tensor w : dec_w) out.push_back(w);
        return out;
    }
};

inline AeBinding bind(Tape& tape, const AeParams& p) {
    AeBinding b;
    for (const Matrix& w : p.enc_w) b.enc_w.push_back(tape.leaf(w));
    for (const Matrix& v : p.enc_b) b.enc_b.push_back(tape.leaf(v));
    for (const Matrix& w : p.dec_w) b.dec_w.push_back(tape.leaf(w));
    for (const Matrix& v : p.dec_b) b.dec_b.push_back(tape.leaf(v));
    return b;
}

inline GaeBinding bind(Tape& tape, const GaeParams& p) {
    GaeBinding b;
    for (const Matrix& w : p.enc_w) b.enc_w.push_back(tape.leaf(w));
    for (const Matrix& w : p.dec_w) b.dec_w.push_back(tape.leaf(w));
    return b;
}

/// A view's propagation operator attached to one tape: sparse matrices ride
/// along as spmm inputs, dense ones become constant (no-gradient) leaves, and
/// series operators stay symbolic (expanded into spmm chains on use).
struct BoundStructure {
    std::shared_ptr<const Csr> sparse;
    Tensor dense;
    std::shared_ptr<const Csr> series_base;
    double series_eta = 0.0;
    int series_terms = 0;
};

inline BoundStructure bind_structure(Tape& tape, const ViewStructure& s) {
    BoundStructure b;
    if (s.sparse) {
        b.sparse = s.sparse;
    } else if (s.dense) {
        b.dense = tape.constant(*s.dense);
    } else {
        b.series_base = s.series_base;
        b.series_eta = s.series_eta;
        b.series_terms = s.series_terms;
    }
    return b;
}

inline Tensor propagate(Tape& tape, const BoundStructure& s, Tensor h) {
    if (s.sparse) return tape.spmm(s.sparse, h);
    if (s.dense.id >= 0) return tape.matmul(s.dense, h);
    // eta * sum_{j=0..J} (1-eta)^j S^j h, each term one sparse pass.
    Tensor acc = tape.scale(h, s.series_eta);
    Tensor power = h;
    double coef = s.series_eta;
    for (int j = 1; j <= s.series_terms; ++j) {
        power = tape.spmm(s.series_base, power);
        coef *= 1.0 - s.series_eta;
        acc = tape.add(acc, tape.scale(power, coef));
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor dense_chain(Tape& tape, const std::vector<Tensor>& ws,
                          const std::vector<Tensor>& bs, Tensor h) {
    for (std::size_t l = 0; l < ws.size(); ++l) {
        h = tape.add_rowvec(tape.matmul(h, ws[l]), bs[l]);
        if (l + 1 < ws.size()) h = tape.relu(h);
    }
    return h;
}

inline std::vector<Tensor> gcn_chain(Tape& tape, const std::vector<Tensor>& ws,
                                     const BoundStructure& s, Tensor h,
                                     bool final_activation) {
    std::vector<Tensor> trace;
    for (std::size_t l = 0; l < ws.size(); ++l) {
        h = propagate(tape, s, tape.matmul(h, ws[l]));
        if (l + 1 < ws.size() || final_activation) h = tape.tanh(h);
        trace.push_back(h);
    }
    return trace;
}

}  // namespace detail

inline Tensor ae_encode(Tape& tape, const AeBinding& p, Tensor x) {
    return detail::dense_chain(tape, p.enc_w, p.enc_b, x);
}

inline Tensor ae_decode(Tape& tape, const AeBinding& p, Tensor z) {
    return detail::dense_chain(tape, p.dec_w, p.dec_b, z);
}

/// Output plus the per-layer embeddings the propagation regularizer inspects.
struct GaeForward {
    Tensor out;
    std::vector<Tensor> trace;
};

inline GaeForward gae_encode(Tape& tape, const GaeBinding& p, const BoundStructure& s,
                             Tensor x, bool final_activation = false) {
    GaeForward f;
    f.trace = detail::gcn_chain(tape, p.enc_w, s, x, final_activation);
    f.out = f.trace.back();
    return f;
}

inline GaeForward gae_decode(Tape& tape, const GaeBinding& p, const BoundStructure& s,
                             Tensor z, bool final_activation = false) {
    GaeForward f;
    f.trace = detail::gcn_chain(tape, p.dec_w, s, z, final_activation);
    f.out = f.trace.back();
    return f;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean squared reconstruction error, (1/n) * ||x - x_hat||_F^2.
inline Tensor loss_ae(Tape& tape, Tensor x_target, Tensor x_hat) {
    if (x_target.rows != x_hat.rows || x_target.cols != x_hat.cols)
        throw shape_error("loss_ae: target and reconstruction shapes differ");
    return tape.scale(tape.sqdiff_sum(x_target, x_hat), 1.0 / x_target.rows);
}

/// Structure plus propagated-attribute reconstruction:
/// (alpha/n) * ||S - S_hat||_F^2 + (1/n) * ||SX - X_hat||_F^2.
inline Tensor loss_gae(Tape& tape, Tensor s_target, Tensor s_hat, Tensor sx_target,
                       Tensor x_hat, double alpha) {
    if (alpha < 0.0) throw config_error("loss_gae: alpha must be >= 0");
    const double n = s_target.rows;
    Tensor structure = tape.scale(tape.sqdiff_sum(s_target, s_hat), alpha / n);
    Tensor attribute = tape.scale(tape.sqdiff_sum(sx_target, x_hat), 1.0 / sx_target.rows);
    return tape.add(structure, attribute);
}

/// Mean-row KL divergence between the row-softmax of each traced embedding
/// and the row-softmax of its propagated counterpart, summed over the trace.
inline Tensor propagation_reg(Tape& tape, const BoundStructure& s_clean,
                              const std::vector<Tensor>& trace) {
    if (trace.empty()) throw contract_error("propagation_reg: empty trace");
    Tensor total;
    for (Tensor h : trace) {
        Tensor lp = tape.log_softmax_rows(h);
        Tensor lq = tape.log_softmax_rows(propagate(tape, s_clean, h));
        Tensor kl = tape.sum_all(tape.hadamard(tape.exp(lp), tape.sub(lp, lq)));
        Tensor term = tape.scale(kl, 1.0 / h.rows);
        total = total.id < 0 ? term : tape.add(total, term);
    }
    return total;
}

/// L_AE + L_GAE + epsilon * L_PR.
inline Tensor reconstruction_loss(Tape& tape, Tensor l_ae, Tensor l_gae, Tensor l_pr,
                                  double epsilon) {
    if (epsilon < 0.0) throw config_error("reconstruction_loss: epsilon must be >= 0");
    return tape.add(tape.add(l_ae, l_gae), tape.scale(l_pr, epsilon));
}

}  // namespace relclust
