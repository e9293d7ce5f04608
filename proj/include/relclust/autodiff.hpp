#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"

namespace relclust {

/// Lightweight handle into a Tape. Carries its shape so composition code can
/// do shape arithmetic without touching the tape.
struct Tensor {
    int id = -1;
    int rows = 0;
    int cols = 0;
};

enum class Op {
    leaf,
    matmul,
    spmm,
    transpose,
    add,
    sub,
    hadamard,
    scale,
    scale_by,
    add_scalar,
    add_rowvec,
    square,
    exp_e,
    log_e,
    relu,
    tanh_s,
    softmax_rows,
    log_softmax_rows,
    row_sum,
    sum_all,
    row_normalize,
    normalize_rows_sum,
    pairwise_sqdist,
    inv_one_plus,
    gather_rows,
    rowwise_gather_dot,
    sqdiff_sum,
    concat_rows,
};

inline const char* op_name(Op k) {
    switch (k) {
        case Op::leaf: return "leaf";
        case Op::matmul: return "matmul";
        case Op::spmm: return "spmm";
        case Op::transpose: return "transpose";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::hadamard: return "hadamard";
        case Op::scale: return "scale";
        case Op::scale_by: return "scale_by";
        case Op::add_scalar: return "add_scalar";
        case Op::add_rowvec: return "add_rowvec";
        case Op::square: return "square";
        case Op::exp_e: return "exp";
        case Op::log_e: return "log";
        case Op::relu: return "relu";
        case Op::tanh_s: return "tanh";
        case Op::softmax_rows: return "softmax_rows";
        case Op::log_softmax_rows: return "log_softmax_rows";
        case Op::row_sum: return "row_sum";
        case Op::sum_all: return "sum_all";
        case Op::row_normalize: return "row_normalize";
        case Op::normalize_rows_sum: return "normalize_rows_sum";
        case Op::pairwise_sqdist: return "pairwise_sqdist";
        case Op::inv_one_plus: return "inv_one_plus";
        case Op::gather_rows: return "gather_rows";
        case Op::rowwise_gather_dot: return "rowwise_gather_dot";
        case Op::sqdiff_sum: return "sqdiff_sum";
        case Op::concat_rows: return "concat_rows";
    }
    return "?";
}

/// Append-only record of operations, rebuilt for every training step. Nodes
/// are topologically ordered by construction; backward() walks them once in
/// reverse. Forward values are kept alive on the record because backward
/// rules read them.
class Tape {
  public:
    /// Trainable input; gradient is accumulated and can be queried.
    Tensor leaf(Matrix v) { return push(Op::leaf, std::move(v), -1, -1, true); }

    /// Non-trainable input; backward never propagates into it.
    Tensor constant(Matrix v) { return push(Op::leaf, std::move(v), -1, -1, false); }

    Tensor scalar(double x) { return constant(Matrix(1, 1, x)); }

    const Matrix& value(Tensor t) const { return nodes_[t.id].val; }
    std::size_t size() const { return nodes_.size(); }

    // --- linear algebra -----------------------------------------------------

    Tensor matmul(Tensor a, Tensor b) {
        if (a.cols != b.rows)
            throw shape_error(std::string("matmul: inner dimensions differ, ") + dims(a) + " x " +
                              dims(b));
        return push(Op::matmul, multiply(val(a), val(b)), a.id, b.id);
    }

    Tensor spmm(std::shared_ptr<const Csr> s, Tensor x) {
        if (!s) throw contract_error("spmm: null sparse operand");
        if (s->cols != x.rows)
            throw shape_error("spmm: inner dimensions differ, " + std::to_string(s->rows) + "x" +
                              std::to_string(s->cols) + " x " + dims(x));
        Tensor t = push(Op::spmm, sparse_multiply(*s, val(x)), x.id, -1);
        nodes_[t.id].sp = s;
        nodes_[t.id].spt = std::make_shared<const Csr>(csr_transpose(*s));
        return t;
    }

    Tensor transpose(Tensor a) { return push(Op::transpose, transposed(val(a)), a.id, -1); }

    // --- elementwise --------------------------------------------------------

    Tensor add(Tensor a, Tensor b) { return binary(Op::add, a, b); }
    Tensor sub(Tensor a, Tensor b) { return binary(Op::sub, a, b); }
    Tensor hadamard(Tensor a, Tensor b) { return binary(Op::hadamard, a, b); }

    Tensor scale(Tensor a, double c) {
        Matrix o = val(a);
        for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] *= c;
        Tensor t = push(Op::scale, std::move(o), a.id, -1);
        nodes_[t.id].aux = c;
        return t;
    }

    /// Multiplies every entry of a by the 1x1 tensor s; both get gradients.
    Tensor scale_by(Tensor a, Tensor s) {
        if (s.rows != 1 || s.cols != 1) throw shape_error("scale_by: scale operand must be 1x1");
        const double c = val(s)(0, 0);
        Matrix o = val(a);
        for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] *= c;
        return push(Op::scale_by, std::move(o), a.id, s.id);
    }

    Tensor add_scalar(Tensor a, double c) {
        Matrix o = val(a);
        for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] += c;
        return push(Op::add_scalar, std::move(o), a.id, -1);
    }

    /// Adds a 1xC row vector (bias) to every row of a.
    Tensor add_rowvec(Tensor a, Tensor r) {
        if (r.rows != 1 || r.cols != a.cols)
            throw shape_error(std::string("add_rowvec: bias ") + dims(r) + " does not match " +
                              dims(a));
        Matrix o = val(a);
        const Matrix& rv = val(r);
        for (int i = 0; i < o.rows(); ++i)
            for (int j = 0; j < o.cols(); ++j) o(i, j) += rv(0, j);
        return push(Op::add_rowvec, std::move(o), a.id, r.id);
    }

    Tensor square(Tensor a) {
        return unary_map(Op::square, a, [](double x) { return x * x; });
    }
    Tensor exp(Tensor a) {
        return unary_map(Op::exp_e, a, [](double x) { return std::exp(x); });
    }
    Tensor log(Tensor a) {
        return unary_map(Op::log_e, a, [](double x) { return std::log(x); });
    }
    Tensor relu(Tensor a) {
        return unary_map(Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
    }
    Tensor tanh(Tensor a) {
        return unary_map(Op::tanh_s, a, [](double x) { return std::tanh(x); });
    }

    Tensor inv_one_plus(Tensor a) {
        return unary_map(Op::inv_one_plus, a, [](double x) { return 1.0 / (1.0 + x); });
    }

    // --- row-structured -----------------------------------------------------

    /// Row-wise softmax with per-row max subtraction.
    Tensor softmax_rows(Tensor a) {
        Matrix o = val(a);
        softmax_rows_inplace(o, false);
        return push(Op::softmax_rows, std::move(o), a.id, -1);
    }

    /// Row-wise log-softmax; numerically safe companion for KL terms.
    Tensor log_softmax_rows(Tensor a) {
        Matrix o = val(a);
        softmax_rows_inplace(o, true);
        return push(Op::log_softmax_rows, std::move(o), a.id, -1);
    }

    Tensor row_sum(Tensor a) {
        Matrix o(a.rows, 1);
        const Matrix& v = val(a);
        for (int i = 0; i < a.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < a.cols; ++j) s += v(i, j);
            o(i, 0) = s;
        }
        return push(Op::row_sum, std::move(o), a.id, -1);
    }

    Tensor sum_all(Tensor a) {
        double s = 0.0;
        const Matrix& v = val(a);
        for (std::size_t i = 0; i < v.size(); ++i) s += v.data()[i];
        return push(Op::sum_all, Matrix(1, 1, s), a.id, -1);
    }

    /// Rows scaled to unit Euclidean norm; an all-zero row stays zero (and
    /// receives zero gradient).
    Tensor row_normalize(Tensor a) {
        Matrix o = val(a);
        for (int i = 0; i < o.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < o.cols(); ++j) s += o(i, j) * o(i, j);
            const double nrm = std::sqrt(s);
            if (nrm == 0.0) continue;
            for (int j = 0; j < o.cols(); ++j) o(i, j) /= nrm;
        }
        return push(Op::row_normalize, std::move(o), a.id, -1);
    }

    /// Rows scaled to unit sum (entries assumed positive).
    Tensor normalize_rows_sum(Tensor a) {
        Matrix o = val(a);
        for (int i = 0; i < o.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < o.cols(); ++j) s += o(i, j);
            if (s == 0.0) throw numeric_error("normalize_rows_sum: zero row sum");
            for (int j = 0; j < o.cols(); ++j) o(i, j) /= s;
        }
        return push(Op::normalize_rows_sum, std::move(o), a.id, -1);
    }

    /// out(i,k) = squared Euclidean distance between row i of z and row k of c.
    Tensor pairwise_sqdist(Tensor z, Tensor c) {
        if (z.cols != c.cols)
            throw shape_error(std::string("pairwise_sqdist: widths differ, ") + dims(z) + " vs " +
                              dims(c));
        const Matrix& zv = val(z);
        const Matrix& cv = val(c);
        Matrix o(z.rows, c.rows);
#pragma omp parallel for schedule(static) if (z.rows > 64)
        for (int i = 0; i < z.rows; ++i)
            for (int k = 0; k < c.rows; ++k) {
                double s = 0.0;
                for (int j = 0; j < z.cols; ++j) {
                    const double d = zv(i, j) - cv(k, j);
                    s += d * d;
                }
                o(i, k) = s;
            }
        return push(Op::pairwise_sqdist, std::move(o), z.id, c.id);
    }

    /// out row t = a row idx[t]; duplicate indices allowed.
    Tensor gather_rows(Tensor a, std::vector<int> idx) {
        for (int i : idx)
            if (i < 0 || i >= a.rows)
                throw contract_error("gather_rows: index " + std::to_string(i) +
                                     " out of range [0," + std::to_string(a.rows) + ")");
        Matrix o(static_cast<int>(idx.size()), a.cols);
        const Matrix& v = val(a);
        for (int t = 0; t < o.rows(); ++t)
            for (int j = 0; j < a.cols; ++j) o(t, j) = v(idx[t], j);
        Tensor t = push(Op::gather_rows, std::move(o), a.id, -1);
        nodes_[t.id].idx = std::move(idx);
        return t;
    }

    /// out(i,t) = dot(q row i, a row lists[i*m + t]); per-row index lists of
    /// equal width m flattened into one vector.
    Tensor rowwise_gather_dot(Tensor q, Tensor a, std::vector<int> lists, int m) {
        if (q.cols != a.cols)
            throw shape_error(std::string("rowwise_gather_dot: widths differ, ") + dims(q) +
                              " vs " + dims(a));
        if (static_cast<int>(lists.size()) != q.rows * m)
            throw contract_error("rowwise_gather_dot: index list size mismatch");
        for (int i : lists)
            if (i < 0 || i >= a.rows)
                throw contract_error("rowwise_gather_dot: index out of range");
        const Matrix& qv = val(q);
        const Matrix& av = val(a);
        Matrix o(q.rows, m);
#pragma omp parallel for schedule(static) if (q.rows > 64)
        for (int i = 0; i < q.rows; ++i)
            for (int t = 0; t < m; ++t) {
                const double* qr = qv.row(i);
                const double* ar = av.row(lists[static_cast<std::size_t>(i) * m + t]);
                double s = 0.0;
                for (int j = 0; j < q.cols; ++j) s += qr[j] * ar[j];
                o(i, t) = s;
            }
        Tensor t = push(Op::rowwise_gather_dot, std::move(o), q.id, a.id);
        nodes_[t.id].idx = std::move(lists);
        nodes_[t.id].aux_m = m;
        return t;
    }

    /// Stacks equally wide blocks top to bottom; gradient slices back out.
    Tensor concat_rows(const std::vector<Tensor>& parts) {
        if (parts.empty()) throw contract_error("concat_rows: no inputs");
        const int cols = parts[0].cols;
        int rows = 0;
        for (Tensor p : parts) {
            if (p.cols != cols)
                throw shape_error(std::string("concat_rows: width mismatch, ") + dims(parts[0]) +
                                  " vs " + dims(p));
            rows += p.rows;
        }
        Matrix o(rows, cols);
        int r = 0;
        for (Tensor p : parts) {
            const Matrix& pv = val(p);
            for (int i = 0; i < p.rows; ++i)
                for (int j = 0; j < cols; ++j) o(r + i, j) = pv(i, j);
            r += p.rows;
        }
        Tensor t = push(Op::concat_rows, std::move(o), -1, -1);
        Node& node = nodes_[t.id];
        node.parents.reserve(parts.size());
        for (Tensor p : parts) {
            node.parents.push_back(p.id);
            if (nodes_[p.id].needs_grad) node.needs_grad = true;
        }
        return t;
    }

    /// Fused sum of squared differences, 1x1 result; avoids materializing the
    /// difference for large operands.
    Tensor sqdiff_sum(Tensor a, Tensor b) {
        if (a.rows != b.rows || a.cols != b.cols)
            throw shape_error(std::string("sqdiff_sum: shape mismatch ") + dims(a) + " vs " +
                              dims(b));
        const Matrix& av = val(a);
        const Matrix& bv = val(b);
        double s = 0.0;
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = av.data()[i] - bv.data()[i];
            s += d * d;
        }
        return push(Op::sqdiff_sum, Matrix(1, 1, s), a.id, b.id);
    }

    // --- backward -----------------------------------------------------------

    /// Gradients of the 1x1 loss w.r.t. each tensor in wrt, in order. Leaves
    /// the loss cannot reach get zero gradients of matching shape.
    std::vector<Matrix> backward(Tensor loss, const std::vector<Tensor>& wrt) const {
        if (loss.rows != 1 || loss.cols != 1)
            throw contract_error("backward: loss must be 1x1, got " + dims(loss));
        std::vector<Matrix> grad(nodes_.size());
        grad[loss.id] = Matrix(1, 1, 1.0);
        for (int i = loss.id; i >= 0; --i) {
            const Node& n = nodes_[i];
            if (grad[i].empty() || !n.needs_grad || n.kind == Op::leaf) continue;
            if (!all_finite(grad[i]))
                throw numeric_error(std::string("backward: non-finite gradient at op ") +
                                    op_name(n.kind));
            propagate(n, grad[i], grad);
        }
        std::vector<Matrix> out;
        out.reserve(wrt.size());
        for (Tensor t : wrt) {
            if (grad[t.id].empty()) grad[t.id] = Matrix(t.rows, t.cols, 0.0);
            if (!all_finite(grad[t.id]))
                throw numeric_error(std::string("backward: non-finite gradient at op ") +
                                    op_name(nodes_[t.id].kind));
            out.push_back(std::move(grad[t.id]));
        }
        return out;
    }

  private:
    struct Node {
        Op kind;
        int a = -1;
        int b = -1;
        Matrix val;
        bool needs_grad = false;
        double aux = 0.0;
        int aux_m = 0;
        std::vector<int> idx;
        std::vector<int> parents;  // variadic inputs (concat_rows)
        std::shared_ptr<const Csr> sp, spt;
    };

    std::vector<Node> nodes_;

    const Matrix& val(Tensor t) const { return nodes_[t.id].val; }

    static std::string dims(Tensor t) {
        return std::to_string(t.rows) + "x" + std::to_string(t.cols);
    }

    Tensor push(Op kind, Matrix v, int a, int b, bool leaf_grad = false) {
        if (kind != Op::leaf && !all_finite(v))
            throw numeric_error(std::string("non-finite values produced by op ") + op_name(kind));
        Node n;
        n.kind = kind;
        n.a = a;
        n.b = b;
        n.needs_grad = kind == Op::leaf ? leaf_grad
                                        : ((a >= 0 && nodes_[a].needs_grad) ||
                                           (b >= 0 && nodes_[b].needs_grad));
        n.val = std::move(v);
        nodes_.push_back(std::move(n));
        Tensor t;
        t.id = static_cast<int>(nodes_.size()) - 1;
        t.rows = nodes_.back().val.rows();
        t.cols = nodes_.back().val.cols();
        return t;
    }

    Tensor binary(Op kind, Tensor a, Tensor b) {
        if (a.rows != b.rows || a.cols != b.cols)
            throw shape_error(std::string(op_name(kind)) + ": shape mismatch " + dims(a) + " vs " +
                              dims(b));
        const Matrix& av = val(a);
        const Matrix& bv = val(b);
        Matrix o(a.rows, a.cols);
        for (std::size_t i = 0; i < o.size(); ++i) {
            const double x = av.data()[i], y = bv.data()[i];
            o.data()[i] = kind == Op::add ? x + y : kind == Op::sub ? x - y : x * y;
        }
        return push(kind, std::move(o), a.id, b.id);
    }

    template <typename F>
    Tensor unary_map(Op kind, Tensor a, F f) {
        Matrix o = val(a);
        for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] = f(o.data()[i]);
        return push(kind, std::move(o), a.id, -1);
    }

    static void softmax_rows_inplace(Matrix& m, bool take_log) {
        for (int i = 0; i < m.rows(); ++i) {
            double mx = m(i, 0);
            for (int j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
            double s = 0.0;
            for (int j = 0; j < m.cols(); ++j) s += std::exp(m(i, j) - mx);
            const double lse = mx + std::log(s);
            for (int j = 0; j < m.cols(); ++j)
                m(i, j) = take_log ? m(i, j) - lse : std::exp(m(i, j) - lse);
        }
    }

    void acc(std::vector<Matrix>& grad, int id, const Matrix& contrib) const {
        if (!nodes_[id].needs_grad) return;
        if (grad[id].empty()) {
            grad[id] = contrib;
            return;
        }
        for (std::size_t i = 0; i < contrib.size(); ++i) grad[id].data()[i] += contrib.data()[i];
    }

    void propagate(const Node& n, const Matrix& g, std::vector<Matrix>& grad) const {
        const Matrix& av = n.a >= 0 ? nodes_[n.a].val : n.val;
        switch (n.kind) {
            case Op::leaf: break;
            case Op::matmul: {
                acc(grad, n.a, multiply(g, transposed(nodes_[n.b].val)));
                acc(grad, n.b, multiply(transposed(av), g));
                break;
            }
            case Op::spmm: {
                acc(grad, n.a, sparse_multiply(*n.spt, g));
                break;
            }
            case Op::transpose: {
                acc(grad, n.a, transposed(g));
                break;
            }
            case Op::add: {
                acc(grad, n.a, g);
                acc(grad, n.b, g);
                break;
            }
            case Op::sub: {
                acc(grad, n.a, g);
                if (nodes_[n.b].needs_grad) {
                    Matrix ng = g;
                    for (std::size_t i = 0; i < ng.size(); ++i) ng.data()[i] = -ng.data()[i];
                    acc(grad, n.b, ng);
                }
                break;
            }
            case Op::hadamard: {
                if (nodes_[n.a].needs_grad) {
                    Matrix da = g;
                    const Matrix& bv = nodes_[n.b].val;
                    for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= bv.data()[i];
                    acc(grad, n.a, da);
                }
                if (nodes_[n.b].needs_grad) {
                    Matrix db = g;
                    for (std::size_t i = 0; i < db.size(); ++i) db.data()[i] *= av.data()[i];
                    acc(grad, n.b, db);
                }
                break;
            }
            case Op::scale: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= n.aux;
                acc(grad, n.a, da);
                break;
            }
            case Op::scale_by: {
                const double c = nodes_[n.b].val(0, 0);
                if (nodes_[n.a].needs_grad) {
                    Matrix da = g;
                    for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= c;
                    acc(grad, n.a, da);
                }
                if (nodes_[n.b].needs_grad) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i)
                        s += g.data()[i] * av.data()[i];
                    acc(grad, n.b, Matrix(1, 1, s));
                }
                break;
            }
            case Op::add_scalar: {
                acc(grad, n.a, g);
                break;
            }
            case Op::add_rowvec: {
                acc(grad, n.a, g);
                if (nodes_[n.b].needs_grad) {
                    Matrix dr(1, g.cols());
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) dr(0, j) += g(i, j);
                    acc(grad, n.b, dr);
                }
                break;
            }
            case Op::square: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= 2.0 * av.data()[i];
                acc(grad, n.a, da);
                break;
            }
            case Op::exp_e: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= n.val.data()[i];
                acc(grad, n.a, da);
                break;
            }
            case Op::log_e: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] /= av.data()[i];
                acc(grad, n.a, da);
                break;
            }
            case Op::relu: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i)
                    if (av.data()[i] <= 0.0) da.data()[i] = 0.0;
                acc(grad, n.a, da);
                break;
            }
            case Op::tanh_s: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) {
                    const double y = n.val.data()[i];
                    da.data()[i] *= 1.0 - y * y;
                }
                acc(grad, n.a, da);
                break;
            }
            case Op::softmax_rows: {
                Matrix da(g.rows(), g.cols());
                for (int i = 0; i < g.rows(); ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < g.cols(); ++j) dot += g(i, j) * n.val(i, j);
                    for (int j = 0; j < g.cols(); ++j)
                        da(i, j) = n.val(i, j) * (g(i, j) - dot);
                }
                acc(grad, n.a, da);
                break;
            }
            case Op::log_softmax_rows: {
                Matrix da(g.rows(), g.cols());
                for (int i = 0; i < g.rows(); ++i) {
                    double gs = 0.0;
                    for (int j = 0; j < g.cols(); ++j) gs += g(i, j);
                    for (int j = 0; j < g.cols(); ++j)
                        da(i, j) = g(i, j) - std::exp(n.val(i, j)) * gs;
                }
                acc(grad, n.a, da);
                break;
            }
            case Op::row_sum: {
                Matrix da(av.rows(), av.cols());
                for (int i = 0; i < da.rows(); ++i)
                    for (int j = 0; j < da.cols(); ++j) da(i, j) = g(i, 0);
                acc(grad, n.a, da);
                break;
            }
            case Op::sum_all: {
                acc(grad, n.a, Matrix(av.rows(), av.cols(), g(0, 0)));
                break;
            }
            case Op::row_normalize: {
                Matrix da(av.rows(), av.cols());
                for (int i = 0; i < av.rows(); ++i) {
                    double s = 0.0;
                    for (int j = 0; j < av.cols(); ++j) s += av(i, j) * av(i, j);
                    const double nrm = std::sqrt(s);
                    if (nrm == 0.0) continue;  // zero row: zero gradient
                    double dot = 0.0;
                    for (int j = 0; j < av.cols(); ++j) dot += g(i, j) * n.val(i, j);
                    for (int j = 0; j < av.cols(); ++j)
                        da(i, j) = (g(i, j) - n.val(i, j) * dot) / nrm;
                }
                acc(grad, n.a, da);
                break;
            }
            case Op::normalize_rows_sum: {
                Matrix da(av.rows(), av.cols());
                for (int i = 0; i < av.rows(); ++i) {
                    double s = 0.0;
                    for (int j = 0; j < av.cols(); ++j) s += av(i, j);
                    double dot = 0.0;
                    for (int j = 0; j < av.cols(); ++j) dot += g(i, j) * n.val(i, j);
                    for (int j = 0; j < av.cols(); ++j) da(i, j) = (g(i, j) - dot) / s;
                }
                acc(grad, n.a, da);
                break;
            }
            case Op::pairwise_sqdist: {
                const Matrix& cv = nodes_[n.b].val;
                if (nodes_[n.a].needs_grad) {
                    Matrix dz(av.rows(), av.cols());
#pragma omp parallel for schedule(static) if (av.rows() > 64)
                    for (int i = 0; i < av.rows(); ++i)
                        for (int k = 0; k < cv.rows(); ++k) {
                            const double w = 2.0 * g(i, k);
                            if (w == 0.0) continue;
                            for (int j = 0; j < av.cols(); ++j)
                                dz(i, j) += w * (av(i, j) - cv(k, j));
                        }
                    acc(grad, n.a, dz);
                }
                if (nodes_[n.b].needs_grad) {
                    Matrix dc(cv.rows(), cv.cols());
                    for (int i = 0; i < av.rows(); ++i)
                        for (int k = 0; k < cv.rows(); ++k) {
                            const double w = 2.0 * g(i, k);
                            if (w == 0.0) continue;
                            for (int j = 0; j < av.cols(); ++j)
                                dc(k, j) += w * (cv(k, j) - av(i, j));
                        }
                    acc(grad, n.b, dc);
                }
                break;
            }
            case Op::inv_one_plus: {
                Matrix da = g;
                for (std::size_t i = 0; i < da.size(); ++i) {
                    const double y = n.val.data()[i];
                    da.data()[i] *= -y * y;
                }
                acc(grad, n.a, da);
                break;
            }
            case Op::gather_rows: {
                Matrix da(av.rows(), av.cols());
                for (int t = 0; t < g.rows(); ++t) {
                    const int r = n.idx[t];
                    for (int j = 0; j < g.cols(); ++j) da(r, j) += g(t, j);
                }
                acc(grad, n.a, da);
                break;
            }
            case Op::rowwise_gather_dot: {
                const Matrix& qv = av;
                const Matrix& anch = nodes_[n.b].val;
                if (nodes_[n.a].needs_grad) {
                    Matrix dq(qv.rows(), qv.cols());
#pragma omp parallel for schedule(static) if (qv.rows() > 64)
                    for (int i = 0; i < qv.rows(); ++i)
                        for (int t = 0; t < n.aux_m; ++t) {
                            const double w = g(i, t);
                            if (w == 0.0) continue;
                            const double* ar =
                                anch.row(n.idx[static_cast<std::size_t>(i) * n.aux_m + t]);
                            for (int j = 0; j < qv.cols(); ++j) dq(i, j) += w * ar[j];
                        }
                    acc(grad, n.a, dq);
                }
                if (nodes_[n.b].needs_grad) {
                    Matrix da(anch.rows(), anch.cols());
                    for (int i = 0; i < qv.rows(); ++i)
                        for (int t = 0; t < n.aux_m; ++t) {
                            const double w = g(i, t);
                            if (w == 0.0) continue;
                            const int r = n.idx[static_cast<std::size_t>(i) * n.aux_m + t];
                            for (int j = 0; j < qv.cols(); ++j) da(r, j) += w * qv(i, j);
                        }
                    acc(grad, n.b, da);
                }
                break;
            }
            case Op::concat_rows: {
                int r = 0;
                for (int pid : n.parents) {
                    const Matrix& pv = nodes_[pid].val;
                    if (nodes_[pid].needs_grad) {
                        Matrix dp(pv.rows(), pv.cols());
                        for (int i = 0; i < pv.rows(); ++i)
                            for (int j = 0; j < pv.cols(); ++j) dp(i, j) = g(r + i, j);
                        acc(grad, pid, dp);
                    }
                    r += pv.rows();
                }
                break;
            }
            case Op::sqdiff_sum: {
                const Matrix& bv = nodes_[n.b].val;
                const double w = 2.0 * g(0, 0);
                if (nodes_[n.a].needs_grad) {
                    Matrix da(av.rows(), av.cols());
                    for (std::size_t i = 0; i < da.size(); ++i)
                        da.data()[i] = w * (av.data()[i] - bv.data()[i]);
                    acc(grad, n.a, da);
                }
                if (nodes_[n.b].needs_grad) {
                    Matrix db(av.rows(), av.cols());
                    for (std::size_t i = 0; i < db.size(); ++i)
                        db.data()[i] = w * (bv.data()[i] - av.data()[i]);
                    acc(grad, n.b, db);
                }
                break;
            }
        }
    }
};

}  // namespace relclust
