#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "relclust/autodiff.hpp"
#include "relclust/matrix.hpp"
#include "relclust/optim.hpp"

using relclust::Adam;
using relclust::AdamConfig;
using relclust::Csr;
using relclust::Matrix;
using relclust::Tape;
using relclust::Tensor;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
    return m;
}

/// Finite-difference check of d(sum(op(x) . w))/dx for a unary tape op.
void check_unary_gradient(const std::function<Tensor(Tape&, Tensor)>& op, const Matrix& x0,
                          std::uint64_t seed, double tol = 1e-4) {
    std::mt19937_64 rng(seed);
    const Matrix w = random_matrix(0, 0, rng);  // placeholder, resized below
    auto loss_of = [&](const Matrix& x, const Matrix& weight) {
        Tape tape;
        Tensor x_t = tape.leaf(x);
        Tensor y = op(tape, x_t);
        Tensor l = tape.sum_all(tape.hadamard(y, tape.constant(weight)));
        return tape.value(l)(0, 0);
    };
    Tape tape;
    Tensor x_t = tape.leaf(x0);
    Tensor y = op(tape, x_t);
    Matrix weight = random_matrix(y.rows, y.cols, rng);
    Tensor l = tape.sum_all(tape.hadamard(y, tape.constant(weight)));
    Matrix got = tape.backward(l, {x_t})[0];
    Matrix want = oracle::finite_difference(
        [&](const Matrix& x) { return loss_of(x, weight); }, x0);
    EXPECT_LT(oracle::max_rel_err(got, want), tol);
}

// ===========================================================================
// matmul
// ===========================================================================

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    Tape tape;
    Matrix b = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    Tensor out = tape.matmul(tape.constant(Matrix::identity(2)), tape.constant(b));
    EXPECT_EQ(oracle::max_abs_diff(tape.value(out), b), 0.0);
}

TEST(Matmul, HandInstanceMatchesTripleLoopOracle) {
    Tape tape;
    Matrix a = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    Matrix b = Matrix::from_rows({{5.0}, {6.0}});
    Tensor out = tape.matmul(tape.constant(a), tape.constant(b));
    EXPECT_DOUBLE_EQ(tape.value(out)(0, 0), 17.0);
    EXPECT_DOUBLE_EQ(tape.value(out)(1, 0), 39.0);
    EXPECT_EQ(oracle::max_abs_diff(tape.value(out), oracle::matmul(a, b)), 0.0);
}

TEST(Matmul, ZeroMatrixAnnihilates) {
    Tape tape;
    std::mt19937_64 rng(7);
    Matrix b = random_matrix(3, 4, rng);
    Tensor out = tape.matmul(tape.constant(Matrix(2, 3)), tape.constant(b));
    EXPECT_EQ(oracle::frobenius(tape.value(out)), 0.0);
}

TEST(Matmul, DimensionMismatchReportsBothShapes) {
    Tape tape;
    Tensor a = tape.constant(Matrix(2, 3));
    Tensor b = tape.constant(Matrix(4, 2));
    try {
        tape.matmul(a, b);
        FAIL() << "expected shape_error";
    } catch (const relclust::shape_error& e) {
        EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("4x2"), std::string::npos);
    }
}

TEST(Matmul, RandomInstancesMatchOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix a = random_matrix(5, 7, rng);
        Matrix b = random_matrix(7, 3, rng);
        Tape tape;
        Tensor out = tape.matmul(tape.constant(a), tape.constant(b));
        EXPECT_LT(oracle::max_abs_diff(tape.value(out), oracle::matmul(a, b)), 1e-12);
    }
}

// ===========================================================================
// spmm
// ===========================================================================

TEST(Spmm, SparseIdentityLeavesInputUnchanged) {
    Tape tape;
    std::mt19937_64 rng(3);
    Matrix x = random_matrix(4, 3, rng);
    auto s = std::make_shared<const Csr>(Csr::identity(4));
    Tensor out = tape.spmm(s, tape.constant(x));
    EXPECT_EQ(oracle::max_abs_diff(tape.value(out), x), 0.0);
}

TEST(Spmm, HandInstanceMatchesDensifyOracle) {
    auto s = std::make_shared<const Csr>(Csr::from_triplets(
        2, 2, {{{0, 0}, 0.5}, {{0, 1}, 0.5}, {{1, 0}, 0.5}, {{1, 1}, 0.5}}));
    Tape tape;
    Tensor out = tape.spmm(s, tape.constant(Matrix::identity(2)));
    Matrix want = oracle::matmul(s->densify(), Matrix::identity(2));
    EXPECT_LT(oracle::max_abs_diff(tape.value(out), want), 1e-15);
}

TEST(Spmm, OutOfRangeColumnIndexRaisesStructuralError) {
    Csr s = Csr::identity(3);
    s.col_idx[1] = 3;  // corrupt: column index == n
    EXPECT_THROW(s.validate(), relclust::structural_error);
}

TEST(Spmm, AgreesWithDensifiedMatmulOnRandom50x50) {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 9);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<std::pair<std::pair<int, int>, double>> trip;
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j)
                if (coin(rng) == 0) trip.push_back({{i, j}, val(rng)});
        auto s = std::make_shared<const Csr>(Csr::from_triplets(50, 50, trip));
        Matrix x = random_matrix(50, 8, rng);
        Tape tape;
        Matrix got = tape.value(tape.spmm(s, tape.constant(x)));
        EXPECT_LT(oracle::max_abs_diff(got, oracle::matmul(s->densify(), x)), 1e-10);
    }
}

// ===========================================================================
// elementwise
// ===========================================================================

TEST(Elementwise, HadamardWithOnesIsIdentity) {
    Tape tape;
    std::mt19937_64 rng(5);
    Matrix a = random_matrix(3, 3, rng);
    Tensor out = tape.hadamard(tape.constant(a), tape.constant(Matrix(3, 3, 1.0)));
    EXPECT_EQ(oracle::max_abs_diff(tape.value(out), a), 0.0);
}

TEST(Elementwise, ReluClampsNegatives) {
    Tape tape;
    Tensor out = tape.relu(tape.constant(Matrix::from_rows({{-1.0, 2.0}})));
    EXPECT_DOUBLE_EQ(tape.value(out)(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(tape.value(out)(0, 1), 2.0);
}

TEST(Elementwise, TanhFixesZero) {
    Tape tape;
    Tensor out = tape.tanh(tape.constant(Matrix(1, 1, 0.0)));
    EXPECT_DOUBLE_EQ(tape.value(out)(0, 0), 0.0);
}

TEST(Elementwise, ShapeMismatchRaises) {
    Tape tape;
    Tensor a = tape.constant(Matrix(2, 3));
    Tensor b = tape.constant(Matrix(3, 2));
    EXPECT_THROW(tape.add(a, b), relclust::shape_error);
}

// ===========================================================================
// softmax_rows
// ===========================================================================

TEST(SoftmaxRows, EqualLogitsGiveUniform) {
    Tape tape;
    Tensor out = tape.softmax_rows(tape.constant(Matrix(1, 2, 0.0)));
    EXPECT_DOUBLE_EQ(tape.value(out)(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(tape.value(out)(0, 1), 0.5);
}

TEST(SoftmaxRows, InvariantToRowConstantShift) {
    std::mt19937_64 rng(23);
    Matrix a = random_matrix(4, 5, rng, -3.0, 3.0);
    Matrix shifted = a;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) shifted(i, j) += 7.5 * (i + 1);
    Tape tape;
    Matrix p = tape.value(tape.softmax_rows(tape.constant(a)));
    Matrix q = tape.value(tape.softmax_rows(tape.constant(shifted)));
    EXPECT_LT(oracle::max_abs_diff(p, q), 1e-12);
}

TEST(SoftmaxRows, HandLogInstance) {
    Tape tape;
    Matrix a = Matrix::from_rows({{std::log(1.0), std::log(3.0)}});
    Matrix p = tape.value(tape.softmax_rows(tape.constant(a)));
    EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(p(0, 1), 0.75, 1e-15);
}

TEST(SoftmaxRows, RowsSumToOne) {
    std::mt19937_64 rng(29);
    Matrix a = random_matrix(6, 7, rng, -50.0, 50.0);
    Tape tape;
    Matrix p = tape.value(tape.softmax_rows(tape.constant(a)));
    for (int i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < p.cols(); ++j) s += p(i, j);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

// ===========================================================================
// backward
// ===========================================================================

TEST(Backward, SumOfSquaresHasGradientTwoX) {
    Tape tape;
    Tensor x = tape.leaf(Matrix(1, 1, 3.0));
    Tensor loss = tape.sum_all(tape.hadamard(x, x));
    Matrix g = tape.backward(loss, {x})[0];
    EXPECT_DOUBLE_EQ(g(0, 0), 6.0);
}

TEST(Backward, MeanSquaredReconstructionMatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    const int n = 4, d = 3;
    Matrix x = random_matrix(n, d, rng);
    Matrix xhat0 = random_matrix(n, d, rng);
    auto loss_of = [&](const Matrix& xhat) {
        Tape tape;
        Tensor t = tape.leaf(xhat);
        Tensor l = tape.scale(tape.sqdiff_sum(tape.constant(x), t), 1.0 / n);
        return tape.value(l)(0, 0);
    };
    Tape tape;
    Tensor t = tape.leaf(xhat0);
    Tensor l = tape.scale(tape.sqdiff_sum(tape.constant(x), t), 1.0 / n);
    Matrix got = tape.backward(l, {t})[0];
    Matrix want = oracle::finite_difference(loss_of, xhat0);
    EXPECT_LT(oracle::max_rel_err(got, want), 1e-4);
}

TEST(Backward, UnreachableLeafGetsZeroGradient) {
    Tape tape;
    Tensor x = tape.leaf(Matrix(2, 2, 1.0));
    Tensor y = tape.leaf(Matrix(1, 1, 5.0));
    Tensor loss = tape.sum_all(y);
    Matrix g = tape.backward(loss, {x})[0];
    EXPECT_EQ(oracle::frobenius(g), 0.0);
    EXPECT_EQ(g.rows(), 2);
    EXPECT_EQ(g.cols(), 2);
}

TEST(Backward, NonScalarLossRaisesContractError) {
    Tape tape;
    Tensor x = tape.leaf(Matrix(2, 2, 1.0));
    EXPECT_THROW(tape.backward(x, {x}), relclust::contract_error);
}

TEST(Backward, IsLinearInTheLoss) {
    std::mt19937_64 rng(37);
    Matrix x0 = random_matrix(3, 3, rng);
    const double alpha = 2.75;
    auto grads = [&](double a_weight, bool include_l2) {
        Tape tape;
        Tensor x = tape.leaf(x0);
        Tensor l1 = tape.sum_all(tape.hadamard(x, x));
        Tensor l2 = tape.sum_all(tape.exp(tape.scale(x, 0.3)));
        Tensor total = include_l2 ? tape.add(tape.scale(l1, a_weight), l2)
                                  : tape.scale(l1, a_weight);
        return tape.backward(total, {x})[0];
    };
    Matrix combined = grads(alpha, true);
    Matrix g1 = grads(1.0, false);
    Matrix g2 = [&] {
        Tape tape;
        Tensor x = tape.leaf(x0);
        Tensor l2 = tape.sum_all(tape.exp(tape.scale(x, 0.3)));
        return tape.backward(l2, {x})[0];
    }();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(combined(i, j), alpha * g1(i, j) + g2(i, j), 1e-10);
}

// ===========================================================================
// per-op finite-difference sweep
// ===========================================================================

TEST(GradientSweep, EveryDifferentiableOpMatchesFiniteDifferences) {
    struct Case {
        const char* name;
        std::function<Tensor(Tape&, Tensor)> op;
        double lo, hi;
    };
    auto s_ptr = std::make_shared<const Csr>(Csr::from_triplets(
        4, 4,
        {{{0, 0}, 0.5}, {{0, 1}, 0.25}, {{1, 1}, 1.0}, {{2, 3}, -0.5}, {{3, 2}, 0.75}}));
    std::vector<Case> cases = {
        {"transpose", [](Tape& t, Tensor x) { return t.transpose(x); }, -1.0, 1.0},
        {"scale", [](Tape& t, Tensor x) { return t.scale(x, -1.7); }, -1.0, 1.0},
        {"add_scalar", [](Tape& t, Tensor x) { return t.add_scalar(x, 0.4); }, -1.0, 1.0},
        {"square", [](Tape& t, Tensor x) { return t.square(x); }, -1.0, 1.0},
        {"exp", [](Tape& t, Tensor x) { return t.exp(x); }, -1.0, 1.0},
        {"log", [](Tape& t, Tensor x) { return t.log(x); }, 0.2, 2.0},
        {"relu", [](Tape& t, Tensor x) { return t.relu(x); }, 0.05, 1.0},
        {"tanh", [](Tape& t, Tensor x) { return t.tanh(x); }, -1.0, 1.0},
        {"softmax_rows", [](Tape& t, Tensor x) { return t.softmax_rows(x); }, -2.0, 2.0},
        {"log_softmax_rows",
         [](Tape& t, Tensor x) { return t.log_softmax_rows(x); }, -2.0, 2.0},
        {"row_sum", [](Tape& t, Tensor x) { return t.row_sum(x); }, -1.0, 1.0},
        {"row_normalize", [](Tape& t, Tensor x) { return t.row_normalize(x); }, 0.3, 1.5},
        {"normalize_rows_sum",
         [](Tape& t, Tensor x) { return t.normalize_rows_sum(x); }, 0.3, 1.5},
        {"inv_one_plus", [](Tape& t, Tensor x) { return t.inv_one_plus(x); }, 0.0, 2.0},
        {"spmm", [s_ptr](Tape& t, Tensor x) { return t.spmm(s_ptr, x); }, -1.0, 1.0},
        {"gather_rows",
         [](Tape& t, Tensor x) { return t.gather_rows(x, {2, 0, 0, 3}); }, -1.0, 1.0},
        {"matmul_self",
         [](Tape& t, Tensor x) { return t.matmul(x, t.transpose(x)); }, -1.0, 1.0},
    };
    for (const auto& c : cases) {
        SCOPED_TRACE(c.name);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(1000 + seed);
            Matrix x0 = random_matrix(4, 3, rng, c.lo, c.hi);
            check_unary_gradient(c.op, x0, 7000 + seed);
        }
    }
}

TEST(GradientSweep, BinaryOpsMatchFiniteDifferences) {
    // Check gradients flowing to both operands of two-input ops.
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a0 = random_matrix(3, 4, rng);
        Matrix b0 = random_matrix(3, 4, rng);
        Matrix m0 = random_matrix(4, 2, rng);
        Matrix w_ab = random_matrix(3, 4, rng);
        Matrix w_mm = random_matrix(3, 2, rng);
        Matrix mu0 = random_matrix(2, 4, rng);
        Matrix w_pd = random_matrix(3, 2, rng);

        auto build = [&](Tape& tape, const Matrix& a, const Matrix& b, const Matrix& m,
                         const Matrix& mu, int which, std::vector<Tensor>& leaves) {
            Tensor at = tape.leaf(a), bt = tape.leaf(b), mt = tape.leaf(m), mut = tape.leaf(mu);
            leaves = {at, bt, mt, mut};
            switch (which) {
                case 0:
                    return tape.sum_all(
                        tape.hadamard(tape.hadamard(at, bt), tape.constant(w_ab)));
                case 1:
                    return tape.sum_all(tape.hadamard(tape.sub(at, bt), tape.constant(w_ab)));
                case 2:
                    return tape.sum_all(
                        tape.hadamard(tape.matmul(at, mt), tape.constant(w_mm)));
                case 3: return tape.sqdiff_sum(at, bt);
                default:
                    return tape.sum_all(
                        tape.hadamard(tape.pairwise_sqdist(at, mut), tape.constant(w_pd)));
            }
        };
        for (int which = 0; which < 5; ++which) {
            Tape tape;
            std::vector<Tensor> leaves;
            Tensor l = build(tape, a0, b0, m0, mu0, which, leaves);
            auto grads = tape.backward(l, leaves);
            const Matrix* bases[4] = {&a0, &b0, &m0, &mu0};
            for (int slot = 0; slot < 4; ++slot) {
                Matrix want = oracle::finite_difference(
                    [&](const Matrix& v) {
                        Tape t2;
                        std::vector<Tensor> ignored;
                        Tensor l2 = build(t2, slot == 0 ? v : a0, slot == 1 ? v : b0,
                                          slot == 2 ? v : m0, slot == 3 ? v : mu0, which,
                                          ignored);
                        return t2.value(l2)(0, 0);
                    },
                    *bases[slot]);
                EXPECT_LT(oracle::max_rel_err(grads[slot], want), 1e-4)
                    << "which=" << which << " slot=" << slot;
            }
        }
    }
}

TEST(GradientSweep, RowvecBiasScaleByAndRowwiseDots) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix a0 = random_matrix(3, 4, rng);
        Matrix r0 = random_matrix(1, 4, rng);
        Matrix s0 = random_matrix(1, 1, rng, 0.2, 1.5);
        Matrix q0 = random_matrix(3, 4, rng);
        Matrix z0 = random_matrix(5, 4, rng);
        std::vector<int> lists = {1, 4, 0, 2, 3, 3};  // 3 rows x 2 anchors
        Matrix w_a = random_matrix(3, 4, rng);
        Matrix w_d = random_matrix(3, 2, rng);

        auto loss_val = [&](const Matrix& a, const Matrix& r, const Matrix& s, const Matrix& q,
                            const Matrix& z) {
            Tape tape;
            Tensor at = tape.leaf(a), rt = tape.leaf(r), st = tape.leaf(s), qt = tape.leaf(q),
                   zt = tape.leaf(z);
            Tensor term1 = tape.sum_all(tape.hadamard(
                tape.scale_by(tape.add_rowvec(at, rt), st), tape.constant(w_a)));
            Tensor term2 = tape.sum_all(tape.hadamard(
                tape.rowwise_gather_dot(qt, zt, lists, 2), tape.constant(w_d)));
            return tape.value(tape.add(term1, term2))(0, 0);
        };

        Tape tape;
        Tensor at = tape.leaf(a0), rt = tape.leaf(r0), st = tape.leaf(s0), qt = tape.leaf(q0),
               zt = tape.leaf(z0);
        Tensor term1 = tape.sum_all(
            tape.hadamard(tape.scale_by(tape.add_rowvec(at, rt), st), tape.constant(w_a)));
        Tensor term2 = tape.sum_all(tape.hadamard(
            tape.rowwise_gather_dot(qt, zt, lists, 2), tape.constant(w_d)));
        Tensor l = tape.add(term1, term2);
        auto grads = tape.backward(l, {at, rt, st, qt, zt});

        const Matrix* bases[5] = {&a0, &r0, &s0, &q0, &z0};
        for (int slot = 0; slot < 5; ++slot) {
            Matrix want = oracle::finite_difference(
                [&](const Matrix& v) {
                    return loss_val(slot == 0 ? v : a0, slot == 1 ? v : r0, slot == 2 ? v : s0,
                                    slot == 3 ? v : q0, slot == 4 ? v : z0);
                },
                *bases[slot]);
            EXPECT_LT(oracle::max_rel_err(grads[slot], want), 1e-4) << "slot=" << slot;
        }
    }
}

TEST(ConcatRows, StacksBlocksAndSlicesGradientsBack) {
    std::mt19937_64 rng(47);
    Matrix a0 = random_matrix(2, 3, rng);
    Matrix b0 = random_matrix(4, 3, rng);
    Matrix c0 = random_matrix(1, 3, rng);
    Matrix mix = random_matrix(3, 2, rng);

    {
        Tape tape;
        Tensor stacked = tape.concat_rows({tape.leaf(a0), tape.leaf(b0), tape.leaf(c0)});
        ASSERT_EQ(stacked.rows, 7);
        ASSERT_EQ(stacked.cols, 3);
        for (int j = 0; j < 3; ++j) {
            EXPECT_EQ(tape.value(stacked)(0, j), a0(0, j));
            EXPECT_EQ(tape.value(stacked)(3, j), b0(1, j));
            EXPECT_EQ(tape.value(stacked)(6, j), c0(0, j));
        }
    }

    // Middle block held constant: gradients must still reach the later block.
    auto loss_val = [&](const Matrix& a, const Matrix& c) {
        Tape tape;
        Tensor stacked =
            tape.concat_rows({tape.leaf(a), tape.constant(b0), tape.leaf(c)});
        return tape.value(tape.sqdiff_sum(tape.matmul(stacked, tape.constant(mix)),
                                          tape.constant(Matrix(7, 2, 0.3))))(0, 0);
    };
    Tape tape;
    Tensor at = tape.leaf(a0), ct = tape.leaf(c0);
    Tensor stacked = tape.concat_rows({at, tape.constant(b0), ct});
    Tensor l = tape.sqdiff_sum(tape.matmul(stacked, tape.constant(mix)),
                               tape.constant(Matrix(7, 2, 0.3)));
    auto grads = tape.backward(l, {at, ct});
    Matrix want_a =
        oracle::finite_difference([&](const Matrix& v) { return loss_val(v, c0); }, a0);
    Matrix want_c =
        oracle::finite_difference([&](const Matrix& v) { return loss_val(a0, v); }, c0);
    EXPECT_LT(oracle::max_rel_err(grads[0], want_a), 1e-4);
    EXPECT_LT(oracle::max_rel_err(grads[1], want_c), 1e-4);

    Tape bad;
    const std::vector<Tensor> ragged = {bad.leaf(a0), bad.leaf(Matrix(2, 4, 1.0))};
    EXPECT_THROW(bad.concat_rows(ragged), relclust::shape_error);
    const std::vector<Tensor> none;
    EXPECT_THROW(bad.concat_rows(none), relclust::contract_error);
}

// ===========================================================================
// adam_step
// ===========================================================================

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
    Matrix p = Matrix::from_rows({{1.0, -2.0}});
    Adam opt({&p}, AdamConfig{});
    opt.step({Matrix(1, 2, 0.0)});
    EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(p(0, 1), -2.0);
}

TEST(Adam, FirstStepWithUnitGradientDecrementsByLearningRate) {
    Matrix p(1, 1, 0.0);
    AdamConfig cfg;
    cfg.lr = 1e-3;
    Adam opt({&p}, cfg);
    opt.step({Matrix(1, 1, 1.0)});
    // Bias-corrected m/sqrt(v) is exactly 1 on the first step.
    EXPECT_NEAR(p(0, 0), -1e-3, 1e-8);
}

TEST(Adam, DeterministicAcrossIdenticalRuns) {
    auto run = [] {
        Matrix p = Matrix::from_rows({{0.3, -0.7}, {0.1, 0.9}});
        Adam opt({&p}, AdamConfig{});
        for (int s = 0; s < 5; ++s) {
            Matrix g(2, 2);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) g(i, j) = 0.1 * (s + 1) * (i - j + 0.5);
            opt.step({g});
        }
        return p;
    };
    EXPECT_EQ(oracle::max_abs_diff(run(), run()), 0.0);
}

TEST(Adam, MissingGradientRaisesContractError) {
    Matrix p(2, 2, 1.0);
    Matrix q(1, 3, 1.0);
    Adam opt({&p, &q}, AdamConfig{});
    EXPECT_THROW(opt.step({Matrix(2, 2, 0.0)}), relclust::contract_error);
    EXPECT_THROW(opt.step({Matrix(2, 2, 0.0), Matrix(3, 1, 0.0)}), relclust::contract_error);
}

// ===========================================================================
// dense/sparse plumbing underneath the ops
// ===========================================================================

TEST(Plumbing, LupSolveRecoversKnownInverse) {
    Matrix a = Matrix::from_rows({{4.0, 3.0}, {6.0, 3.0}});
    Matrix inv = relclust::lup_solve(a, Matrix::identity(2));
    // A^{-1} = 1/det * [[3,-3],[-6,4]], det = -6.
    EXPECT_NEAR(inv(0, 0), -0.5, 1e-12);
    EXPECT_NEAR(inv(0, 1), 0.5, 1e-12);
    EXPECT_NEAR(inv(1, 0), 1.0, 1e-12);
    EXPECT_NEAR(inv(1, 1), -2.0 / 3.0, 1e-12);
}

TEST(Plumbing, LupSolveSingularMatrixRaises) {
    Matrix a = Matrix::from_rows({{1.0, 2.0}, {2.0, 4.0}});
    EXPECT_THROW(relclust::lup_solve(a, Matrix::identity(2)), relclust::numeric_error);
}

TEST(Plumbing, CsrTransposeMatchesDenseTranspose) {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 4);
    std::vector<std::pair<std::pair<int, int>, double>> trip;
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 9; ++j)
            if (coin(rng) == 0) trip.push_back({{i, j}, val(rng)});
    Csr s = Csr::from_triplets(12, 9, trip);
    Matrix want = relclust::transposed(s.densify());
    EXPECT_LT(oracle::max_abs_diff(relclust::csr_transpose(s).densify(), want), 1e-15);
}

TEST(Plumbing, DuplicateTripletRaises) {
    EXPECT_THROW(
        Csr::from_triplets(2, 2, {{{0, 1}, 1.0}, {{0, 1}, 2.0}}),
        relclust::structural_error);
}

TEST(Plumbing, NonFiniteForwardValueRaisesNumericError) {
    Tape tape;
    Tensor x = tape.leaf(Matrix(1, 1, -1.0));
    EXPECT_THROW(tape.log(x), relclust::numeric_error);
}

}  // namespace
