#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "relclust/errors.hpp"

namespace relclust {

/// Dense row-major matrix of doubles. Plain value type: tensors on a
/// computation record wrap one of these, everything else (k-means, metrics,
/// solvers) works on it directly.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw shape_error("Matrix: negative dimension");
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const int r = static_cast<int>(rows.size());
        const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
        Matrix m(r, c);
        int i = 0;
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != c)
                throw shape_error("Matrix::from_rows: ragged rows");
            int j = 0;
            for (double x : row) m(i, j++) = x;
            ++i;
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double& operator()(int i, int j) { return v_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return v_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    double* row(int i) { return v_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return v_.data() + static_cast<std::size_t>(i) * cols_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> v_;
};

inline bool all_finite(const Matrix& m) {
    const double* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

inline void check_finite(const Matrix& m, const char* what) {
    if (!all_finite(m)) throw numeric_error(std::string("non-finite values in ") + what);
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b))
        throw shape_error(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
}

// ---------------------------------------------------------------------------
// Dense kernels
// ---------------------------------------------------------------------------

/// out = a * b. ikj loop order, rows parallelized; each output row is owned
/// by one thread, so results are bit-identical for any thread count.
inline void gemm_into(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    out.fill(0.0);
#pragma omp parallel for schedule(static) if (m > 16)
    for (int i = 0; i < m; ++i) {
        double* oi = out.row(i);
        const double* ai = a.row(i);
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) oi[j] += aip * bp[j];
        }
    }
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw shape_error("multiply: inner dimensions differ, " + a.shape_str() + " x " +
                          b.shape_str());
    Matrix out(a.rows(), b.cols());
    gemm_into(a, b, out);
    return out;
}

inline Matrix transposed(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// Compressed sparse row matrix
// ---------------------------------------------------------------------------

struct Csr {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_ptr;   // rows + 1 entries
    std::vector<int> col_idx;   // nnz entries, sorted within each row
    std::vector<double> vals;   // nnz entries

    int nnz() const { return static_cast<int>(col_idx.size()); }

    /// Structural sanity: monotone row pointers, in-range sorted columns.
    void validate() const {
        if (static_cast<int>(row_ptr.size()) != rows + 1)
            throw structural_error("Csr: row_ptr size mismatch");
        if (row_ptr.front() != 0 || row_ptr.back() != nnz())
            throw structural_error("Csr: row_ptr endpoints invalid");
        if (vals.size() != col_idx.size())
            throw structural_error("Csr: vals/col_idx size mismatch");
        for (int i = 0; i < rows; ++i) {
            if (row_ptr[i] > row_ptr[i + 1]) throw structural_error("Csr: row_ptr not monotone");
            for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
                if (col_idx[p] < 0 || col_idx[p] >= cols)
                    throw structural_error("Csr: column index " + std::to_string(col_idx[p]) +
                                           " out of range [0," + std::to_string(cols) + ")");
                if (p > row_ptr[i] && col_idx[p - 1] >= col_idx[p])
                    throw structural_error("Csr: columns not strictly increasing in row " +
                                           std::to_string(i));
            }
        }
    }

    /// Builds from triplets; duplicates are rejected.
    static Csr from_triplets(int rows, int cols,
                             std::vector<std::pair<std::pair<int, int>, double>> trip) {
        for (const auto& t : trip) {
            const int r = t.first.first, c = t.first.second;
            if (r < 0 || r >= rows || c < 0 || c >= cols)
                throw structural_error("Csr::from_triplets: entry out of range");
        }
        std::sort(trip.begin(), trip.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = 1; i < trip.size(); ++i)
            if (trip[i].first == trip[i - 1].first)
                throw structural_error("Csr::from_triplets: duplicate entry");
        Csr s;
        s.rows = rows;
        s.cols = cols;
        s.row_ptr.assign(rows + 1, 0);
        s.col_idx.reserve(trip.size());
        s.vals.reserve(trip.size());
        for (const auto& t : trip) {
            s.row_ptr[t.first.first + 1]++;
            s.col_idx.push_back(t.first.second);
            s.vals.push_back(t.second);
        }
        for (int i = 0; i < rows; ++i) s.row_ptr[i + 1] += s.row_ptr[i];
        return s;
    }

    static Csr identity(int n) {
        Csr s;
        s.rows = s.cols = n;
        s.row_ptr.resize(n + 1);
        s.col_idx.resize(n);
        s.vals.assign(n, 1.0);
        for (int i = 0; i <= n; ++i) s.row_ptr[i] = std::min(i, n);
        for (int i = 0; i < n; ++i) s.col_idx[i] = i;
        return s;
    }

    Matrix densify() const {
        Matrix d(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) d(i, col_idx[p]) = vals[p];
        return d;
    }

    bool has_entry(int r, int c) const {
        for (int p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
            if (col_idx[p] == c) return true;
        return false;
    }
};

inline void spmm_into(const Csr& s, const Matrix& x, Matrix& out) {
    const int d = x.cols();
    out.fill(0.0);
#pragma omp parallel for schedule(static) if (s.rows > 64)
    for (int i = 0; i < s.rows; ++i) {
        double* oi = out.row(i);
        for (int p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
            const double v = s.vals[p];
            const double* xr = x.row(s.col_idx[p]);
            for (int j = 0; j < d; ++j) oi[j] += v * xr[j];
        }
    }
}

inline Matrix sparse_multiply(const Csr& s, const Matrix& x) {
    if (s.cols != x.rows())
        throw shape_error("sparse_multiply: inner dimensions differ, " + std::to_string(s.rows) +
                          "x" + std::to_string(s.cols) + " x " + x.shape_str());
    s.validate();
    Matrix out(s.rows, x.cols());
    spmm_into(s, x, out);
    return out;
}

inline Csr csr_transpose(const Csr& s) {
    Csr t;
    t.rows = s.cols;
    t.cols = s.rows;
    t.row_ptr.assign(t.rows + 1, 0);
    for (int c : s.col_idx) t.row_ptr[c + 1]++;
    for (int i = 0; i < t.rows; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
    t.col_idx.resize(s.nnz());
    t.vals.resize(s.nnz());
    std::vector<int> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (int i = 0; i < s.rows; ++i)
        for (int p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
            const int c = s.col_idx[p];
            t.col_idx[cursor[c]] = i;
            t.vals[cursor[c]] = s.vals[p];
            cursor[c]++;
        }
    return t;
}

// ---------------------------------------------------------------------------
// Dense linear solve
// ---------------------------------------------------------------------------

/// Solves A X = B for X by LU factorization with partial pivoting.
inline Matrix lup_solve(Matrix a, Matrix b) {
    if (a.rows() != a.cols()) throw shape_error("lup_solve: matrix not square");
    if (a.rows() != b.rows())
        throw shape_error("lup_solve: rhs rows " + b.shape_str() + " do not match " +
                          a.shape_str());
    const int n = a.rows();
    const int m = b.cols();
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;

    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(a(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double cand = std::abs(a(i, k));
            if (cand > best) {
                best = cand;
                piv = i;
            }
        }
        if (best == 0.0) throw numeric_error("lup_solve: singular matrix");
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(perm[k], perm[piv]);
        }
        const double akk = a(k, k);
#pragma omp parallel for schedule(static) if (n - k > 128)
        for (int i = k + 1; i < n; ++i) {
            const double f = a(i, k) / akk;
            a(i, k) = f;
            if (f == 0.0) continue;
            for (int j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }

    // Apply permutation to rhs, then forward/back substitution.
    Matrix x(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) x(i, j) = b(perm[i], j);
    for (int k = 0; k < n; ++k)
        for (int i = k + 1; i < n; ++i) {
            const double f = a(i, k);
            if (f == 0.0) continue;
            for (int j = 0; j < m; ++j) x(i, j) -= f * x(k, j);
        }
    for (int k = n - 1; k >= 0; --k) {
        const double d = a(k, k);
        for (int j = 0; j < m; ++j) x(k, j) /= d;
        for (int i = 0; i < k; ++i) {
            const double f = a(i, k);
            if (f == 0.0) continue;
            for (int j = 0; j < m; ++j) x(i, j) -= f * x(k, j);
        }
    }
    check_finite(x, "lup_solve");
    return x;
}

}  // namespace relclust
