#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace merit {

// Row-major dense matrix used for features, diffusion matrices and latents.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row matrix.
///
/// Invariants (checked on construction): row_offsets has n_rows + 1
/// non-decreasing entries ending at nnz; column indices are strictly
/// increasing within each row and bounded by n_cols.
class SparseMatrix {
public:
    SparseMatrix() : row_offsets_(1, 0) {}
    SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<std::size_t> row_offsets,
                 std::vector<std::size_t> col_indices, std::vector<double> values);

    // Entries are sorted; duplicates keep the first occurrence's value.
    static SparseMatrix from_triplets(std::size_t n_rows, std::size_t n_cols,
                                      std::vector<Triplet> triplets);
    static SparseMatrix identity(std::size_t n);
    static SparseMatrix zeros(std::size_t n_rows, std::size_t n_cols);
    // Nonzero entries of a dense matrix (exact zeros dropped).
    static SparseMatrix from_dense(const DenseMatrix& dense);

    std::size_t rows() const noexcept { return n_rows_; }
    std::size_t cols() const noexcept { return n_cols_; }
    std::size_t nnz() const noexcept { return col_indices_.size(); }

    const std::vector<std::size_t>& row_offsets() const noexcept { return row_offsets_; }
    const std::vector<std::size_t>& col_indices() const noexcept { return col_indices_; }
    const std::vector<double>& values() const noexcept { return values_; }

    std::span<const std::size_t> row_cols(std::size_t r) const {
        return {col_indices_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
    }
    std::span<const double> row_values(std::size_t r) const {
        return {values_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
    }

    // Stored value at (r, c), or 0 when absent. Binary search within the row.
    double at(std::size_t r, std::size_t c) const;
    bool contains(std::size_t r, std::size_t c) const;

    DenseMatrix to_dense() const;
    SparseMatrix transpose() const;
    bool is_symmetric() const;

    friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    std::vector<std::size_t> row_offsets_;
    std::vector<std::size_t> col_indices_;
    std::vector<double> values_;
};

// D^{-1/2} (A [+ I]) D^{-1/2}. Zero-degree rows stay zero.
SparseMatrix symmetric_normalize(const SparseMatrix& adjacency, bool add_self_loops);

// S * X. Each output entry accumulates in ascending column order; in fast
// mode rows may be distributed across threads (per-row order unchanged).
DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& x);

// Sᵀ * X without materialising the transpose.
DenseMatrix spmm_transposed(const SparseMatrix& s, const DenseMatrix& x);

// Rows and columns [start, start + size), re-based to zero.
SparseMatrix principal_submatrix(const SparseMatrix& a, std::size_t start, std::size_t size);

}  // namespace merit
