#include "merit/sparse.hpp"

#include "merit/error.hpp"
#include "merit/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace merit {

SparseMatrix::SparseMatrix(std::size_t n_rows, std::size_t n_cols,
                           std::vector<std::size_t> row_offsets,
                           std::vector<std::size_t> col_indices, std::vector<double> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
    if (row_offsets_.size() != n_rows_ + 1 || row_offsets_.front() != 0)
        throw ValidationError("csr: row_offsets must have n_rows + 1 entries starting at 0");
    if (row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size())
        throw ValidationError("csr: row_offsets[n_rows], col_indices and values disagree");
    for (std::size_t r = 0; r < n_rows_; ++r) {
        if (row_offsets_[r] > row_offsets_[r + 1])
            throw ValidationError("csr: row_offsets decreasing at row " + std::to_string(r));
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            if (col_indices_[k] >= n_cols_)
                throw ValidationError("csr: column index out of range in row " + std::to_string(r));
            if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1])
                throw ValidationError("csr: columns not strictly increasing in row " +
                                      std::to_string(r));
        }
    }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t n_rows, std::size_t n_cols,
                                         std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
        if (t.row >= n_rows || t.col >= n_cols)
            throw ValidationError("csr: triplet (" + std::to_string(t.row) + ", " +
                                  std::to_string(t.col) + ") outside " + std::to_string(n_rows) +
                                  "x" + std::to_string(n_cols));
    }
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> offsets(n_rows + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    cols.reserve(triplets.size());
    vals.reserve(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        const auto& t = triplets[i];
        if (i > 0 && t.row == triplets[i - 1].row && t.col == triplets[i - 1].col) continue;
        cols.push_back(t.col);
        vals.push_back(t.value);
        ++offsets[t.row + 1];
    }
    for (std::size_t r = 0; r < n_rows; ++r) offsets[r + 1] += offsets[r];
    return {n_rows, n_cols, std::move(offsets), std::move(cols), std::move(vals)};
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
    std::vector<std::size_t> offsets(n + 1);
    std::vector<std::size_t> cols(n);
    for (std::size_t i = 0; i <= n; ++i) offsets[i] = i;
    for (std::size_t i = 0; i < n; ++i) cols[i] = i;
    return {n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0)};
}

SparseMatrix SparseMatrix::zeros(std::size_t n_rows, std::size_t n_cols) {
    return {n_rows, n_cols, std::vector<std::size_t>(n_rows + 1, 0), {}, {}};
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& dense) {
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < dense.rows(); ++i)
        for (Eigen::Index j = 0; j < dense.cols(); ++j)
            if (dense(i, j) != 0.0)
                t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), dense(i, j)});
    return from_triplets(static_cast<std::size_t>(dense.rows()),
                         static_cast<std::size_t>(dense.cols()), std::move(t));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
    const auto cols = row_cols(r);
    const auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return 0.0;
    return values_[row_offsets_[r] + static_cast<std::size_t>(it - cols.begin())];
}

bool SparseMatrix::contains(std::size_t r, std::size_t c) const {
    const auto cols = row_cols(r);
    return std::binary_search(cols.begin(), cols.end(), c);
}

DenseMatrix SparseMatrix::to_dense() const {
    DenseMatrix d = DenseMatrix::Zero(static_cast<Eigen::Index>(n_rows_),
                                      static_cast<Eigen::Index>(n_cols_));
    for (std::size_t r = 0; r < n_rows_; ++r)
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
            d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_indices_[k])) = values_[k];
    return d;
}

SparseMatrix SparseMatrix::transpose() const {
    std::vector<std::size_t> offsets(n_cols_ + 1, 0);
    for (auto c : col_indices_) ++offsets[c + 1];
    for (std::size_t c = 0; c < n_cols_; ++c) offsets[c + 1] += offsets[c];
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    std::vector<std::size_t> cols(nnz());
    std::vector<double> vals(nnz());
    // Rows visited in ascending order, so transposed rows come out sorted.
    for (std::size_t r = 0; r < n_rows_; ++r) {
        for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            const std::size_t dst = cursor[col_indices_[k]]++;
            cols[dst] = r;
            vals[dst] = values_[k];
        }
    }
    return {n_cols_, n_rows_, std::move(offsets), std::move(cols), std::move(vals)};
}

bool SparseMatrix::is_symmetric() const {
    if (n_rows_ != n_cols_) return false;
    return transpose() == *this;
}

SparseMatrix symmetric_normalize(const SparseMatrix& adjacency, bool add_self_loops) {
    if (adjacency.rows() != adjacency.cols())
        throw DimensionError("symmetric_normalize: matrix is " + std::to_string(adjacency.rows()) +
                             "x" + std::to_string(adjacency.cols()) + ", expected square");
    const std::size_t n = adjacency.rows();

    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    cols.reserve(adjacency.nnz() + (add_self_loops ? n : 0));
    vals.reserve(cols.capacity());

    // Build A (+ I) row by row, merging the diagonal into sorted position.
    for (std::size_t r = 0; r < n; ++r) {
        const auto rc = adjacency.row_cols(r);
        const auto rv = adjacency.row_values(r);
        bool diag_done = !add_self_loops;
        for (std::size_t k = 0; k < rc.size(); ++k) {
            if (!diag_done && rc[k] >= r) {
                if (rc[k] == r) {
                    cols.push_back(r);
                    vals.push_back(rv[k] + 1.0);
                    diag_done = true;
                    continue;
                }
                cols.push_back(r);
                vals.push_back(1.0);
                diag_done = true;
            }
            cols.push_back(rc[k]);
            vals.push_back(rv[k]);
        }
        if (!diag_done) {
            cols.push_back(r);
            vals.push_back(1.0);
        }
        offsets[r + 1] = cols.size();
    }

    std::vector<double> inv_sqrt_deg(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        double deg = 0.0;
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) deg += vals[k];
        inv_sqrt_deg[r] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
    }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k)
            vals[k] = inv_sqrt_deg[r] * vals[k] * inv_sqrt_deg[cols[k]];

    return {n, n, std::move(offsets), std::move(cols), std::move(vals)};
}

DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& x) {
    if (s.cols() != static_cast<std::size_t>(x.rows()))
        throw DimensionError("spmm: " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                             " times " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(s.rows()), x.cols());
    const auto n_rows = static_cast<std::ptrdiff_t>(s.rows());
    const bool parallel = runtime::compute_mode() == runtime::ComputeMode::fast;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t r = 0; r < n_rows; ++r) {
        const auto cols = s.row_cols(static_cast<std::size_t>(r));
        const auto vals = s.row_values(static_cast<std::size_t>(r));
        auto dst = out.row(r);
        for (std::size_t k = 0; k < cols.size(); ++k)
            dst.noalias() += vals[k] * x.row(static_cast<Eigen::Index>(cols[k]));
    }
    return out;
}

DenseMatrix spmm_transposed(const SparseMatrix& s, const DenseMatrix& x) {
    if (s.rows() != static_cast<std::size_t>(x.rows()))
        throw DimensionError("spmm_transposed: operand rows disagree");
    DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(s.cols()), x.cols());
    for (std::size_t r = 0; r < s.rows(); ++r) {
        const auto cols = s.row_cols(r);
        const auto vals = s.row_values(r);
        const auto src = x.row(static_cast<Eigen::Index>(r));
        for (std::size_t k = 0; k < cols.size(); ++k)
            out.row(static_cast<Eigen::Index>(cols[k])).noalias() += vals[k] * src;
    }
    return out;
}

SparseMatrix principal_submatrix(const SparseMatrix& a, std::size_t start, std::size_t size) {
    if (a.rows() != a.cols()) throw DimensionError("principal_submatrix: matrix not square");
    if (start > a.rows() || size > a.rows() - start)
        throw DimensionError("principal_submatrix: window [" + std::to_string(start) + ", " +
                             std::to_string(start + size) + ") exceeds " +
                             std::to_string(a.rows()));
    std::vector<std::size_t> offsets(size + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    for (std::size_t r = 0; r < size; ++r) {
        const auto rc = a.row_cols(start + r);
        const auto rv = a.row_values(start + r);
        auto lo = std::lower_bound(rc.begin(), rc.end(), start);
        for (auto it = lo; it != rc.end() && *it < start + size; ++it) {
            cols.push_back(*it - start);
            vals.push_back(rv[static_cast<std::size_t>(it - rc.begin())]);
        }
        offsets[r + 1] = cols.size();
    }
    return {size, size, std::move(offsets), std::move(cols), std::move(vals)};
}

}  // namespace merit
