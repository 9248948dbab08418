#include "s2fpn/sparse.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <string>

namespace s2fpn {

SparseOperator::SparseOperator(std::size_t rows, std::size_t cols,
                               std::vector<std::uint64_t> row_offsets,
                               std::vector<std::uint64_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values))
{
    validate();
}

SparseOperator SparseOperator::from_triplets(std::size_t rows, std::size_t cols,
                                             std::vector<Triplet> triplets)
{
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::uint64_t> offsets(rows + 1, 0);
    std::vector<std::uint64_t> cols_out;
    std::vector<double> vals;
    cols_out.reserve(triplets.size());
    vals.reserve(triplets.size());
    for (std::size_t k = 0; k < triplets.size(); ++k) {
        const Triplet& t = triplets[k];
        if (t.row >= rows || t.col >= cols) {
            throw AssemblyError("triplet (" + std::to_string(t.row) + ", " +
                                std::to_string(t.col) + ") outside operator shape");
        }
        if (k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
            vals.back() += t.value;
            continue;
        }
        cols_out.push_back(t.col);
        vals.push_back(t.value);
        ++offsets[t.row + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
    return SparseOperator(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
}

SparseOperator SparseOperator::identity(std::size_t n)
{
    std::vector<std::uint64_t> offsets(n + 1);
    std::vector<std::uint64_t> cols(n);
    for (std::size_t i = 0; i <= n; ++i) offsets[i] = i;
    for (std::size_t i = 0; i < n; ++i) cols[i] = i;
    return SparseOperator(n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0));
}

void SparseOperator::validate() const
{
    if (row_offsets_.size() != rows_ + 1) throw AssemblyError("row_offsets must have rows+1 entries");
    if (row_offsets_.front() != 0) throw AssemblyError("row_offsets must start at 0");
    if (row_offsets_.back() != values_.size() || col_indices_.size() != values_.size()) {
        throw AssemblyError("row_offsets, col_indices and values disagree on nnz");
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        if (row_offsets_[r + 1] < row_offsets_[r]) throw AssemblyError("row_offsets decreasing");
        for (std::uint64_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            if (col_indices_[k] >= cols_) throw AssemblyError("column index out of range");
            if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
                throw AssemblyError("column indices not strictly increasing in row " +
                                    std::to_string(r));
            }
        }
    }
}

void SparseOperator::multiply(std::span<const double> x, std::span<double> y) const
{
    if (x.size() != cols_ || y.size() != rows_) {
        throw ShapeError("operator is " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         ", got input " + std::to_string(x.size()) + " and output " +
                         std::to_string(y.size()));
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (std::uint64_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            acc += values_[k] * x[col_indices_[k]];
        }
        y[r] = acc;
    }
}

void SparseOperator::multiply_add(std::span<const double> x, std::span<double> y,
                                  double alpha) const
{
    if (x.size() != cols_ || y.size() != rows_) {
        throw ShapeError("operator is " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         ", got input " + std::to_string(x.size()) + " and output " +
                         std::to_string(y.size()));
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (std::uint64_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            acc += values_[k] * x[col_indices_[k]];
        }
        y[r] += alpha * acc;
    }
}

SparseOperator SparseOperator::transpose() const
{
    std::vector<std::uint64_t> offsets(cols_ + 1, 0);
    for (std::uint64_t c : col_indices_) ++offsets[c + 1];
    for (std::size_t c = 0; c < cols_; ++c) offsets[c + 1] += offsets[c];
    std::vector<std::uint64_t> cursor(offsets.begin(), offsets.end() - 1);
    std::vector<std::uint64_t> rows_out(nnz());
    std::vector<double> vals(nnz());
    // Rows visited in order, so each transposed row receives increasing columns.
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::uint64_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            const std::uint64_t dst = cursor[col_indices_[k]]++;
            rows_out[dst] = r;
            vals[dst] = values_[k];
        }
    }
    return SparseOperator(cols_, rows_, std::move(offsets), std::move(rows_out), std::move(vals));
}

Eigen::MatrixXd SparseOperator::to_dense() const
{
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_),
                                                  static_cast<Eigen::Index>(cols_));
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::uint64_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_indices_[k])) =
                values_[k];
        }
    }
    return dense;
}

} // namespace s2fpn
