#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace s2fpn {

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed-sparse-row linear map between vertex signals.
///
/// Column indices are strictly increasing within a row; explicit zeros produced
/// by assembly are kept so the sparsity pattern reflects the stencil.
class SparseOperator {
public:
    SparseOperator() = default;

    /// Takes ownership of raw CSR arrays; throws AssemblyError when they
    /// violate the CSR invariants.
    SparseOperator(std::size_t rows, std::size_t cols, std::vector<std::uint64_t> row_offsets,
                   std::vector<std::uint64_t> col_indices, std::vector<double> values);

    /// Sums duplicate (row, col) entries.
    static SparseOperator from_triplets(std::size_t rows, std::size_t cols,
                                        std::vector<Triplet> triplets);
    static SparseOperator identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }

    const std::vector<std::uint64_t>& row_offsets() const { return row_offsets_; }
    const std::vector<std::uint64_t>& col_indices() const { return col_indices_; }
    const std::vector<double>& values() const { return values_; }

    std::span<const std::uint64_t> row_cols(std::size_t r) const
    {
        return {col_indices_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
    }
    std::span<const double> row_values(std::size_t r) const
    {
        return {values_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
    }

    /// y = A x. Sizes must match exactly (ShapeError otherwise).
    void multiply(std::span<const double> x, std::span<double> y) const;
    /// y += alpha * A x.
    void multiply_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const;

    SparseOperator transpose() const;
    Eigen::MatrixXd to_dense() const;

    /// Throws AssemblyError if the CSR invariants do not hold.
    void validate() const;

    friend bool operator==(const SparseOperator&, const SparseOperator&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint64_t> row_offsets_{0};
    std::vector<std::uint64_t> col_indices_;
    std::vector<double> values_;
};

} // namespace s2fpn
