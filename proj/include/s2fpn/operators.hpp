#pragma once

#include "s2fpn/icomesh.hpp"
#include "s2fpn/resample.hpp"
#include "s2fpn/sparse.hpp"
#include "s2fpn/sphops.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace s2fpn {

/// Three operators merged onto their union sparsity pattern so one sweep over
/// the indices produces all three products.
class FusedStencil {
public:
    FusedStencil() = default;
    FusedStencil(const SparseOperator& a, const SparseOperator& b, const SparseOperator& c);

    std::size_t rows() const { return offsets_.size() - 1; }
    std::size_t cols() const { return cols_; }

    /// Vertex-major blocks of `width` channels: x[j][c] = x[j * x_stride + c].
    /// For each row r writes out[r * out_stride + k * width + c] = (k-th
    /// operator applied to x)[r][c], k = 0, 1, 2.
    void apply(const double* x, std::size_t x_stride, std::size_t width, double* out,
               std::size_t out_stride) const;
    /// y[r][c] += sum_k (k-th operator applied to in_k)[r][c], where in_k[j][c]
    /// = in[j * stride + k * width + c]; y is rows() x width.
    void apply_sum_add(const double* in, std::size_t stride, std::size_t width, double* y) const;

private:
    std::size_t cols_ = 0;
    std::vector<std::uint32_t> offsets_{0};
    std::vector<std::uint32_t> indices_;
    std::vector<double> weights_; // 3 per stored entry
};

/// The fixed MeshConv stencil set of one level, with transposes for adjoints.
struct PdoOperators {
    int level = 0;
    /// Mean edge length h of the level's mesh.
    double edge_length = 0.0;
    SparseOperator gx, gy, lap;
    SparseOperator gx_t, gy_t, lap_t;
    FusedStencil fused;   // (gx, gy, lap)
    FusedStencil fused_t; // (gx_t, gy_t, lap_t)
    // Dimensionless copies (h gx, h gy, h^2 lap) and their transposes.
    FusedStencil unit;
    FusedStencil unit_t;
};

/// A level-transition map and its transpose.
struct TransitionOperator {
    int from_level = 0;
    int to_level = 0;
    SparseOperator op, op_t;
};

PdoOperators make_pdo_operators(const IcoMesh& mesh);
TransitionOperator make_transition(SparseOperator op, int from_level, int to_level);

/// Meshes and every operator for levels 0..max_level, assembled eagerly.
/// Immutable after construction and shared between layers.
class OperatorBank {
public:
    explicit OperatorBank(int max_level);

    int max_level() const { return static_cast<int>(meshes_.size()) - 1; }
    const IcoMesh& mesh(int level) const { return meshes_.at(level); }
    const MeshGeometry& geometry(int level) const { return geometry_.at(level); }
    std::shared_ptr<const PdoOperators> pdo(int level) const { return pdo_.at(level); }
    /// level fine_level -> fine_level - 1
    std::shared_ptr<const TransitionOperator> down(int fine_level, DownMode mode) const;
    /// level fine_level - 1 -> fine_level
    std::shared_ptr<const TransitionOperator> up(int fine_level, UpMode mode) const;

private:
    std::vector<IcoMesh> meshes_;
    std::vector<MeshGeometry> geometry_;
    std::vector<std::shared_ptr<const PdoOperators>> pdo_;
    std::vector<std::array<std::shared_ptr<const TransitionOperator>, 2>> down_;
    std::vector<std::array<std::shared_ptr<const TransitionOperator>, 2>> up_;
};

} // namespace s2fpn
