#pragma once

#include "s2fpn/icomesh.hpp"
#include "s2fpn/signal.hpp"
#include "s2fpn/sparse.hpp"

#include <vector>

namespace s2fpn {

/// Per-vertex east (increasing longitude) and north (increasing latitude) unit
/// tangents. Both are zero at the two pole vertices, where they are undefined.
struct TangentFrames {
    std::vector<Vec3> east;
    std::vector<Vec3> north;
    std::vector<bool> pole_mask;

    std::size_t pole_count() const;
};

TangentFrames tangent_frames(const IcoMesh& mesh);

struct GradientOperators {
    SparseOperator gx; // east-west component
    SparseOperator gy; // north-south component
};

/// Gradient of the piecewise-linear interpolant: per-face hat-function
/// gradients averaged over the faces around each vertex with area weights,
/// then projected onto the vertex frame. Pole rows are empty.
GradientOperators assemble_gradients(const IcoMesh& mesh, const MeshGeometry& geometry,
                                     const TangentFrames& frames);

inline constexpr double kCotangentClamp = 1e6;

struct LaplacianStats {
    std::size_t clamped_cotangents = 0;
};

/// Cotangent Laplace-Beltrami operator normalised by 2 * cell area, with the
/// diagonal set so every row sums to zero.
SparseOperator assemble_laplacian(const IcoMesh& mesh, const MeshGeometry& geometry,
                                  LaplacianStats* stats = nullptr);

/// Symmetric cotangent weight matrix C with L = diag(1 / (2A)) * C.
SparseOperator assemble_cotangent_matrix(const IcoMesh& mesh, LaplacianStats* stats = nullptr);

/// Channel- and batch-wise sparse product. Output lives on `out_level`, which
/// must have op.rows() vertices; ShapeError on any mismatch.
MeshSignal apply(const SparseOperator& op, const MeshSignal& signal, int out_level);
/// Same-level convenience overload (op must be square).
MeshSignal apply(const SparseOperator& op, const MeshSignal& signal);

} // namespace s2fpn
