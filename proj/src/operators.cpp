#include "s2fpn/operators.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <string>

namespace s2fpn {

FusedStencil::FusedStencil(const SparseOperator& a, const SparseOperator& b, const SparseOperator& c)
    : cols_(a.cols())
{
    if (b.rows() != a.rows() || c.rows() != a.rows() || b.cols() != a.cols() || c.cols() != a.cols()) {
        throw ShapeError("fused stencil operands differ in shape");
    }
    if (a.cols() > UINT32_MAX || a.nnz() + b.nnz() + c.nnz() > UINT32_MAX) {
        throw CapacityError("fused stencil too large for 32-bit indices");
    }
    const SparseOperator* ops[3] = {&a, &b, &c};
    offsets_.reserve(a.rows() + 1);
    std::vector<std::uint64_t> row;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        row.clear();
        for (const SparseOperator* op : ops) {
            auto cs = op->row_cols(r);
            row.insert(row.end(), cs.begin(), cs.end());
        }
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        const std::size_t start = weights_.size();
        weights_.resize(start + 3 * row.size(), 0.0);
        for (int k = 0; k < 3; ++k) {
            auto cs = ops[k]->row_cols(r);
            auto vs = ops[k]->row_values(r);
            for (std::size_t e = 0; e < cs.size(); ++e) {
                const auto pos = std::lower_bound(row.begin(), row.end(), cs[e]) - row.begin();
                weights_[start + 3 * static_cast<std::size_t>(pos) + k] = vs[e];
            }
        }
        for (std::uint64_t col : row) indices_.push_back(static_cast<std::uint32_t>(col));
        offsets_.push_back(static_cast<std::uint32_t>(indices_.size()));
    }
}

void FusedStencil::apply(const double* x, std::size_t x_stride, std::size_t width, double* out,
                         std::size_t out_stride) const
{
    const double* w = weights_.data();
    for (std::size_t r = 0; r < rows(); ++r) {
        double* o0 = out + r * out_stride;
        double* o1 = o0 + width;
        double* o2 = o1 + width;
        std::fill(o0, o0 + 3 * width, 0.0);
        for (std::uint32_t e = offsets_[r]; e < offsets_[r + 1]; ++e) {
            const double* xj = x + static_cast<std::size_t>(indices_[e]) * x_stride;
            const double w0 = w[3 * e], w1 = w[3 * e + 1], w2 = w[3 * e + 2];
            for (std::size_t c = 0; c < width; ++c) {
                o0[c] += w0 * xj[c];
                o1[c] += w1 * xj[c];
                o2[c] += w2 * xj[c];
            }
        }
    }
}

void FusedStencil::apply_sum_add(const double* in, std::size_t stride, std::size_t width, double* y) const
{
    const double* w = weights_.data();
    for (std::size_t r = 0; r < rows(); ++r) {
        double* yr = y + r * width;
        for (std::uint32_t e = offsets_[r]; e < offsets_[r + 1]; ++e) {
            const double* i0 = in + static_cast<std::size_t>(indices_[e]) * stride;
            const double* i1 = i0 + width;
            const double* i2 = i1 + width;
            const double w0 = w[3 * e], w1 = w[3 * e + 1], w2 = w[3 * e + 2];
            for (std::size_t c = 0; c < width; ++c) yr[c] += w0 * i0[c] + w1 * i1[c] + w2 * i2[c];
        }
    }
}

PdoOperators make_pdo_operators(const IcoMesh& mesh)
{
    const MeshGeometry geo = compute_geometry(mesh);
    const TangentFrames frames = tangent_frames(mesh);
    GradientOperators grads = assemble_gradients(mesh, geo, frames);
    PdoOperators ops;
    ops.level = mesh.level();
    ops.gx = std::move(grads.gx);
    ops.gy = std::move(grads.gy);
    ops.lap = assemble_laplacian(mesh, geo);
    ops.gx_t = ops.gx.transpose();
    ops.gy_t = ops.gy.transpose();
    ops.lap_t = ops.lap.transpose();
    ops.fused = FusedStencil(ops.gx, ops.gy, ops.lap);
    ops.fused_t = FusedStencil(ops.gx_t, ops.gy_t, ops.lap_t);

    double total = 0.0;
    const auto edges = mesh.edges();
    for (const Edge& e : edges) total += (mesh.vertex(e[0]) - mesh.vertex(e[1])).norm();
    const double h = total / static_cast<double>(edges.size());
    ops.edge_length = h;
    const auto scaled = [](SparseOperator op, double s) {
        std::vector<double> v = op.values();
        for (double& x : v) x *= s;
        return SparseOperator(op.rows(), op.cols(), op.row_offsets(), op.col_indices(), std::move(v));
    };
    ops.unit = FusedStencil(scaled(ops.gx, h), scaled(ops.gy, h), scaled(ops.lap, h * h));
    ops.unit_t = FusedStencil(scaled(ops.gx_t, h), scaled(ops.gy_t, h), scaled(ops.lap_t, h * h));
    return ops;
}

TransitionOperator make_transition(SparseOperator op, int from_level, int to_level)
{
    TransitionOperator t;
    t.from_level = from_level;
    t.to_level = to_level;
    t.op_t = op.transpose();
    t.op = std::move(op);
    return t;
}

OperatorBank::OperatorBank(int max_level)
{
    meshes_ = build_hierarchy(max_level);
    for (const IcoMesh& m : meshes_) {
        geometry_.push_back(compute_geometry(m));
        pdo_.push_back(std::make_shared<const PdoOperators>(make_pdo_operators(m)));
    }
    down_.resize(meshes_.size());
    up_.resize(meshes_.size());
    for (int l = 1; l <= max_level; ++l) {
        const IcoMesh& fine = meshes_[l];
        for (DownMode mode : {DownMode::drop, DownMode::average}) {
            down_[l][static_cast<int>(mode)] = std::make_shared<const TransitionOperator>(
                make_transition(assemble_downsample(fine, mode), l, l - 1));
        }
        for (UpMode mode : {UpMode::zeropad, UpMode::bilinear}) {
            up_[l][static_cast<int>(mode)] = std::make_shared<const TransitionOperator>(
                make_transition(assemble_upsample(fine, mode), l - 1, l));
        }
    }
}

std::shared_ptr<const TransitionOperator> OperatorBank::down(int fine_level, DownMode mode) const
{
    if (fine_level < 1 || fine_level > max_level()) {
        throw InputError("no down-sampling operator from level " + std::to_string(fine_level));
    }
    return down_[fine_level][static_cast<int>(mode)];
}

std::shared_ptr<const TransitionOperator> OperatorBank::up(int fine_level, UpMode mode) const
{
    if (fine_level < 1 || fine_level > max_level()) {
        throw InputError("no up-sampling operator to level " + std::to_string(fine_level));
    }
    return up_[fine_level][static_cast<int>(mode)];
}

} // namespace s2fpn
