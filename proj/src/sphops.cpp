#include "s2fpn/sphops.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace s2fpn {

std::size_t TangentFrames::pole_count() const
{
    return static_cast<std::size_t>(std::count(pole_mask.begin(), pole_mask.end(), true));
}

TangentFrames tangent_frames(const IcoMesh& mesh)
{
    TangentFrames frames;
    const std::size_t n = mesh.num_vertices();
    frames.east.reserve(n);
    frames.north.reserve(n);
    frames.pole_mask.reserve(n);
    for (const Vec3& p : mesh.vertices()) {
        if (p.x() == 0.0 && p.y() == 0.0) {
            frames.east.push_back(Vec3::Zero());
            frames.north.push_back(Vec3::Zero());
            frames.pole_mask.push_back(true);
            continue;
        }
        const LatLon ll = to_latlon(p);
        const double sl = std::sin(ll.lat), cl = std::cos(ll.lat);
        const double so = std::sin(ll.lon), co = std::cos(ll.lon);
        frames.east.emplace_back(-so, co, 0.0);
        frames.north.emplace_back(-sl * co, -sl * so, cl);
        frames.pole_mask.push_back(false);
    }
    return frames;
}

GradientOperators assemble_gradients(const IcoMesh& mesh, const MeshGeometry& geometry,
                                     const TangentFrames& frames)
{
    const auto& v = mesh.vertices();
    const std::size_t n = mesh.num_vertices();

    // Hat-function gradients, constant per face: grad phi_k = N x e_k / (2A),
    // e_k the edge opposite corner k traversed counter-clockwise.
    std::vector<std::array<Vec3, 3>> hat_grad(mesh.num_faces());
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Face& tri = mesh.faces()[f];
        const double area = geometry.face_areas[f];
        if (!(area > 0.0)) {
            throw AssemblyError("degenerate face " + std::to_string(f) + " in gradient assembly");
        }
        const Vec3 normal = (v[tri[1]] - v[tri[0]]).cross(v[tri[2]] - v[tri[0]]).normalized();
        for (int k = 0; k < 3; ++k) {
            const Vec3 opposite = v[tri[(k + 2) % 3]] - v[tri[(k + 1) % 3]];
            hat_grad[f][k] = normal.cross(opposite) / (2.0 * area);
        }
    }

    std::vector<Triplet> tx, ty;
    tx.reserve(7 * n);
    ty.reserve(7 * n);
    for (std::size_t i = 0; i < n; ++i) {
        if (frames.pole_mask[i]) continue;
        double weight_sum = 0.0;
        for (int f : mesh.vertex_faces()[i]) weight_sum += geometry.face_areas[f];
        for (int f : mesh.vertex_faces()[i]) {
            const double w = geometry.face_areas[f] / weight_sum;
            const Face& tri = mesh.faces()[f];
            for (int k = 0; k < 3; ++k) {
                tx.push_back({i, static_cast<std::size_t>(tri[k]), w * hat_grad[f][k].dot(frames.east[i])});
                ty.push_back({i, static_cast<std::size_t>(tri[k]), w * hat_grad[f][k].dot(frames.north[i])});
            }
        }
    }
    return {SparseOperator::from_triplets(n, n, std::move(tx)),
            SparseOperator::from_triplets(n, n, std::move(ty))};
}

SparseOperator assemble_cotangent_matrix(const IcoMesh& mesh, LaplacianStats* stats)
{
    const auto& v = mesh.vertices();
    const std::size_t n = mesh.num_vertices();
    std::map<Edge, std::pair<double, int>> edge_weight; // (cot sum, incident faces)
    std::size_t clamped = 0;
    for (const Face& tri : mesh.faces()) {
        for (int k = 0; k < 3; ++k) {
            const int i = tri[(k + 1) % 3];
            const int j = tri[(k + 2) % 3];
            const Vec3 a = v[i] - v[tri[k]];
            const Vec3 b = v[j] - v[tri[k]];
            double cot = a.dot(b) / a.cross(b).norm();
            if (!std::isfinite(cot) || std::abs(cot) > kCotangentClamp) {
                ++clamped;
                cot = std::isnan(cot) ? 0.0 : std::clamp(cot, -kCotangentClamp, kCotangentClamp);
            }
            auto& entry = edge_weight[i < j ? Edge{i, j} : Edge{j, i}];
            entry.first += cot;
            entry.second += 1;
        }
    }
    std::vector<Triplet> trips;
    trips.reserve(2 * edge_weight.size() + n);
    std::vector<double> diag(n, 0.0);
    for (const auto& [e, entry] : edge_weight) {
        if (entry.second != 2) {
            throw AssemblyError("non-manifold edge (" + std::to_string(e[0]) + ", " +
                                std::to_string(e[1]) + ") with " + std::to_string(entry.second) +
                                " incident faces");
        }
        const auto a = static_cast<std::size_t>(e[0]);
        const auto b = static_cast<std::size_t>(e[1]);
        trips.push_back({a, b, entry.first});
        trips.push_back({b, a, entry.first});
        diag[a] -= entry.first;
        diag[b] -= entry.first;
    }
    for (std::size_t i = 0; i < n; ++i) trips.push_back({i, i, diag[i]});
    if (stats) stats->clamped_cotangents = clamped;
    return SparseOperator::from_triplets(n, n, std::move(trips));
}

SparseOperator assemble_laplacian(const IcoMesh& mesh, const MeshGeometry& geometry,
                                  LaplacianStats* stats)
{
    const SparseOperator cot = assemble_cotangent_matrix(mesh, stats);
    std::vector<double> values = cot.values();
    for (std::size_t r = 0; r < cot.rows(); ++r) {
        const double scale = 1.0 / (2.0 * geometry.cell_areas[r]);
        double off_diagonal = 0.0;
        std::uint64_t diag_slot = cot.row_offsets()[r];
        for (std::uint64_t k = cot.row_offsets()[r]; k < cot.row_offsets()[r + 1]; ++k) {
            if (cot.col_indices()[k] == r) {
                diag_slot = k;
                continue;
            }
            values[k] *= scale;
            off_diagonal += values[k];
        }
        values[diag_slot] = -off_diagonal;
    }
    return SparseOperator(cot.rows(), cot.cols(), cot.row_offsets(), cot.col_indices(),
                          std::move(values));
}

MeshSignal apply(const SparseOperator& op, const MeshSignal& signal, int out_level)
{
    if (op.cols() != signal.num_vertices()) {
        throw ShapeError("operator expects " + std::to_string(op.cols()) + " vertices, signal has " +
                         std::to_string(signal.num_vertices()));
    }
    MeshSignal out(out_level, signal.batch(), signal.channels());
    if (op.rows() != out.num_vertices()) {
        throw ShapeError("operator produces " + std::to_string(op.rows()) +
                         " vertices, level " + std::to_string(out_level) + " has " +
                         std::to_string(out.num_vertices()));
    }
    for (std::size_t b = 0; b < signal.batch(); ++b) {
        for (std::size_t c = 0; c < signal.channels(); ++c) {
            op.multiply(signal.channel(b, c), out.channel(b, c));
        }
    }
    return out;
}

MeshSignal apply(const SparseOperator& op, const MeshSignal& signal)
{
    return apply(op, signal, signal.level());
}

} // namespace s2fpn
