#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace s2fpn {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Highest subdivision level build_mesh accepts.
inline constexpr int kMaxMeshLevel = 7;

/// Number of vertices of the level-`level` icosahedral mesh (10 * 4^level + 2).
constexpr std::size_t vertex_count(int level)
{
    return 10 * (std::size_t{1} << (2 * level)) + 2;
}
constexpr std::size_t face_count(int level) { return 20 * (std::size_t{1} << (2 * level)); }
constexpr std::size_t edge_count(int level) { return 30 * (std::size_t{1} << (2 * level)); }

/// Icosahedral sphere mesh at a fixed subdivision level.
///
/// Vertices of level l-1 occupy the first vertex_count(l-1) slots of a level-l
/// mesh; every vertex created by the last subdivision records the two parent
/// vertices whose normalized midpoint it is. Instances are immutable.
class IcoMesh {
public:
    int level() const { return level_; }
    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_faces() const { return faces_.size(); }
    std::size_t num_edges() const;

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const Vec3& vertex(std::size_t i) const { return vertices_[i]; }
    const std::vector<Face>& faces() const { return faces_; }

    /// Parent pair (min, max) of each vertex; {-1, -1} for vertices inherited
    /// from the previous level (and for every vertex of a level-0 mesh).
    const std::vector<Edge>& parent_edges() const { return parent_edge_; }

    /// Sorted one-ring neighbours of vertex `i`.
    const std::vector<int>& neighbors(std::size_t i) const { return adjacency_[i]; }
    const std::vector<std::vector<int>>& adjacency() const { return adjacency_; }

    /// Faces incident to each vertex, in increasing face index.
    const std::vector<std::vector<int>>& vertex_faces() const { return vertex_faces_; }

    /// Sorted unique edges as (min, max) pairs.
    std::vector<Edge> edges() const;

    friend IcoMesh build_icosahedron();
    friend IcoMesh subdivide(const IcoMesh& mesh);

private:
    IcoMesh() = default;
    void finalize();

    int level_ = 0;
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<Edge> parent_edge_;
    std::vector<std::vector<int>> adjacency_;
    std::vector<std::vector<int>> vertex_faces_;
};

struct LatLon {
    double lat; // [-pi/2, pi/2]
    double lon; // [-pi, pi)
};

struct MeshGeometry {
    std::vector<double> face_areas;
    std::vector<double> cell_areas;
    std::vector<LatLon> latlon;

    double total_face_area() const;
    double total_cell_area() const;
};

/// Level-0 icosahedron inscribed in the unit sphere, with vertex 0 at the north
/// pole, vertex 11 at the south pole and two rings of five in between.
IcoMesh build_icosahedron();

/// One round of midpoint subdivision with re-projection onto the unit sphere.
IcoMesh subdivide(const IcoMesh& mesh);

/// Throws CapacityError when level is negative or above kMaxMeshLevel.
IcoMesh build_mesh(int level);

/// Meshes for levels 0..max_level, each built from the previous one.
std::vector<IcoMesh> build_hierarchy(int max_level);

MeshGeometry compute_geometry(const IcoMesh& mesh);

LatLon to_latlon(const Vec3& p);

/// All vertices within graph distance k of `vertex`, including itself, sorted.
std::vector<int> ring_neighborhood(const IcoMesh& mesh, std::size_t vertex, int k);

/// Graph (hop) distances from `source` to every vertex.
std::vector<int> graph_distances(const IcoMesh& mesh, std::size_t source);

/// Wavefront OBJ writer: `v` records with 12 fixed decimals then 1-based `f`
/// records. Throws IoError.
void export_mesh(const IcoMesh& mesh, const std::filesystem::path& path);

struct ObjData {
    std::vector<Vec3> vertices;
    std::vector<Face> faces; // 0-based
};

ObjData import_obj(const std::filesystem::path& path);

} // namespace s2fpn
