#include "s2fpn/icomesh.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

namespace s2fpn {

namespace {

Edge edge_key(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

} // namespace

std::size_t IcoMesh::num_edges() const
{
    std::size_t degree_sum = 0;
    for (const auto& ring : adjacency_) degree_sum += ring.size();
    return degree_sum / 2;
}

std::vector<Edge> IcoMesh::edges() const
{
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (std::size_t i = 0; i < adjacency_.size(); ++i) {
        for (int j : adjacency_[i]) {
            if (static_cast<int>(i) < j) out.push_back({static_cast<int>(i), j});
        }
    }
    return out;
}

void IcoMesh::finalize()
{
    const std::size_t n = vertices_.size();
    adjacency_.assign(n, {});
    vertex_faces_.assign(n, {});
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        const Face& tri = faces_[f];
        for (int k = 0; k < 3; ++k) {
            const int a = tri[k];
            const int b = tri[(k + 1) % 3];
            adjacency_[a].push_back(b);
            adjacency_[b].push_back(a);
            vertex_faces_[a].push_back(static_cast<int>(f));
        }
    }
    for (auto& ring : adjacency_) {
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    }
}

IcoMesh build_icosahedron()
{
    using std::numbers::pi;
    IcoMesh mesh;
    mesh.level_ = 0;
    const double ring_lat = std::atan(0.5);
    const double z = std::sin(ring_lat);
    const double r = std::cos(ring_lat);

    mesh.vertices_.emplace_back(0.0, 0.0, 1.0);
    for (int k = 0; k < 5; ++k) {
        const double lon = 2.0 * pi * k / 5.0;
        mesh.vertices_.emplace_back(r * std::cos(lon), r * std::sin(lon), z);
    }
    for (int k = 0; k < 5; ++k) {
        const double lon = 2.0 * pi * k / 5.0 + pi / 5.0;
        mesh.vertices_.emplace_back(r * std::cos(lon), r * std::sin(lon), -z);
    }
    mesh.vertices_.emplace_back(0.0, 0.0, -1.0);

    for (int k = 0; k < 5; ++k) {
        const int up = 1 + k;
        const int up_next = 1 + (k + 1) % 5;
        const int lo = 6 + k;
        const int lo_next = 6 + (k + 1) % 5;
        mesh.faces_.push_back({0, up, up_next});
        mesh.faces_.push_back({up, lo, up_next});
        mesh.faces_.push_back({up_next, lo, lo_next});
        mesh.faces_.push_back({11, lo_next, lo});
    }
    mesh.parent_edge_.assign(mesh.vertices_.size(), Edge{-1, -1});
    mesh.finalize();
    return mesh;
}

IcoMesh subdivide(const IcoMesh& mesh)
{
    const std::vector<Edge> edges = mesh.edges(); // sorted (min, max)
    const int old_count = static_cast<int>(mesh.num_vertices());

    IcoMesh fine;
    fine.level_ = mesh.level_ + 1;
    fine.vertices_ = mesh.vertices_;
    fine.vertices_.reserve(old_count + edges.size());
    fine.parent_edge_.assign(old_count, Edge{-1, -1});
    for (const Edge& e : edges) {
        fine.vertices_.push_back((mesh.vertices_[e[0]] + mesh.vertices_[e[1]]).normalized());
        fine.parent_edge_.push_back(e);
    }

    auto midpoint = [&](int a, int b) {
        const Edge key = edge_key(a, b);
        auto it = std::lower_bound(edges.begin(), edges.end(), key);
        return old_count + static_cast<int>(it - edges.begin());
    };

    fine.faces_.reserve(4 * mesh.faces_.size());
    for (const Face& f : mesh.faces_) {
        const int ab = midpoint(f[0], f[1]);
        const int bc = midpoint(f[1], f[2]);
        const int ca = midpoint(f[2], f[0]);
        fine.faces_.push_back({f[0], ab, ca});
        fine.faces_.push_back({ab, f[1], bc});
        fine.faces_.push_back({ca, bc, f[2]});
        fine.faces_.push_back({ab, bc, ca});
    }
    fine.finalize();
    return fine;
}

IcoMesh build_mesh(int level)
{
    if (level < 0 || level > kMaxMeshLevel) {
        throw CapacityError("mesh level " + std::to_string(level) + " outside [0, " +
                            std::to_string(kMaxMeshLevel) + "]");
    }
    IcoMesh mesh = build_icosahedron();
    for (int l = 0; l < level; ++l) mesh = subdivide(mesh);
    return mesh;
}

std::vector<IcoMesh> build_hierarchy(int max_level)
{
    if (max_level < 0 || max_level > kMaxMeshLevel) {
        throw CapacityError("mesh level " + std::to_string(max_level) + " outside [0, " +
                            std::to_string(kMaxMeshLevel) + "]");
    }
    std::vector<IcoMesh> meshes;
    meshes.reserve(max_level + 1);
    meshes.push_back(build_icosahedron());
    for (int l = 1; l <= max_level; ++l) meshes.push_back(subdivide(meshes.back()));
    return meshes;
}

double MeshGeometry::total_face_area() const
{
    double s = 0.0;
    for (double a : face_areas) s += a;
    return s;
}

double MeshGeometry::total_cell_area() const
{
    double s = 0.0;
    for (double a : cell_areas) s += a;
    return s;
}

LatLon to_latlon(const Vec3& p)
{
    using std::numbers::pi;
    const double lat = std::asin(std::clamp(p.z() / p.norm(), -1.0, 1.0));
    double lon = std::atan2(p.y(), p.x());
    if (lon >= pi) lon -= 2.0 * pi;
    return {lat, lon};
}

MeshGeometry compute_geometry(const IcoMesh& mesh)
{
    MeshGeometry geo;
    const auto& v = mesh.vertices();
    geo.face_areas.reserve(mesh.num_faces());
    for (const Face& f : mesh.faces()) {
        const Vec3 n = (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]);
        geo.face_areas.push_back(0.5 * n.norm());
    }
    geo.cell_areas.assign(mesh.num_vertices(), 0.0);
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        double s = 0.0;
        for (int f : mesh.vertex_faces()[i]) s += geo.face_areas[f];
        geo.cell_areas[i] = s / 3.0;
    }
    geo.latlon.reserve(mesh.num_vertices());
    for (const Vec3& p : v) geo.latlon.push_back(to_latlon(p));
    return geo;
}

std::vector<int> graph_distances(const IcoMesh& mesh, std::size_t source)
{
    if (source >= mesh.num_vertices()) {
        throw IndexError("vertex " + std::to_string(source) + " out of range");
    }
    std::vector<int> dist(mesh.num_vertices(), -1);
    std::deque<int> queue{static_cast<int>(source)};
    dist[source] = 0;
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int w : mesh.neighbors(u)) {
            if (dist[w] < 0) {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    return dist;
}

std::vector<int> ring_neighborhood(const IcoMesh& mesh, std::size_t vertex, int k)
{
    if (vertex >= mesh.num_vertices()) {
        throw IndexError("vertex " + std::to_string(vertex) + " out of range");
    }
    if (k < 1) throw InputError("ring size must be positive");
    // Frontier expansion; only touches the k-ring.
    std::vector<int> ring{static_cast<int>(vertex)};
    std::vector<int> frontier = ring;
    for (int step = 0; step < k; ++step) {
        std::vector<int> next;
        for (int u : frontier) {
            for (int w : mesh.neighbors(u)) {
                if (!std::binary_search(ring.begin(), ring.end(), w)) next.push_back(w);
            }
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        std::vector<int> merged;
        merged.reserve(ring.size() + next.size());
        std::merge(ring.begin(), ring.end(), next.begin(), next.end(), std::back_inserter(merged));
        ring = std::move(merged);
        frontier = std::move(next);
    }
    return ring;
}

void export_mesh(const IcoMesh& mesh, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    char line[128];
    for (const Vec3& p : mesh.vertices()) {
        std::snprintf(line, sizeof line, "v %.12f %.12f %.12f\n", p.x(), p.y(), p.z());
        out << line;
    }
    for (const Face& f : mesh.faces()) {
        std::snprintf(line, sizeof line, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
        out << line;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

ObjData import_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    ObjData data;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) throw IoError("malformed vertex record: " + line);
            data.vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            int a, b, c;
            if (!(ss >> a >> b >> c)) throw IoError("malformed face record: " + line);
            data.faces.push_back({a - 1, b - 1, c - 1});
        }
    }
    return data;
}

} // namespace s2fpn
