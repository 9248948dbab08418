#pragma once

// Independent reference computations shared by the test suites. Nothing here
// calls into the code under test beyond reading mesh connectivity.

#include "s2fpn/icomesh.hpp"
#include "s2fpn/nn.hpp"
#include "s2fpn/signal.hpp"
#include "s2fpn/sparse.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace oracle {

/// Plain BFS on the face list (edges rebuilt from faces, not from adjacency).
inline std::vector<int> bfs_ring(const s2fpn::IcoMesh& mesh, int source, int k)
{
    std::vector<std::set<int>> nbr(mesh.num_vertices());
    for (const auto& f : mesh.faces()) {
        for (int a = 0; a < 3; ++a) {
            nbr[f[a]].insert(f[(a + 1) % 3]);
            nbr[f[(a + 1) % 3]].insert(f[a]);
        }
    }
    std::vector<int> dist(mesh.num_vertices(), -1);
    std::deque<int> queue{source};
    dist[source] = 0;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int w : nbr[v]) {
            if (dist[w] < 0) {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    std::vector<int> out;
    for (int v = 0; v < static_cast<int>(dist.size()); ++v) {
        if (dist[v] >= 0 && dist[v] <= k) out.push_back(v);
    }
    return out;
}

/// 5 sqrt(3) a^2 with edge a of the icosahedron inscribed in the unit sphere.
inline double icosahedron_area()
{
    const double a = 4.0 / std::sqrt(10.0 + 2.0 * std::sqrt(5.0));
    return 5.0 * std::sqrt(3.0) * a * a;
}

inline Eigen::MatrixXd dense(const s2fpn::SparseOperator& op)
{
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(op.rows()),
                                              static_cast<Eigen::Index>(op.cols()));
    for (std::size_t r = 0; r < op.rows(); ++r) {
        auto cols = op.row_cols(r);
        auto vals = op.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols[k])) += vals[k];
        }
    }
    return d;
}

inline Eigen::VectorXd vec(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline double rel_l2(const Eigen::VectorXd& got, const Eigen::VectorXd& want)
{
    return (got - want).norm() / want.norm();
}

inline void randomize(s2fpn::MeshSignal& s, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    for (double& v : s.values()) v = g(rng);
}

inline void randomize(s2fpn::Parameter& p, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    for (double& v : p.mutable_value()) v = g(rng);
}

/// Central-difference derivative of f with respect to x[i].
inline double central_difference(const std::function<double()>& f, double& x, double h)
{
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * h);
}

/// max |a - b| / max(max |b|, floor).
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8)
{
    double num = 0.0, den = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

inline std::filesystem::path temp_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("s2fpn_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Closed-form parameter counts, written out independently of the layer code.
inline long meshconv_params(long cin, long cout) { return 4 * cin * cout + cout; }
inline long conv1x1_params(long cin, long cout) { return cin * cout + cout; }
inline long bn_params(long c) { return 2 * c; }
inline long resblock_params(long cin, long cmid, long cout, bool projection)
{
    long p = conv1x1_params(cin, cmid) + bn_params(cmid) + meshconv_params(cmid, cmid) + bn_params(cmid) +
             conv1x1_params(cmid, cout) + bn_params(cout);
    if (projection) p += conv1x1_params(cin, cout) + bn_params(cout);
    return p;
}

} // namespace oracle
