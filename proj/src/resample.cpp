#include "s2fpn/resample.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace s2fpn {

std::string_view to_string(DownMode mode) { return mode == DownMode::drop ? "drop" : "average"; }
std::string_view to_string(UpMode mode) { return mode == UpMode::zeropad ? "zeropad" : "bilinear"; }

DownMode parse_down_mode(std::string_view s)
{
    if (s == "drop") return DownMode::drop;
    if (s == "average") return DownMode::average;
    throw ConfigError("unknown down-sampling mode '" + std::string(s) + "'");
}

UpMode parse_up_mode(std::string_view s)
{
    if (s == "zeropad" || s == "zero-pad") return UpMode::zeropad;
    if (s == "bilinear") return UpMode::bilinear;
    throw ConfigError("unknown up-sampling mode '" + std::string(s) + "'");
}

SparseOperator assemble_downsample(const IcoMesh& mesh_fine, DownMode mode)
{
    if (mesh_fine.level() < 1) throw InputError("no coarser level below level 0");
    const std::size_t coarse_n = vertex_count(mesh_fine.level() - 1);
    const std::size_t fine_n = mesh_fine.num_vertices();
    std::vector<Triplet> trips;
    for (std::size_t i = 0; i < coarse_n; ++i) {
        if (mode == DownMode::drop) {
            trips.push_back({i, i, 1.0});
            continue;
        }
        const auto& ring = mesh_fine.neighbors(i);
        const double w = 1.0 / static_cast<double>(ring.size() + 1);
        trips.push_back({i, i, w});
        for (int j : ring) trips.push_back({i, static_cast<std::size_t>(j), w});
    }
    return SparseOperator::from_triplets(coarse_n, fine_n, std::move(trips));
}

SparseOperator assemble_upsample(const IcoMesh& mesh_fine, UpMode mode)
{
    if (mesh_fine.level() < 1) throw InputError("no coarser level below level 0");
    const std::size_t coarse_n = vertex_count(mesh_fine.level() - 1);
    const std::size_t fine_n = mesh_fine.num_vertices();
    const auto& parents = mesh_fine.parent_edges();
    if (parents.size() != fine_n) throw AssemblyError("mesh has no subdivision lineage");
    std::vector<Triplet> trips;
    for (std::size_t i = 0; i < coarse_n; ++i) trips.push_back({i, i, 1.0});
    for (std::size_t i = coarse_n; i < fine_n; ++i) {
        const Edge& e = parents[i];
        if (e[0] < 0 || e[1] < 0) {
            throw AssemblyError("vertex " + std::to_string(i) + " is missing its parent edge");
        }
        if (mode == UpMode::bilinear) {
            trips.push_back({i, static_cast<std::size_t>(e[0]), 0.5});
            trips.push_back({i, static_cast<std::size_t>(e[1]), 0.5});
        }
    }
    return SparseOperator::from_triplets(fine_n, coarse_n, std::move(trips));
}

MeshSignal sample_equirectangular(const EquirectImage& image, const IcoMesh& mesh, Interp interp)
{
    using std::numbers::pi;
    if (image.height == 0 || image.width == 0 || image.channels == 0 || image.data.empty()) {
        throw InputError("empty equirectangular image");
    }
    if (image.height < 2 || image.width < 2) throw InputError("image must be at least 2x2");
    if (image.data.size() != image.height * image.width * image.channels) {
        throw InputError("image payload does not match its dimensions");
    }
    const auto H = static_cast<double>(image.height);
    const auto W = static_cast<double>(image.width);
    const auto rows = static_cast<long>(image.height);
    const auto cols = static_cast<long>(image.width);
    auto wrap = [cols](long c) { return ((c % cols) + cols) % cols; };

    MeshSignal out(mesh.level(), 1, image.channels);
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
        const LatLon ll = to_latlon(mesh.vertex(v));
        // Continuous pixel coordinates; integers land on pixel centres.
        const double r = (pi / 2.0 - ll.lat) / pi * H - 0.5;
        const double c = (ll.lon + pi) / (2.0 * pi) * W - 0.5;
        if (interp == Interp::nearest) {
            // ceil(x - 0.5) rounds halves down: ties go to the smaller index.
            const long ri = std::clamp(static_cast<long>(std::ceil(r - 0.5)), 0L, rows - 1);
            const long ci = wrap(static_cast<long>(std::ceil(c - 0.5)));
            for (std::size_t ch = 0; ch < image.channels; ++ch) {
                out.at(0, ch, v) = image.at(ri, ci, ch);
            }
            continue;
        }
        const double rc = std::clamp(r, 0.0, H - 1.0);
        const long r0 = std::min(static_cast<long>(std::floor(rc)), rows - 2);
        const double fr = rc - static_cast<double>(r0);
        const long c0f = static_cast<long>(std::floor(c));
        const double fc = c - static_cast<double>(c0f);
        const long c0 = wrap(c0f);
        const long c1 = wrap(c0f + 1);
        for (std::size_t ch = 0; ch < image.channels; ++ch) {
            const double top = (1.0 - fc) * image.at(r0, c0, ch) + fc * image.at(r0, c1, ch);
            const double bot = (1.0 - fc) * image.at(r0 + 1, c0, ch) + fc * image.at(r0 + 1, c1, ch);
            out.at(0, ch, v) = (1.0 - fr) * top + fr * bot;
        }
    }
    return out;
}

} // namespace s2fpn
