#pragma once

#include "s2fpn/icomesh.hpp"
#include "s2fpn/signal.hpp"
#include "s2fpn/sparse.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace s2fpn {

enum class DownMode { drop, average };
enum class UpMode { zeropad, bilinear };
enum class Interp { bilinear, nearest };

/// One configuration of the level-transition ablation.
struct ResampleSpec {
    DownMode down_mode = DownMode::average;
    UpMode up_mode = UpMode::bilinear;
    /// true: MeshConv block runs before the transition (at the finer level).
    bool swapped = true;

    friend bool operator==(const ResampleSpec&, const ResampleSpec&) = default;
};

std::string_view to_string(DownMode mode);
std::string_view to_string(UpMode mode);
DownMode parse_down_mode(std::string_view s);
UpMode parse_up_mode(std::string_view s);

/// Fine (level l) to coarse (level l-1). drop selects the shared vertex;
/// average takes the uniform mean over the shared vertex and its fine one-ring.
SparseOperator assemble_downsample(const IcoMesh& mesh_fine, DownMode mode);

/// Coarse (level l-1) to fine (level l). Shared vertices are copied; new
/// vertices are zero (zeropad) or the mean of their two parents (bilinear).
SparseOperator assemble_upsample(const IcoMesh& mesh_fine, UpMode mode);

/// Pre-decoded equirectangular image, row-major (row, column, channel). Row 0
/// is the northernmost row; columns start at longitude -pi.
struct EquirectImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> data;

    double at(std::size_t r, std::size_t c, std::size_t ch) const
    {
        return data[(r * width + c) * channels + ch];
    }
};

/// Samples the image at every vertex's (lat, lon). Pixel centres sit at
/// lat = pi/2 (1 - (2r+1)/H), lon = -pi + pi (2c+1)/W; longitude wraps, latitude
/// clamps. Returns a batch-1 signal with image.channels channels.
MeshSignal sample_equirectangular(const EquirectImage& image, const IcoMesh& mesh, Interp interp);

} // namespace s2fpn
