#pragma once

#include "s2fpn/icomesh.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace s2fpn {

/// Multi-channel scalar field on the vertices of a level-`level` mesh, stored
/// batch-major then channel-major: values[(b * channels + c) * n + v].
class MeshSignal {
public:
    MeshSignal() = default;
    MeshSignal(int level, std::size_t batch, std::size_t channels, double fill = 0.0);

    int level() const { return level_; }
    std::size_t batch() const { return batch_; }
    std::size_t channels() const { return channels_; }
    std::size_t num_vertices() const { return n_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> channel(std::size_t b, std::size_t c)
    {
        return {values_.data() + (b * channels_ + c) * n_, n_};
    }
    std::span<const double> channel(std::size_t b, std::size_t c) const
    {
        return {values_.data() + (b * channels_ + c) * n_, n_};
    }
    /// All channels of sample b, contiguous (channels x n, row-major).
    std::span<double> sample(std::size_t b) { return {values_.data() + b * channels_ * n_, channels_ * n_}; }
    std::span<const double> sample(std::size_t b) const
    {
        return {values_.data() + b * channels_ * n_, channels_ * n_};
    }

    double& at(std::size_t b, std::size_t c, std::size_t v) { return values_[(b * channels_ + c) * n_ + v]; }
    double at(std::size_t b, std::size_t c, std::size_t v) const
    {
        return values_[(b * channels_ + c) * n_ + v];
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const MeshSignal& other) const
    {
        return level_ == other.level_ && batch_ == other.batch_ && channels_ == other.channels_;
    }
    bool all_finite() const;

    MeshSignal& operator+=(const MeshSignal& other);
    MeshSignal& operator*=(double s);

    friend bool operator==(const MeshSignal&, const MeshSignal&) = default;

private:
    int level_ = 0;
    std::size_t batch_ = 0;
    std::size_t channels_ = 0;
    std::size_t n_ = 0;
    std::vector<double> values_;
};

/// Throws ShapeError unless a and b have identical level/batch/channels.
void require_same_shape(const MeshSignal& a, const MeshSignal& b, const char* what);

/// Concatenates single-sample signals into one batch.
MeshSignal stack(std::span<const MeshSignal* const> samples);

double dot(const MeshSignal& a, const MeshSignal& b);

} // namespace s2fpn
