#include "s2fpn/signal.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace s2fpn {

MeshSignal::MeshSignal(int level, std::size_t batch, std::size_t channels, double fill)
    : level_(level), batch_(batch), channels_(channels)
{
    if (level < 0 || level > kMaxMeshLevel) {
        throw CapacityError("signal level " + std::to_string(level) + " unsupported");
    }
    n_ = vertex_count(level);
    values_.assign(batch * channels * n_, fill);
}

bool MeshSignal::all_finite() const
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

MeshSignal& MeshSignal::operator+=(const MeshSignal& other)
{
    require_same_shape(*this, other, "signal addition");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

MeshSignal& MeshSignal::operator*=(double s)
{
    for (double& v : values_) v *= s;
    return *this;
}

void require_same_shape(const MeshSignal& a, const MeshSignal& b, const char* what)
{
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape (level " + std::to_string(a.level()) +
                         ", batch " + std::to_string(a.batch()) + ", channels " +
                         std::to_string(a.channels()) + ") vs (level " +
                         std::to_string(b.level()) + ", batch " + std::to_string(b.batch()) +
                         ", channels " + std::to_string(b.channels()) + ")");
    }
}

MeshSignal stack(std::span<const MeshSignal* const> samples)
{
    if (samples.empty()) throw InputError("cannot stack an empty batch");
    const MeshSignal& first = *samples.front();
    std::size_t batch = 0;
    for (const MeshSignal* s : samples) {
        if (s->level() != first.level() || s->channels() != first.channels()) {
            throw ShapeError("stack: samples disagree on level or channel count");
        }
        batch += s->batch();
    }
    MeshSignal out(first.level(), batch, first.channels());
    auto dst = out.values().begin();
    for (const MeshSignal* s : samples) dst = std::copy(s->values().begin(), s->values().end(), dst);
    return out;
}

double dot(const MeshSignal& a, const MeshSignal& b)
{
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s;
}

} // namespace s2fpn
