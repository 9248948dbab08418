#pragma once

#include "s2fpn/operators.hpp"
#include "s2fpn/resample.hpp"
#include "s2fpn/signal.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace s2fpn {

/// Named parameter array with its gradient accumulator.
///
/// Every mutable access bumps `version`, which lets a layer detect that the
/// activations it cached during forward are stale.
class Parameter {
public:
    Parameter(std::string name, std::vector<std::size_t> shape, bool trainable = true);

    const std::string& name() const { return name_; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return value_.size(); }
    bool trainable() const { return trainable_; }
    std::uint64_t version() const { return version_; }

    std::span<const double> value() const { return value_; }
    std::span<double> mutable_value()
    {
        ++version_;
        return value_;
    }
    std::span<double> grad() { return grad_; }
    std::span<const double> grad() const { return grad_; }
    void zero_grad();

private:
    std::string name_;
    std::vector<std::size_t> shape_;
    std::vector<double> value_;
    std::vector<double> grad_;
    std::uint64_t version_ = 0;
    bool trainable_;
};

enum class Mode { train, eval };

/// Records which parameter versions a forward pass saw.
class LayerTape {
public:
    void record(std::initializer_list<const Parameter*> params);
    void record(const std::vector<const Parameter*>& params);
    /// Throws StateError if nothing was recorded or a parameter changed since.
    void check(const std::string& layer) const;
    bool recorded() const { return recorded_; }
    void clear() { recorded_ = false; }

private:
    bool recorded_ = false;
    std::vector<std::pair<const Parameter*, std::uint64_t>> versions_;
};

using Rng = std::mt19937_64;

/// Differentiable layer. backward() returns the input gradient and accumulates
/// parameter gradients; it needs the cache of the most recent forward().
class Module {
public:
    virtual ~Module() = default;
    virtual MeshSignal forward(const MeshSignal& x, Mode mode) = 0;
    virtual MeshSignal backward(const MeshSignal& grad_out) = 0;
    /// Appends trainable parameters and non-trainable state (BN statistics).
    virtual void collect(std::vector<Parameter*>& out) { (void)out; }
    /// BN becomes the identity and ReLU passes values through.
    virtual void set_linearized(bool on) { (void)on; }
};

/// How MeshConv presents the differential operators to its coefficients.
enum class StencilUnits {
    /// {I, Gx, Gy, L} exactly as assembled.
    raw,
    /// {I, h Gx, h Gy, h^2 L} with h the mean edge length: every term is O(1)
    /// on the unit sphere at any level, which keeps optimisation well scaled.
    /// Same function class as raw; only the coefficient units change.
    mesh,
};

/// theta[co][ci][k] weights {I, grad_x, grad_y, Laplacian}[k] applied to input
/// channel ci; 4 * c_in * c_out + c_out parameters.
class MeshConv : public Module {
public:
    MeshConv(std::size_t c_in, std::size_t c_out, std::shared_ptr<const PdoOperators> ops,
             const std::string& name, Rng& rng, StencilUnits units = StencilUnits::raw);

    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;
    void collect(std::vector<Parameter*>& out) override;

    Parameter& theta() { return theta_; }
    Parameter& bias() { return bias_; }
    std::size_t c_in() const { return c_in_; }
    std::size_t c_out() const { return c_out_; }
    int level() const { return ops_->level; }
    StencilUnits units() const { return units_; }

private:
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    void features(const MeshSignal& x, std::size_t b, std::span<double> f) const;
    Matrix permuted_theta() const;

    std::size_t c_in_, c_out_;
    std::shared_ptr<const PdoOperators> ops_;
    StencilUnits units_;
    const FusedStencil* stencil_;
    const FusedStencil* stencil_t_;
    Parameter theta_, bias_;
    // Per sample, n x 4*c_in: [x | Gx x | Gy x | L x] from the last forward.
    std::vector<double> features_;
    std::size_t batch_ = 0;
    LayerTape tape_;
    std::string name_;
};

class Conv1x1 : public Module {
public:
    Conv1x1(std::size_t c_in, std::size_t c_out, const std::string& name, Rng& rng);

    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;
    void collect(std::vector<Parameter*>& out) override;

    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

private:
    std::size_t c_in_, c_out_;
    Parameter weight_, bias_;
    MeshSignal input_;
    LayerTape tape_;
    std::string name_;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalisation over batch and vertices jointly. Running variance
/// is updated with the unbiased batch variance.
class BatchNorm : public Module {
public:
    BatchNorm(std::size_t channels, const std::string& name);

    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;
    void collect(std::vector<Parameter*>& out) override;
    void set_linearized(bool on) override { bypass_ = on; }

    Parameter& scale() { return scale_; }
    Parameter& shift() { return shift_; }
    Parameter& running_mean() { return running_mean_; }
    Parameter& running_var() { return running_var_; }

private:
    std::size_t channels_;
    Parameter scale_, shift_, running_mean_, running_var_;
    bool bypass_ = false;
    Mode mode_ = Mode::train;
    MeshSignal normalized_;
    std::vector<double> inv_std_;
    LayerTape tape_;
    std::string name_;
};

class ReLU : public Module {
public:
    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;
    void set_linearized(bool on) override { identity_ = on; }

private:
    bool identity_ = false;
    MeshSignal output_;
    LayerTape tape_;
};

/// Fixed level transition (pooling or up-sampling); no parameters.
class Transition : public Module {
public:
    explicit Transition(std::shared_ptr<const TransitionOperator> op);

    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;

    int from_level() const { return op_->from_level; }
    int to_level() const { return op_->to_level; }

private:
    std::shared_ptr<const TransitionOperator> op_;
    std::size_t batch_ = 0;
    LayerTape tape_;
};

class Sequential : public Module {
public:
    Sequential() = default;
    Sequential& add(std::unique_ptr<Module> m);
    template <typename T, typename... Args>
    T& emplace(Args&&... args)
    {
        auto m = std::make_unique<T>(std::forward<Args>(args)...);
        T& ref = *m;
        layers_.push_back(std::move(m));
        return ref;
    }

    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;
    void collect(std::vector<Parameter*>& out) override;
    void set_linearized(bool on) override;

    std::size_t size() const { return layers_.size(); }
    Module& at(std::size_t i) { return *layers_.at(i); }

private:
    std::vector<std::unique_ptr<Module>> layers_;
};

/// MeshConv -> BatchNorm -> ReLU.
std::unique_ptr<Sequential> conv_bn_relu(std::size_t c_in, std::size_t c_out,
                                         std::shared_ptr<const PdoOperators> ops,
                                         const std::string& name, Rng& rng,
                                         StencilUnits units = StencilUnits::raw);

/// Bottleneck residual block at one level:
///   main: 1x1(c_in->c_mid) BN ReLU MeshConv(c_mid) BN ReLU 1x1(c_mid->c_out) BN
///   skip: identity when c_in == c_out and no projection requested, else 1x1 + BN
///   out:  ReLU(main + skip)
class ResBlock : public Module {
public:
    ResBlock(std::size_t c_in, std::size_t c_mid, std::size_t c_out,
             std::shared_ptr<const PdoOperators> ops, const std::string& name, Rng& rng,
             bool force_projection = false, StencilUnits units = StencilUnits::raw);

    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;
    void collect(std::vector<Parameter*>& out) override;
    void set_linearized(bool on) override;

    Sequential& main_path() { return main_; }
    bool has_projection() const { return static_cast<bool>(skip_); }
    int level() const { return level_; }

private:
    int level_;
    Sequential main_;
    std::unique_ptr<Sequential> skip_;
    ReLU out_relu_;
};

/// Encoder transition from level l to l-1. swapped: ResBlock at l then pool;
/// otherwise pool then ResBlock at l-1.
class DownBlock : public Module {
public:
    DownBlock(std::size_t c_in, std::size_t c_mid, std::size_t c_out, const ResampleSpec& spec,
              const OperatorBank& bank, int fine_level, const std::string& name, Rng& rng,
              StencilUnits units = StencilUnits::raw);

    MeshSignal forward(const MeshSignal& x, Mode mode) override;
    MeshSignal backward(const MeshSignal& grad_out) override;
    void collect(std::vector<Parameter*>& out) override;
    void set_linearized(bool on) override;

    ResBlock& block() { return *block_; }

private:
    bool swapped_;
    int fine_level_;
    std::unique_ptr<ResBlock> block_;
    Transition pool_;
};

/// Input vertices (any channel) that influence output vertex `vertex` (any
/// channel) of sample 0, found by back-propagating an impulse through the
/// linearized module. Sorted.
std::vector<int> impulse_support(Module& module, const MeshSignal& probe, std::size_t vertex);

/// Receptive-field ring: largest graph distance on `input_mesh` from `vertex`
/// to any vertex of its impulse support (indices shared by the prefix
/// property); -1 for an empty support.
int support_ring(Module& module, const MeshSignal& probe, const IcoMesh& input_mesh,
                 std::size_t vertex);

/// Number of trainable scalars.
std::size_t count_parameters(const std::vector<Parameter*>& params);
void zero_grads(const std::vector<Parameter*>& params);

} // namespace s2fpn
