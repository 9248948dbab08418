#pragma once

#include "s2fpn/nn.hpp"
#include "s2fpn/operators.hpp"
#include "s2fpn/resample.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace s2fpn {

enum class HeadStage {
    /// bilinear/zero-pad upsample then MeshConv + BN + ReLU
    meshconv,
    /// upsample then bottleneck ResBlock (neck = input width)
    resblock,
};

struct ModelSpec {
    int min_level = 3;
    int max_level = 5;
    int in_channels = 4;
    int n_classes = 13;
    int base_channels = 32;
    int channel_cap = 512;
    int pyramid_channels = 256;
    int head_channels = 128;
    int width_divisor = 1;
    ResampleSpec resample;
    /// MeshConv + BN + ReLU after each top-down merge.
    bool post_merge_conv = true;
    HeadStage head_stage = HeadStage::resblock;
    StencilUnits stencil_units = StencilUnits::mesh;
    std::uint64_t init_seed = 0;

    /// Throws ConfigError.
    void validate() const;
    int encoder_channels(int level) const;
    int pyramid_width() const { return pyramid_channels / width_divisor; }
    int head_width() const { return head_channels / width_divisor; }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Spherical feature pyramid network: encoder, top-down pyramid with lateral
/// 1x1 connections, and a segmentation head that carries every pyramid level
/// up to max_level before summing.
class Model {
public:
    Model(const ModelSpec& spec, std::shared_ptr<const OperatorBank> bank);

    const ModelSpec& spec() const { return spec_; }
    const OperatorBank& bank() const { return *bank_; }

    /// x: (batch, in_channels) at max_level. Returns logits at max_level.
    MeshSignal forward(const MeshSignal& x, Mode mode);
    /// Accumulates parameter gradients; returns the input gradient.
    MeshSignal backward(const MeshSignal& grad_logits);

    /// Trainable parameters followed by BN running statistics.
    const std::vector<Parameter*>& parameters() const { return params_; }
    std::vector<Parameter*> trainable_parameters() const;
    Parameter* find(const std::string& name) const;

    std::size_t parameter_count() const { return count_parameters(params_); }
    void zero_grad() { zero_grads(params_); }

    /// Encoder widths from max_level down to min_level.
    std::vector<int> encoder_widths() const;

    /// Levels of the intermediate signals seen by the last forward pass
    /// (stem, encoder, pyramid, head), for consistency checks.
    const std::vector<std::pair<int, std::size_t>>& trace() const { return trace_; }

private:
    void note(const MeshSignal& s);

    ModelSpec spec_;
    std::shared_ptr<const OperatorBank> bank_;
    Rng rng_;

    std::unique_ptr<Sequential> stem_;
    std::vector<std::unique_ptr<DownBlock>> downs_;     // index k: level max-k -> max-k-1
    std::vector<std::unique_ptr<Conv1x1>> laterals_;    // index: level - min
    std::vector<std::unique_ptr<Transition>> td_up_;    // index: level - min (unused at min)
    std::vector<std::unique_ptr<Sequential>> merges_;   // index: level - min (unused at min)
    std::vector<std::unique_ptr<Sequential>> heads_;    // index: level - min
    std::unique_ptr<MeshConv> final_;

    std::vector<Parameter*> params_;
    std::vector<std::pair<int, std::size_t>> trace_;
};

} // namespace s2fpn
