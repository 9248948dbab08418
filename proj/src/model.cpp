#include "s2fpn/model.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <string>

namespace s2fpn {

void ModelSpec::validate() const
{
    auto fail = [](const std::string& msg) { throw ConfigError("model spec: " + msg); };
    if (min_level < 0 || min_level > 3) fail("min_level must be in [0, 3]");
    if (max_level <= min_level || max_level > kMaxMeshLevel) {
        fail("max_level must exceed min_level and be at most " + std::to_string(kMaxMeshLevel));
    }
    if (in_channels < 1) fail("in_channels must be positive");
    if (n_classes < 2) fail("n_classes must be at least 2");
    if (base_channels < 1 || channel_cap < 1) fail("channel widths must be positive");
    if (width_divisor < 1) fail("width_divisor must be positive");
    if (pyramid_width() < 1 || head_width() < 1) fail("pyramid/head widths vanish after division");
    for (int l = min_level; l <= max_level; ++l) {
        if (encoder_channels(l) < 1) fail("encoder width vanishes at level " + std::to_string(l));
    }
}

int ModelSpec::encoder_channels(int level) const
{
    const int doublings = max_level - level;
    long width = base_channels;
    for (int i = 0; i < doublings && width < channel_cap; ++i) width *= 2;
    return static_cast<int>(std::min<long>(width, channel_cap)) / width_divisor;
}

Model::Model(const ModelSpec& spec, std::shared_ptr<const OperatorBank> bank)
    : spec_(spec), bank_(std::move(bank)), rng_(spec.init_seed)
{
    spec_.validate();
    if (!bank_ || bank_->max_level() < spec_.max_level) {
        throw ConfigError("operator bank does not cover level " + std::to_string(spec_.max_level));
    }
    const int lo = spec_.min_level;
    const int hi = spec_.max_level;
    const auto width = [&](int level) { return static_cast<std::size_t>(spec_.encoder_channels(level)); };
    const auto pw = static_cast<std::size_t>(spec_.pyramid_width());
    const auto hw = static_cast<std::size_t>(spec_.head_width());
    const UpMode up_mode = spec_.resample.up_mode;
    const StencilUnits units = spec_.stencil_units;

    stem_ = conv_bn_relu(static_cast<std::size_t>(spec_.in_channels), width(hi), bank_->pdo(hi),
                         "encoder.stem", rng_, units);
    for (int l = hi; l > lo; --l) {
        // Bottleneck neck equals the block's input width.
        downs_.push_back(std::make_unique<DownBlock>(width(l), width(l), width(l - 1), spec_.resample,
                                                     *bank_, l,
                                                     "encoder.down" + std::to_string(l), rng_, units));
    }
    for (int l = lo; l <= hi; ++l) {
        laterals_.push_back(
            std::make_unique<Conv1x1>(width(l), pw, "pyramid.lateral" + std::to_string(l), rng_));
    }
    td_up_.resize(hi - lo + 1);
    merges_.resize(hi - lo + 1);
    for (int l = lo + 1; l <= hi; ++l) {
        td_up_[l - lo] = std::make_unique<Transition>(bank_->up(l, up_mode));
        if (spec_.post_merge_conv) {
            merges_[l - lo] =
                conv_bn_relu(pw, pw, bank_->pdo(l), "pyramid.merge" + std::to_string(l), rng_, units);
        }
    }
    for (int l = lo; l <= hi; ++l) {
        auto head = std::make_unique<Sequential>();
        const std::string prefix = "head.level" + std::to_string(l);
        if (l == hi) {
            head->add(conv_bn_relu(pw, hw, bank_->pdo(hi), prefix + ".conv", rng_, units));
        }
        std::size_t c = pw;
        for (int t = l + 1; t <= hi; ++t) {
            head->emplace<Transition>(bank_->up(t, up_mode));
            const std::string name = prefix + ".stage" + std::to_string(t);
            if (spec_.head_stage == HeadStage::resblock) {
                head->emplace<ResBlock>(c, c, hw, bank_->pdo(t), name, rng_, false, units);
            } else {
                head->add(conv_bn_relu(c, hw, bank_->pdo(t), name, rng_, units));
            }
            c = hw;
        }
        heads_.push_back(std::move(head));
    }
    final_ = std::make_unique<MeshConv>(hw, static_cast<std::size_t>(spec_.n_classes), bank_->pdo(hi),
                                        "head.predict", rng_, units);

    stem_->collect(params_);
    for (auto& d : downs_) d->collect(params_);
    for (auto& lat : laterals_) lat->collect(params_);
    for (auto& m : merges_) {
        if (m) m->collect(params_);
    }
    for (auto& h : heads_) h->collect(params_);
    final_->collect(params_);
    // Trainable first so optimizer state and checkpoints keep a stable order.
    std::stable_partition(params_.begin(), params_.end(), [](const Parameter* p) { return p->trainable(); });
}

std::vector<Parameter*> Model::trainable_parameters() const
{
    std::vector<Parameter*> out;
    for (Parameter* p : params_) {
        if (p->trainable()) out.push_back(p);
    }
    return out;
}

Parameter* Model::find(const std::string& name) const
{
    for (Parameter* p : params_) {
        if (p->name() == name) return p;
    }
    return nullptr;
}

std::vector<int> Model::encoder_widths() const
{
    std::vector<int> out;
    for (int l = spec_.max_level; l >= spec_.min_level; --l) out.push_back(spec_.encoder_channels(l));
    return out;
}

void Model::note(const MeshSignal& s)
{
    trace_.emplace_back(s.level(), s.num_vertices());
#ifndef NDEBUG
    if (s.num_vertices() != vertex_count(s.level())) {
        throw ShapeError("intermediate signal inconsistent with its level");
    }
#endif
}

MeshSignal Model::forward(const MeshSignal& x, Mode mode)
{
    if (x.level() != spec_.max_level || x.channels() != static_cast<std::size_t>(spec_.in_channels)) {
        throw ShapeError("model expects level " + std::to_string(spec_.max_level) + " input with " +
                         std::to_string(spec_.in_channels) + " channels, got level " +
                         std::to_string(x.level()) + " with " + std::to_string(x.channels()));
    }
    trace_.clear();
    const int lo = spec_.min_level;
    const int hi = spec_.max_level;
    const auto levels = static_cast<std::size_t>(hi - lo + 1);

    std::vector<MeshSignal> enc(levels);
    enc[hi - lo] = stem_->forward(x, mode);
    note(enc[hi - lo]);
    for (std::size_t k = 0; k < downs_.size(); ++k) {
        const int l = hi - static_cast<int>(k);
        enc[l - 1 - lo] = downs_[k]->forward(enc[l - lo], mode);
        note(enc[l - 1 - lo]);
    }

    MeshSignal pyramid = laterals_[0]->forward(enc[0], mode);
    MeshSignal sum = [&] {
        MeshSignal h = heads_[0]->forward(pyramid, mode);
        note(h);
        return h;
    }();
    for (int l = lo + 1; l <= hi; ++l) {
        MeshSignal merged = td_up_[l - lo]->forward(pyramid, mode);
        merged += laterals_[l - lo]->forward(enc[l - lo], mode);
        pyramid = merges_[l - lo] ? merges_[l - lo]->forward(merged, mode) : std::move(merged);
        note(pyramid);
        MeshSignal h = heads_[l - lo]->forward(pyramid, mode);
        note(h);
        sum += h;
    }
    MeshSignal logits = final_->forward(sum, mode);
    note(logits);
    return logits;
}

MeshSignal Model::backward(const MeshSignal& grad_logits)
{
    const int lo = spec_.min_level;
    const int hi = spec_.max_level;
    const auto levels = static_cast<std::size_t>(hi - lo + 1);

    const MeshSignal g_sum = final_->backward(grad_logits);
    std::vector<MeshSignal> g_enc(levels);
    // Walk the pyramid from the top; g_pyr carries the gradient of the
    // pyramid map at level l (after the optional merge block).
    MeshSignal g_pyr = heads_[hi - lo]->backward(g_sum);
    for (int l = hi; l > lo; --l) {
        const MeshSignal g_merged = merges_[l - lo] ? merges_[l - lo]->backward(g_pyr) : g_pyr;
        g_enc[l - lo] = laterals_[l - lo]->backward(g_merged);
        g_pyr = td_up_[l - lo]->backward(g_merged);
        g_pyr += heads_[l - 1 - lo]->backward(g_sum);
    }
    g_enc[0] = laterals_[0]->backward(g_pyr);

    // Encoder: down block k maps level hi-k to hi-k-1.
    for (std::size_t k = downs_.size(); k-- > 0;) {
        const int l = hi - static_cast<int>(k);
        g_enc[l - lo] += downs_[k]->backward(g_enc[l - 1 - lo]);
    }
    return stem_->backward(g_enc[hi - lo]);
}

} // namespace s2fpn
